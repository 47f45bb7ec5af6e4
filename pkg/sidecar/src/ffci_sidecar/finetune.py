"""Fine-tune a pair classifier for next-sentence scoring.

Consumes the evaluation toolkit's NSP-pair JSONL export (first, second,
label, negative_type).  The pooled [CLS] encoding feeds the classification
head; label 1 means "second follows first".  Defaults: learning rate 5e-5,
batch size 40, at most 20 epochs, an 80:10:10 split, and early stopping with
patience 5 on the dev F1.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional


@dataclass(frozen=True)
class FineTuneConfig:
    learning_rate: float = 5e-5
    batch_size: int = 40
    max_epochs: int = 20
    patience: int = 5
    seed: int = 1
    max_length: int = 128
    device: str = "cpu"


def load_pairs(pairs_file) -> list[dict]:
    pairs = []
    with open(pairs_file, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                pairs.append({"first": obj["first"], "second": obj["second"],
                              "label": 1 if obj["label"] == "positive" else 0})
    if not pairs:
        raise ValueError(f"{pairs_file} contains no pairs")
    return pairs


def split_pairs(pairs, seed: int):
    """Deterministic 80:10:10 train/dev/test split."""
    order = list(range(len(pairs)))
    random.Random(seed).shuffle(order)
    n = len(pairs)
    n_train = int(0.8 * n)
    n_dev = int(0.1 * n)
    train = [pairs[i] for i in order[:n_train]]
    dev = [pairs[i] for i in order[n_train:n_train + n_dev]]
    test = [pairs[i] for i in order[n_train + n_dev:]]
    return train, dev, test


def binary_f1(labels, predictions) -> float:
    tp = sum(1 for y, p in zip(labels, predictions) if y == 1 and p == 1)
    fp = sum(1 for y, p in zip(labels, predictions) if y == 0 and p == 1)
    fn = sum(1 for y, p in zip(labels, predictions) if y == 1 and p == 0)
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def fine_tune_nsp(pairs_file, base_model, out_dir,
                  config: Optional[FineTuneConfig] = None) -> dict:
    """Train the classifier and write checkpoint + metrics; returns metrics."""
    import torch
    from torch.utils.data import DataLoader
    from transformers import AutoModelForSequenceClassification, AutoTokenizer

    config = config or FineTuneConfig()
    torch.manual_seed(config.seed)
    random.seed(config.seed)

    pairs = load_pairs(pairs_file)
    train, dev, test = split_pairs(pairs, config.seed)
    if not train or not dev:
        raise ValueError(f"too few pairs to split: {len(pairs)}")

    tokenizer = AutoTokenizer.from_pretrained(base_model)
    model = AutoModelForSequenceClassification.from_pretrained(base_model,
                                                               num_labels=2)
    model.to(config.device)

    def encode_batch(batch):
        encoded = tokenizer([p["first"] for p in batch],
                            [p["second"] for p in batch],
                            truncation=True, padding=True,
                            max_length=config.max_length, return_tensors="pt")
        labels = torch.tensor([p["label"] for p in batch])
        return {k: v.to(config.device) for k, v in encoded.items()}, \
            labels.to(config.device)

    def evaluate(split) -> float:
        model.eval()
        labels, predictions = [], []
        with torch.no_grad():
            for start in range(0, len(split), config.batch_size):
                batch = split[start:start + config.batch_size]
                encoded, ys = encode_batch(batch)
                logits = model(**encoded).logits
                predictions.extend(logits.argmax(dim=-1).tolist())
                labels.extend(ys.tolist())
        return binary_f1(labels, predictions)

    optimizer = torch.optim.AdamW(model.parameters(), lr=config.learning_rate)
    loader = DataLoader(train, batch_size=config.batch_size, shuffle=True,
                        collate_fn=lambda b: b,
                        generator=torch.Generator().manual_seed(config.seed))

    out_dir = Path(out_dir)
    checkpoint_dir = out_dir / "checkpoint"
    best_dev_f1 = -1.0
    epochs_without_improvement = 0
    epochs_run = 0

    for epoch in range(config.max_epochs):
        model.train()
        for batch in loader:
            encoded, labels = encode_batch(batch)
            loss = model(**encoded, labels=labels).loss
            loss.backward()
            optimizer.step()
            optimizer.zero_grad()
        epochs_run = epoch + 1
        dev_f1 = evaluate(dev)
        if dev_f1 > best_dev_f1:
            best_dev_f1 = dev_f1
            epochs_without_improvement = 0
            model.save_pretrained(checkpoint_dir)
            tokenizer.save_pretrained(checkpoint_dir)
        else:
            epochs_without_improvement += 1
            if epochs_without_improvement >= config.patience:
                break

    # test with the best checkpoint
    from transformers import AutoModelForSequenceClassification as Cls
    model = Cls.from_pretrained(checkpoint_dir)
    model.to(config.device)
    test_f1 = evaluate(test) if test else None

    metrics = {
        "dev_f1": best_dev_f1,
        "test_f1": test_f1,
        "epochs_run": epochs_run,
        "n_train": len(train),
        "n_dev": len(dev),
        "n_test": len(test),
        "config": asdict(config),
        "base_model": str(base_model),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n",
                                          encoding="utf-8")
    return metrics
