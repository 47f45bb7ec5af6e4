"""Model engines behind the serving endpoints.

Two engines implement the same surface: a transformers-backed one for real
checkpoints and a hash-seeded synthetic one for offline tests and fixture
generation.  Forward passes are serialized behind a per-model lock to bound
memory; everything runs in eval mode with gradients off so repeated requests
return identical vectors.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

LAYER_CONVENTION = "hidden0"  # 0 = embedding output, 1..L = block outputs

KINDS = ("encoder", "decoder", "encoder_decoder")


class UnknownModel(KeyError):
    pass


class LayerOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class ServedModel:
    """One model as exposed over the protocol.

    For encoder-decoder architectures only the encoder stack is served, so
    ``layer_count`` is the encoder block count.
    """

    model_id: str
    kind: str
    layer_count: int
    dim: int

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.layer_count < 1 or self.dim < 1:
            raise ValueError("layer_count and dim must be positive")

    def check_layer(self, layer: int) -> None:
        if not 0 <= layer <= self.layer_count:
            raise LayerOutOfRange(
                f"layer {layer} out of range for {self.model_id!r} "
                f"(valid 0..{self.layer_count})")


_SENTENCE_RE = re.compile(r"[^.!?]*[.!?]+[\"')\]]*|[^.!?]+$")


def rule_based_sentence_spans(text: str) -> list[tuple[int, int]]:
    """Terminator-based splitter used when no discourse model is loaded."""
    spans = []
    for match in _SENTENCE_RE.finditer(text):
        a, b = match.start(), match.end()
        while a < b and text[a].isspace():
            a += 1
        while b > a and text[b - 1].isspace():
            b -= 1
        if a < b:
            spans.append((a, b))
    return spans


def capitalized_entity_runs(text: str) -> list[str]:
    entities, run = [], []
    for word in text.split():
        core = word.strip("\"'().,;:!?")
        if core and core[0].isupper() and core.replace("-", "").isalpha():
            run.append(core)
        else:
            if run:
                entities.append(" ".join(run))
            run = []
    if run:
        entities.append(" ".join(run))
    return entities


class SyntheticEngine:
    """Deterministic hash-seeded stand-in for the transformer stack.

    The default layer count is deep enough for every recommended layer of the
    served-model registry, so the stand-in can answer any default evaluation.
    """

    def __init__(self, dim: int = 32, layer_count: int = 48):
        self.dim = dim
        self.layer_count = layer_count

    def model_info(self, model_id: str) -> ServedModel:
        return ServedModel(model_id, "encoder", self.layer_count, self.dim)

    @staticmethod
    def _seed(*parts) -> int:
        digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
        return int.from_bytes(digest[:8], "little")

    def token_embeddings(self, model_id: str, layer: int, texts: Sequence[str],
                         include_special: bool = False):
        self.model_info(model_id).check_layer(layer)
        out = []
        for text in texts:
            tokens = text.strip().lower().split()
            if include_special:
                tokens = ["[CLS]", *tokens, "[SEP]"]
            vectors = np.stack([
                np.random.default_rng(
                    self._seed("token", model_id, layer, tok)).standard_normal(self.dim)
                for tok in tokens]) if tokens else np.zeros((0, self.dim))
            out.append((tokens, vectors))
        return out

    def sts_embeddings(self, model_id: str, texts: Sequence[str]) -> np.ndarray:
        rows = [np.random.default_rng(
            self._seed("sts", model_id, t.strip())).standard_normal(self.dim)
            for t in texts]
        return np.stack(rows) if rows else np.zeros((0, self.dim))

    def nsp_probabilities(self, model_id: str,
                          pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [float(np.random.default_rng(
            self._seed("nsp", model_id, a.strip(), b.strip())).uniform())
            for a, b in pairs]

    def segments(self, model_id: str, text: str, granularity: str):
        return rule_based_sentence_spans(text)

    def entities(self, model_id: str, text: str) -> list[str]:
        return capitalized_entity_runs(text)


def _served_model_from_config(model_id: str, kind: str, config) -> ServedModel:
    if kind == "encoder_decoder":
        layers = getattr(config, "num_layers", None) or \
            getattr(config, "encoder_layers", None)
        dim = getattr(config, "d_model", None) or config.hidden_size
    else:
        layers = getattr(config, "num_hidden_layers", None) or \
            getattr(config, "n_layer", None)
        dim = getattr(config, "hidden_size", None) or getattr(config, "n_embd")
    if layers is None:
        raise ValueError(f"cannot determine layer count for {model_id!r}")
    return ServedModel(model_id, kind, int(layers), int(dim))


class HfEngine:
    """Transformers-backed engine.

    ``model_map`` maps served model ids to {"path": checkpoint path or hub id,
    "kind": encoder|decoder|encoder_decoder}.  ``nsp_map`` maps ids of
    fine-tuned pair classifiers, ``sts_map`` ids of sentence encoders whose
    mean-pooled last layer provides segment embeddings.
    """

    def __init__(self, model_map: dict, nsp_map: Optional[dict] = None,
                 sts_map: Optional[dict] = None, device: str = "cpu"):
        import torch  # deferred so the synthetic engine works without torch

        self._torch = torch
        torch.manual_seed(0)
        self.model_map = model_map
        self.nsp_map = nsp_map or {}
        self.sts_map = sts_map or {}
        self.device = device
        self._models: dict[str, tuple] = {}
        self._nsp_models: dict[str, tuple] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock(self, model_id: str) -> threading.Lock:
        with self._locks_guard:
            if model_id not in self._locks:
                self._locks[model_id] = threading.Lock()
            return self._locks[model_id]

    def _load(self, model_id: str):
        if model_id in self._models:
            return self._models[model_id]
        if model_id not in self.model_map:
            raise UnknownModel(model_id)
        from transformers import AutoModel, AutoTokenizer

        spec = self.model_map[model_id]
        tokenizer = AutoTokenizer.from_pretrained(spec["path"])
        model = AutoModel.from_pretrained(spec["path"])
        model.eval()
        model.to(self.device)
        served = _served_model_from_config(model_id, spec["kind"], model.config)
        self._models[model_id] = (tokenizer, model, served)
        return self._models[model_id]

    def model_info(self, model_id: str) -> ServedModel:
        if model_id in self.nsp_map or model_id in self.sts_map:
            # pair classifiers and sentence encoders are not layer-addressed
            return ServedModel(model_id, "encoder", 1, 1)
        return self._load(model_id)[2]

    def token_embeddings(self, model_id: str, layer: int, texts: Sequence[str],
                         include_special: bool = False):
        torch = self._torch
        tokenizer, model, served = self._load(model_id)
        served.check_layer(layer)
        out = []
        with self._lock(model_id), torch.no_grad():
            for text in texts:
                encoded = tokenizer(text, return_tensors="pt", truncation=True)
                encoded = {k: v.to(self.device) for k, v in encoded.items()}
                if served.kind == "encoder_decoder":
                    encoder = model.get_encoder()
                    states = encoder(**encoded, output_hidden_states=True).hidden_states
                else:
                    states = model(**encoded, output_hidden_states=True).hidden_states
                hidden = states[layer][0]  # hidden0 convention
                ids = encoded["input_ids"][0].tolist()
                tokens = tokenizer.convert_ids_to_tokens(ids)
                if not include_special:
                    special = set(tokenizer.all_special_ids)
                    keep = [i for i, tid in enumerate(ids) if tid not in special]
                    tokens = [tokens[i] for i in keep]
                    hidden = hidden[keep] if keep else hidden[:0]
                out.append((tokens, hidden.cpu().double().numpy()))
        return out

    def sts_embeddings(self, model_id: str, texts: Sequence[str]) -> np.ndarray:
        torch = self._torch
        path = self.sts_map.get(model_id, self.model_map.get(model_id, {}).get("path"))
        if path is None:
            raise UnknownModel(model_id)
        key = f"sts:{model_id}"
        if key not in self._models:
            from transformers import AutoModel, AutoTokenizer
            tokenizer = AutoTokenizer.from_pretrained(path)
            model = AutoModel.from_pretrained(path)
            model.eval()
            model.to(self.device)
            self._models[key] = (tokenizer, model, None)
        tokenizer, model, _ = self._models[key]
        rows = []
        with self._lock(key), torch.no_grad():
            for text in texts:
                encoded = tokenizer(text, return_tensors="pt", truncation=True)
                encoded = {k: v.to(self.device) for k, v in encoded.items()}
                hidden = model(**encoded).last_hidden_state[0]
                rows.append(hidden.mean(dim=0).cpu().double().numpy())
        return np.stack(rows) if rows else np.zeros((0, 1))

    def nsp_probabilities(self, model_id: str,
                          pairs: Sequence[tuple[str, str]]) -> list[float]:
        torch = self._torch
        if model_id not in self.nsp_map:
            raise UnknownModel(model_id)
        if model_id not in self._nsp_models:
            from transformers import AutoModelForSequenceClassification, AutoTokenizer
            path = self.nsp_map[model_id]
            tokenizer = AutoTokenizer.from_pretrained(path)
            model = AutoModelForSequenceClassification.from_pretrained(path)
            model.eval()
            model.to(self.device)
            self._nsp_models[model_id] = (tokenizer, model)
        tokenizer, model = self._nsp_models[model_id]
        probs = []
        with self._lock(f"nsp:{model_id}"), torch.no_grad():
            for first, second in pairs:
                encoded = tokenizer(first, second, return_tensors="pt",
                                    truncation=True)
                encoded = {k: v.to(self.device) for k, v in encoded.items()}
                logits = model(**encoded).logits[0]
                # positive class = label 1 = "second follows first"
                probs.append(float(torch.softmax(logits, dim=-1)[1]))
        return probs

    def segments(self, model_id: str, text: str, granularity: str):
        return rule_based_sentence_spans(text)

    def entities(self, model_id: str, text: str) -> list[str]:
        return capitalized_entity_runs(text)
