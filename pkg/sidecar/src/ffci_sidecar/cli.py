"""Sidecar command line: serve the protocol, fine-tune the pair classifier,
and export fixture caches."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from ffci_sidecar.export import export_fixture_cache
from ffci_sidecar.models import HfEngine, SyntheticEngine

# The pretrained models of record: served id -> (checkpoint, architecture kind).
DEFAULT_MODEL_MAP = {
    "bert-base-uncased": {"path": "bert-base-uncased", "kind": "encoder"},
    "bert-large-uncased": {"path": "bert-large-uncased", "kind": "encoder"},
    "roberta-base": {"path": "roberta-base", "kind": "encoder"},
    "roberta-large": {"path": "roberta-large", "kind": "encoder"},
    "roberta-large-mnli": {"path": "roberta-large-mnli", "kind": "encoder"},
    "xlnet-base-cased": {"path": "xlnet-base-cased", "kind": "encoder"},
    "xlnet-large-cased": {"path": "xlnet-large-cased", "kind": "encoder"},
    "gpt2": {"path": "gpt2", "kind": "decoder"},
    "gpt2-medium": {"path": "gpt2-medium", "kind": "decoder"},
    "gpt2-large": {"path": "gpt2-large", "kind": "decoder"},
    "gpt2-xl": {"path": "gpt2-xl", "kind": "decoder"},
    "t5-small": {"path": "t5-small", "kind": "encoder_decoder"},
    "t5-base": {"path": "t5-base", "kind": "encoder_decoder"},
    "t5-large": {"path": "t5-large", "kind": "encoder_decoder"},
    "bart-base": {"path": "facebook/bart-base", "kind": "encoder_decoder"},
    "bart-large": {"path": "facebook/bart-large", "kind": "encoder_decoder"},
    "pegasus-xsum": {"path": "google/pegasus-xsum", "kind": "encoder_decoder"},
    "pegasus-cnn_dailymail": {"path": "google/pegasus-cnn_dailymail",
                              "kind": "encoder_decoder"},
    "pegasus-large": {"path": "google/pegasus-large", "kind": "encoder_decoder"},
}


def build_engine(engine: str, models: str | None, nsp_checkpoint: str | None,
                 device: str):
    if engine == "synthetic":
        return SyntheticEngine()
    model_map = dict(DEFAULT_MODEL_MAP)
    if models:
        model_map.update(json.loads(Path(models).read_text(encoding="utf-8")))
    nsp_map = {}
    if nsp_checkpoint:
        nsp_map["bert-base-uncased"] = nsp_checkpoint
        nsp_map["nsp"] = nsp_checkpoint
    return HfEngine(model_map, nsp_map=nsp_map, device=device)


@click.group()
def cli():
    """Model-serving sidecar for the summarization evaluation toolkit."""


@cli.command("serve")
@click.option("--engine", default="hf", type=click.Choice(["hf", "synthetic"]),
              show_default=True)
@click.option("--models", default=None,
              help="JSON file mapping served model ids to checkpoint paths.")
@click.option("--nsp-checkpoint", default=None,
              help="Fine-tuned pair-classifier checkpoint directory.")
@click.option("--device", default="cpu", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8300, show_default=True, type=int)
def serve_cmd(engine, models, nsp_checkpoint, device, host, port):
    """Run the embedding/NSP/segmentation service."""
    from ffci_sidecar.server import serve

    serve(build_engine(engine, models, nsp_checkpoint, device), host, port)


@cli.command("finetune")
@click.option("--pairs", required=True, help="NSP-pair JSONL export.")
@click.option("--base-model", default="bert-base-uncased", show_default=True)
@click.option("--out", required=True, help="Checkpoint + metrics directory.")
@click.option("--learning-rate", default=5e-5, show_default=True, type=float)
@click.option("--batch-size", default=40, show_default=True, type=int)
@click.option("--max-epochs", default=20, show_default=True, type=int)
@click.option("--patience", default=5, show_default=True, type=int)
@click.option("--seed", default=1, show_default=True, type=int)
@click.option("--device", default="cpu", show_default=True)
def finetune_cmd(pairs, base_model, out, learning_rate, batch_size, max_epochs,
                 patience, seed, device):
    """Fine-tune the next-sentence classifier on exported pairs."""
    from ffci_sidecar.finetune import FineTuneConfig, fine_tune_nsp

    config = FineTuneConfig(learning_rate=learning_rate, batch_size=batch_size,
                            max_epochs=max_epochs, patience=patience, seed=seed,
                            device=device)
    metrics = fine_tune_nsp(pairs, base_model, out, config)
    click.echo(json.dumps({k: metrics[k] for k in
                           ("dev_f1", "test_f1", "epochs_run")}, indent=2))


@cli.command("export-cache")
@click.option("--requests", "requests_file", required=True,
              help="JSON list of protocol requests to serve and store.")
@click.option("--cache-dir", required=True)
@click.option("--engine", default="hf", type=click.Choice(["hf", "synthetic"]),
              show_default=True)
@click.option("--models", default=None)
@click.option("--nsp-checkpoint", default=None)
@click.option("--device", default="cpu", show_default=True)
def export_cache_cmd(requests_file, cache_dir, engine, models, nsp_checkpoint,
                     device):
    """Write provider-format cache entries for a declared request list."""
    manifest = export_fixture_cache(
        build_engine(engine, models, nsp_checkpoint, device),
        requests_file, cache_dir)
    click.echo(f"wrote {len(manifest['written'])} of {manifest['requested']} entries")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except (ValueError, OSError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
