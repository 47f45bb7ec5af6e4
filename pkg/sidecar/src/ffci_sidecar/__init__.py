"""Model-serving sidecar: transformer embeddings, NSP probabilities,
segmentation, and entities over HTTP, plus the pair-classifier fine-tuning
script and the fixture-cache exporter."""

from ffci_sidecar.export import export_fixture_cache, request_key
from ffci_sidecar.finetune import FineTuneConfig, fine_tune_nsp
from ffci_sidecar.models import (LAYER_CONVENTION, HfEngine, ServedModel,
                                 SyntheticEngine)
from ffci_sidecar.server import make_app, serve

__version__ = "0.1.0"

__all__ = [
    "FineTuneConfig", "HfEngine", "LAYER_CONVENTION", "ServedModel",
    "SyntheticEngine", "export_fixture_cache", "fine_tune_nsp", "make_app",
    "request_key", "serve",
]
