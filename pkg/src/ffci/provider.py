"""Client for the model-serving sidecar, with a file-backed cache.

Every request is content-addressed: the cache filename is the SHA-256 of the
normalized request, so identical requests hit the same entry regardless of
which process wrote it.  In cache-only mode no network call is ever made and
a miss is an error, which keeps the offline test suite honest.

Cache entry layout: one UTF-8 JSON header line (sorted keys), then the raw
payload as little-endian float32 values for vector-valued kinds.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import requests

from ffci import corpus
from ffci.embed import EmbeddingMatrix, normalize_rows
from ffci.errors import (CacheMissError, LayerOutOfRangeError, ProtocolError,
                         ProviderUnavailableError, UnknownModelError)

LAYER_CONVENTION = "hidden0"  # layer 0 = embedding output, 1..L = block outputs

CACHE_ONLY = "cache-only"

# The served pre-trained models: id -> (kind, transformer block count).
# Valid layer indices run 0..block_count inclusive under the hidden0
# convention; encoder-decoder models serve encoder layers only.
MODEL_REGISTRY: dict[str, tuple[str, int]] = {
    "bert-base-uncased": ("encoder", 12),
    "bert-large-uncased": ("encoder", 24),
    "roberta-base": ("encoder", 12),
    "roberta-large": ("encoder", 24),
    "roberta-large-mnli": ("encoder", 24),
    "xlnet-base-cased": ("encoder", 12),
    "xlnet-large-cased": ("encoder", 24),
    "gpt2": ("decoder", 12),
    "gpt2-medium": ("decoder", 24),
    "gpt2-large": ("decoder", 36),
    "gpt2-xl": ("decoder", 48),
    "t5-small": ("encoder_decoder", 6),
    "t5-base": ("encoder_decoder", 12),
    "t5-large": ("encoder_decoder", 24),
    "bart-base": ("encoder_decoder", 6),
    "bart-large": ("encoder_decoder", 12),
    "pegasus-xsum": ("encoder_decoder", 16),
    "pegasus-cnn_dailymail": ("encoder_decoder", 16),
    "pegasus-large": ("encoder_decoder", 16),
}


def register_model(model_id: str, kind: str, layer_count: int) -> None:
    """Add a model to the registry (mainly for fixtures and local models)."""
    if kind not in ("encoder", "decoder", "encoder_decoder"):
        raise ValueError(f"unknown model kind {kind!r}")
    MODEL_REGISTRY[model_id] = (kind, int(layer_count))


def layer_count(model_id: str) -> int:
    try:
        return MODEL_REGISTRY[model_id][1]
    except KeyError:
        raise UnknownModelError(f"unknown model {model_id!r}") from None


def _check_layer(model_id: str, layer: int) -> None:
    count = layer_count(model_id)
    if not 0 <= layer <= count:
        raise LayerOutOfRangeError(
            f"layer {layer} out of range for {model_id!r} (valid 0..{count})")


def normalize_request(request: dict) -> dict:
    """Strip text fields so whitespace-padded requests share a cache key."""
    out = dict(request)
    for key in ("text", "first", "second"):
        if key in out:
            out[key] = out[key].strip()
    return out


def request_key(request: dict) -> str:
    """Hex SHA-256 of the canonical JSON encoding of the normalized request."""
    canonical = json.dumps(normalize_request(request), sort_keys=True,
                           ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _encode_entry(header: dict, payload: bytes = b"") -> bytes:
    line = json.dumps(header, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")
    return line + b"\n" + payload


def _decode_entry(data: bytes) -> tuple[dict, bytes]:
    line, _, payload = data.partition(b"\n")
    return json.loads(line.decode("utf-8")), payload


def _floats_to_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()


def _bytes_to_floats(payload: bytes) -> np.ndarray:
    return np.frombuffer(payload, dtype="<f4")


# ---------------------------------------------------------------------------
# cache writers, shared by the client and the fixture exporter
# ---------------------------------------------------------------------------

def store_token_embeddings(cache_dir, model_id: str, layer: int, text: str,
                           tokens: Sequence[str], vectors,
                           include_special: bool = False) -> Path:
    """Normalize and persist one token-embedding matrix; returns the file path."""
    arr = normalize_rows(np.asarray(vectors, dtype=np.float64)) if len(tokens) \
        else np.zeros((0, 0))
    request = {"kind": "token_embeddings", "model": model_id, "layer": int(layer),
               "text": text, "include_special": bool(include_special)}
    header = {
        "kind": "token_embeddings",
        "model": model_id,
        "layer": int(layer),
        "layer_convention": LAYER_CONVENTION,
        "dim": int(arr.shape[1]) if arr.ndim == 2 else 0,
        "tokens": list(tokens),
    }
    path = Path(cache_dir) / request_key(request)
    _atomic_write(path, _encode_entry(header, _floats_to_bytes(arr)))
    return path


def store_nsp_probability(cache_dir, model_id: str, first: str, second: str,
                          prob: float) -> Path:
    request = {"kind": "nsp", "model": model_id, "first": first, "second": second}
    header = {"kind": "nsp", "model": model_id}
    payload = _floats_to_bytes(np.asarray([prob], dtype=np.float64))
    path = Path(cache_dir) / request_key(request)
    _atomic_write(path, _encode_entry(header, payload))
    return path


def store_sts_embedding(cache_dir, model_id: str, text: str, vector) -> Path:
    vec = normalize_rows(np.asarray(vector, dtype=np.float64))[0]
    request = {"kind": "sts_embeddings", "model": model_id, "text": text}
    header = {"kind": "sts_embeddings", "model": model_id, "dim": int(vec.shape[0])}
    path = Path(cache_dir) / request_key(request)
    _atomic_write(path, _encode_entry(header, _floats_to_bytes(vec)))
    return path


def store_segments(cache_dir, model_id: str, text: str, granularity: str,
                   spans: Sequence[tuple[int, int]]) -> Path:
    request = {"kind": "segments", "model": model_id, "text": text,
               "granularity": granularity}
    header = {"kind": "segments", "model": model_id, "granularity": granularity,
              "spans": [[int(a), int(b)] for a, b in spans]}
    path = Path(cache_dir) / request_key(request)
    _atomic_write(path, _encode_entry(header))
    return path


def store_entities(cache_dir, model_id: str, text: str,
                   entities: Sequence[str]) -> Path:
    request = {"kind": "entities", "model": model_id, "text": text}
    header = {"kind": "entities", "model": model_id, "entities": list(entities)}
    path = Path(cache_dir) / request_key(request)
    _atomic_write(path, _encode_entry(header))
    return path


@dataclass(frozen=True)
class ProviderConfig:
    """Where embeddings come from and where they are cached."""

    endpoint: str = CACHE_ONLY
    cache_dir: str = ".ffci-cache"
    model_id: str = "roberta-base"
    timeout: float = 60.0
    max_batch: int = 32

    def __post_init__(self):
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")

    @property
    def cache_only(self) -> bool:
        return self.endpoint == CACHE_ONLY


class ProviderClient:
    """Fetches embeddings, probabilities, segments, and entities.

    Cache hits return the stored payload bit-identically; misses go to the
    endpoint (never in cache-only mode), are normalized, stored, and returned.
    Batched calls preserve input order.
    """

    def __init__(self, config: ProviderConfig):
        self.config = config
        self._cache_dir = Path(config.cache_dir)

    # -- cache plumbing -----------------------------------------------------

    def _read_entry(self, request: dict) -> Optional[tuple[dict, bytes]]:
        path = self._cache_dir / request_key(request)
        try:
            data = path.read_bytes()
        except FileNotFoundError:
            return None
        return _decode_entry(data)

    def _post(self, route: str, body: dict) -> dict:
        if self.config.cache_only:
            raise CacheMissError(
                f"cache miss for {route} in cache-only mode: "
                f"{json.dumps(body, ensure_ascii=False)[:200]}")
        url = self.config.endpoint.rstrip("/") + route
        try:
            resp = requests.post(url, json=body, timeout=self.config.timeout)
        except (requests.ConnectionError, requests.Timeout) as exc:
            raise ProviderUnavailableError(f"provider at {url} unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ProtocolError(f"{url} returned {resp.status_code}: {resp.text[:300]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{url} returned non-JSON body") from exc

    # -- token embeddings ---------------------------------------------------

    def fetch_token_embeddings(self, texts: Sequence[str], model_id: Optional[str] = None,
                               layer: int = 0, include_special: bool = False,
                               ) -> list[EmbeddingMatrix]:
        model_id = model_id or self.config.model_id
        _check_layer(model_id, layer)
        results: list[Optional[EmbeddingMatrix]] = [None] * len(texts)
        misses: list[int] = []
        for i, text in enumerate(texts):
            request = {"kind": "token_embeddings", "model": model_id,
                       "layer": layer, "text": text, "include_special": include_special}
            entry = self._read_entry(request)
            if entry is None:
                misses.append(i)
                continue
            header, payload = entry
            vectors = _bytes_to_floats(payload)
            dim = header["dim"]
            n = len(header["tokens"])
            results[i] = EmbeddingMatrix(
                model_id, layer, tuple(header["tokens"]),
                vectors.reshape(n, dim).astype(np.float64) if n else np.zeros((0, dim)))

        for start in range(0, len(misses), self.config.max_batch):
            batch = misses[start:start + self.config.max_batch]
            body = {"model": model_id, "layer": layer,
                    "texts": [texts[i].strip() for i in batch],
                    "include_special": include_special}
            data = self._post("/v1/token_embeddings", body)
            if data.get("layer_convention") != LAYER_CONVENTION:
                raise ProtocolError(
                    f"layer convention mismatch: expected {LAYER_CONVENTION!r}, "
                    f"got {data.get('layer_convention')!r}")
            items = data.get("items")
            if not isinstance(items, list) or len(items) != len(batch):
                raise ProtocolError(
                    f"expected {len(batch)} items, got "
                    f"{len(items) if isinstance(items, list) else type(items)}")
            for i, item in zip(batch, items):
                tokens = item["tokens"]
                vectors = np.asarray(item["vectors"], dtype=np.float64)
                if len(tokens) != (vectors.shape[0] if vectors.ndim == 2 else 0):
                    raise ProtocolError(f"token/vector count mismatch for text {i}")
                store_token_embeddings(self._cache_dir, model_id, layer, texts[i],
                                       tokens, vectors, include_special)
                entry = self._read_entry({"kind": "token_embeddings", "model": model_id,
                                          "layer": layer, "text": texts[i],
                                          "include_special": include_special})
                header, payload = entry
                stored = _bytes_to_floats(payload)
                n = len(tokens)
                results[i] = EmbeddingMatrix(
                    model_id, layer, tuple(tokens),
                    stored.reshape(n, header["dim"]).astype(np.float64)
                    if n else np.zeros((0, header["dim"])))
        return results  # type: ignore[return-value]

    # -- NSP probabilities ----------------------------------------------------

    def fetch_nsp_probabilities(self, pairs: Sequence[tuple[str, str]],
                                model_id: Optional[str] = None) -> list[float]:
        if not pairs:
            raise ValueError("at least one pair is required")
        model_id = model_id or self.config.model_id
        results: list[Optional[float]] = [None] * len(pairs)
        misses: list[int] = []
        for i, (first, second) in enumerate(pairs):
            request = {"kind": "nsp", "model": model_id, "first": first, "second": second}
            entry = self._read_entry(request)
            if entry is None:
                misses.append(i)
            else:
                results[i] = float(_bytes_to_floats(entry[1])[0])

        for start in range(0, len(misses), self.config.max_batch):
            batch = misses[start:start + self.config.max_batch]
            body = {"model": model_id,
                    "pairs": [{"first": pairs[i][0].strip(),
                               "second": pairs[i][1].strip()} for i in batch]}
            data = self._post("/v1/nsp", body)
            probs = data.get("probs")
            if not isinstance(probs, list) or len(probs) != len(batch):
                raise ProtocolError(f"expected {len(batch)} probs")
            for i, p in zip(batch, probs):
                if not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
                    raise ProtocolError(f"probability {p!r} outside [0, 1] for pair index {i}")
                store_nsp_probability(self._cache_dir, model_id,
                                      pairs[i][0], pairs[i][1], float(p))
                entry = self._read_entry({"kind": "nsp", "model": model_id,
                                          "first": pairs[i][0], "second": pairs[i][1]})
                results[i] = float(_bytes_to_floats(entry[1])[0])
        return results  # type: ignore[return-value]

    # -- STS segment embeddings ----------------------------------------------

    def fetch_sts_embeddings(self, texts: Sequence[str],
                             model_id: Optional[str] = None) -> list[np.ndarray]:
        model_id = model_id or self.config.model_id
        results: list[Optional[np.ndarray]] = [None] * len(texts)
        misses: list[int] = []
        for i, text in enumerate(texts):
            request = {"kind": "sts_embeddings", "model": model_id, "text": text}
            entry = self._read_entry(request)
            if entry is None:
                misses.append(i)
            else:
                results[i] = _bytes_to_floats(entry[1]).astype(np.float64)

        for start in range(0, len(misses), self.config.max_batch):
            batch = misses[start:start + self.config.max_batch]
            body = {"model": model_id, "texts": [texts[i].strip() for i in batch]}
            data = self._post("/v1/sts_embeddings", body)
            vectors = data.get("vectors")
            if not isinstance(vectors, list) or len(vectors) != len(batch):
                raise ProtocolError(f"expected {len(batch)} vectors")
            for i, vec in zip(batch, vectors):
                store_sts_embedding(self._cache_dir, model_id, texts[i], vec)
                entry = self._read_entry({"kind": "sts_embeddings", "model": model_id,
                                          "text": texts[i]})
                results[i] = _bytes_to_floats(entry[1]).astype(np.float64)
        return results  # type: ignore[return-value]

    # -- segmentation and entities --------------------------------------------

    def fetch_segments(self, text: str, granularity: str,
                       model_id: Optional[str] = None) -> list[tuple[int, int]]:
        if granularity not in ("sentence", "edu"):
            raise ValueError(f"unknown granularity {granularity!r}")
        model_id = model_id or self.config.model_id
        request = {"kind": "segments", "model": model_id, "text": text,
                   "granularity": granularity}
        entry = self._read_entry(request)
        if entry is not None:
            return [(a, b) for a, b in entry[0]["spans"]]
        data = self._post("/v1/segments", {"text": text.strip(),
                                           "granularity": granularity,
                                           "model": model_id})
        spans = data.get("spans")
        if not isinstance(spans, list):
            raise ProtocolError("segments response missing spans")
        store_segments(self._cache_dir, model_id, text, granularity, spans)
        return [(int(a), int(b)) for a, b in spans]

    def fetch_entities(self, text: str, model_id: Optional[str] = None) -> list[str]:
        model_id = model_id or self.config.model_id
        request = {"kind": "entities", "model": model_id, "text": text}
        entry = self._read_entry(request)
        if entry is not None:
            return list(entry[0]["entities"])
        data = self._post("/v1/entities", {"text": text.strip(), "model": model_id})
        entities = data.get("entities")
        if not isinstance(entities, list):
            raise ProtocolError("entities response missing entities")
        store_entities(self._cache_dir, model_id, text, entities)
        return [str(e) for e in entities]


def segments_with_fallback(client: Optional[ProviderClient], text: str,
                           granularity: str) -> tuple[list[tuple[int, int]], str]:
    """Provider segmentation with the rule-based splitter as a safety net.

    Returns (spans, provenance); provenance is "provider" or "fallback" so
    callers can record where the segmentation came from.  EDU requests fall
    back to sentence granularity.
    """
    if client is not None:
        try:
            return client.fetch_segments(text, granularity), "provider"
        except (CacheMissError, ProviderUnavailableError):
            pass
    return list(corpus.segment_sentences(text).sentences), "fallback"
