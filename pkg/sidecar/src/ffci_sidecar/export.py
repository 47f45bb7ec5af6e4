"""Fixture-cache exporter.

Writes cache entries in the evaluation client's on-disk format so its test
suite can run cache-only.  The naming and layout here follow the shared
protocol: filename = hex SHA-256 of the canonical JSON of the normalized
request (text fields stripped), content = one sorted-keys JSON header line
plus little-endian float32 payload for vector kinds.  A frozen golden list of
request/key pairs keeps the two implementations honest without either
importing the other.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ffci_sidecar.models import LAYER_CONVENTION


def normalize_request(request: dict) -> dict:
    out = dict(request)
    for key in ("text", "first", "second"):
        if key in out:
            out[key] = out[key].strip()
    return out


def request_key(request: dict) -> str:
    canonical = json.dumps(normalize_request(request), sort_keys=True,
                           ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _normalize_rows(vectors: np.ndarray) -> np.ndarray:
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors.reshape(1, -1)
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.where(norms == 0.0, 1.0, norms)


def _write_entry(cache_dir, key: str, header: dict, payload: bytes = b"") -> Path:
    path = Path(cache_dir) / key
    path.parent.mkdir(parents=True, exist_ok=True)
    line = json.dumps(header, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":")).encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(line + b"\n" + payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def export_one(engine, request: dict, cache_dir) -> str:
    """Serve one request and persist it; returns the cache key."""
    kind = request["kind"]
    key = request_key(request)
    if kind == "token_embeddings":
        model, layer = request["model"], int(request["layer"])
        include_special = bool(request.get("include_special", False))
        (tokens, vectors), = engine.token_embeddings(
            model, layer, [request["text"]], include_special)
        arr = _normalize_rows(vectors) if len(tokens) else np.zeros((0, 0))
        header = {"kind": kind, "model": model, "layer": layer,
                  "layer_convention": LAYER_CONVENTION,
                  "dim": int(arr.shape[1]) if arr.ndim == 2 else 0,
                  "tokens": list(tokens)}
        payload = np.ascontiguousarray(arr, dtype="<f4").tobytes()
    elif kind == "nsp":
        model = request["model"]
        prob, = engine.nsp_probabilities(model,
                                         [(request["first"], request["second"])])
        header = {"kind": kind, "model": model}
        payload = np.asarray([prob], dtype="<f4").tobytes()
    elif kind == "sts_embeddings":
        model = request["model"]
        vec = _normalize_rows(engine.sts_embeddings(model, [request["text"]]))[0]
        header = {"kind": kind, "model": model, "dim": int(vec.shape[0])}
        payload = np.ascontiguousarray(vec, dtype="<f4").tobytes()
    elif kind == "segments":
        model = request["model"]
        spans = engine.segments(model, request["text"], request["granularity"])
        header = {"kind": kind, "model": model,
                  "granularity": request["granularity"],
                  "spans": [[int(a), int(b)] for a, b in spans]}
        payload = b""
    elif kind == "entities":
        model = request["model"]
        header = {"kind": kind, "model": model,
                  "entities": engine.entities(model, request["text"])}
        payload = b""
    else:
        raise ValueError(f"unknown request kind {kind!r}")
    _write_entry(cache_dir, key, header, payload)
    return key


def export_fixture_cache(engine, requests_file, cache_dir) -> dict:
    """Serve every request in the list and write the cache entries.

    Returns the manifest (also written to ``manifest.json`` in the cache
    directory).  Any failed request aborts after recording what was written.
    """
    requests = json.loads(Path(requests_file).read_text(encoding="utf-8"))
    if not isinstance(requests, list):
        raise ValueError("requests file must contain a JSON list")
    written: list[str] = []
    manifest_path = Path(cache_dir) / "manifest.json"
    try:
        for i, request in enumerate(requests):
            try:
                written.append(export_one(engine, request, cache_dir))
            except Exception as exc:
                raise RuntimeError(
                    f"request {i} ({request.get('kind')}) failed: {exc}") from exc
    finally:
        manifest = {"written": written, "requested": len(requests)}
        manifest_path.parent.mkdir(parents=True, exist_ok=True)
        manifest_path.write_text(json.dumps(manifest, indent=2) + "\n",
                                 encoding="utf-8")
    return manifest
