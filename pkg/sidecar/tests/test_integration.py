"""Cross-component checks against the evaluation toolkit.

The toolkit side is exercised strictly through its external surfaces: its
installed CLI and public client API run in subprocesses, talking to this
sidecar over HTTP or reading cache files this sidecar exported.
"""

import json
import shutil
import socket
import subprocess
import sys
import time
from pathlib import Path

import pytest
import requests

from ffci_sidecar.export import export_one
from ffci_sidecar.models import SyntheticEngine

FFCI = shutil.which("ffci")

pytestmark = pytest.mark.skipif(FFCI is None,
                                reason="evaluation toolkit CLI not installed")


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def write_dataset(path: Path):
    rows = [
        {"id": "x1", "article": "The cat sat on the mat. A dog ran home. "
                                "The mat was warm.",
         "reference": "A cat rested on a warm mat. A dog went home.",
         "system_summary": "The cat sat on the mat. A dog ran home.",
         "system_name": "sysA"},
        {"id": "x2", "article": "Alpha beta gamma delta. One two three. "
                                "Second sentence here.",
         "reference": "Alpha beta and one two. Another line here.",
         "system_summary": "Alpha beta gamma. One two three.",
         "system_name": "sysA"},
    ]
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


@pytest.fixture()
def live_sidecar():
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "ffci_sidecar.cli", "serve", "--engine",
         "synthetic", "--port", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
    base = f"http://127.0.0.1:{port}"
    try:
        for _ in range(100):
            try:
                requests.post(f"{base}/v1/entities", json={"text": "ping"},
                              timeout=1)
                break
            except requests.ConnectionError:
                time.sleep(0.1)
        else:
            raise RuntimeError("sidecar did not come up")
        yield base
    finally:
        proc.terminate()
        proc.wait(timeout=10)


class TestServeThenEvaluate:
    def test_networked_eval_then_cache_only_rerun(self, tmp_path, live_sidecar):
        dataset = tmp_path / "data.jsonl"
        write_dataset(dataset)
        cache = tmp_path / "cache"

        online = subprocess.run(
            [FFCI, "eval", "--dataset", str(dataset), "--provider", live_sidecar,
             "--cache-dir", str(cache), "--out", str(tmp_path / "run1")],
            capture_output=True, text=True)
        assert online.returncode == 0, online.stderr
        assert any(cache.iterdir()), "networked run must populate the cache"

        offline = subprocess.run(
            [FFCI, "eval", "--dataset", str(dataset), "--cache-dir", str(cache),
             "--cache-only", "--out", str(tmp_path / "run2")],
            capture_output=True, text=True)
        assert offline.returncode == 0, offline.stderr

        # scores must be unchanged by going through the cache; only the
        # provider-endpoint line of the config snapshot may differ
        for name in ("report.md", "report.csv"):
            assert (tmp_path / "run1" / name).read_bytes() == \
                (tmp_path / "run2" / name).read_bytes()
        rows1 = json.loads((tmp_path / "run1" / "report.json").read_text())["rows"]
        rows2 = json.loads((tmp_path / "run2" / "report.json").read_text())["rows"]
        assert rows1 == rows2


class TestExportedCacheReadableByClient:
    def test_client_reads_exported_entry(self, tmp_path):
        cache = tmp_path / "cache"
        engine = SyntheticEngine(dim=8)
        export_one(engine, {"kind": "token_embeddings", "model": "roberta-base",
                            "layer": 10, "text": "the cat sat",
                            "include_special": False}, cache)
        export_one(engine, {"kind": "nsp", "model": "bert-base-uncased",
                            "first": "a b", "second": "c d"}, cache)

        script = f"""
import json
from ffci.provider import ProviderClient, ProviderConfig
client = ProviderClient(ProviderConfig(endpoint="cache-only",
                                       cache_dir={str(cache)!r}))
matrix, = client.fetch_token_embeddings(["the cat sat"], "roberta-base", 10)
prob, = client.fetch_nsp_probabilities([("a b", "c d")], "bert-base-uncased")
print(json.dumps({{"tokens": list(matrix.tokens), "dim": matrix.dim,
                   "prob": prob}}))
"""
        proc = subprocess.run([sys.executable, "-c", script],
                              capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        result = json.loads(proc.stdout)
        assert result["tokens"] == ["the", "cat", "sat"]
        assert result["dim"] == 8
        assert 0.0 <= result["prob"] <= 1.0
