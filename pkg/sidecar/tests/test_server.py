import numpy as np
import pytest
from fastapi.testclient import TestClient

from ffci_sidecar.models import (HfEngine, LayerOutOfRange, ServedModel,
                                 SyntheticEngine, rule_based_sentence_spans)
from ffci_sidecar.server import make_app


@pytest.fixture()
def synthetic_client():
    return TestClient(make_app(SyntheticEngine(dim=8, layer_count=3)))


class TestServedModel:
    def test_layer_bounds(self):
        model = ServedModel("m", "encoder", 12, 768)
        model.check_layer(0)
        model.check_layer(12)
        with pytest.raises(LayerOutOfRange):
            model.check_layer(13)

    def test_kind_validated(self):
        with pytest.raises(ValueError):
            ServedModel("m", "seq2seq", 4, 16)


class TestTokenEmbeddingsEndpoint:
    def test_convention_echoed(self, synthetic_client):
        resp = synthetic_client.post("/v1/token_embeddings", json={
            "model": "any", "layer": 1, "texts": ["the cat sat"]})
        assert resp.status_code == 200
        body = resp.json()
        assert body["layer_convention"] == "hidden0"
        assert body["dim"] == 8
        assert len(body["items"]) == 1
        assert body["items"][0]["tokens"] == ["the", "cat", "sat"]
        assert len(body["items"][0]["vectors"]) == 3

    def test_layer_out_of_range_is_400(self, synthetic_client):
        resp = synthetic_client.post("/v1/token_embeddings", json={
            "model": "any", "layer": 4, "texts": ["x"]})
        assert resp.status_code == 400
        assert "range" in resp.json()["error"]

    def test_malformed_body_is_400(self, synthetic_client):
        resp = synthetic_client.post("/v1/token_embeddings", json={
            "model": "any", "texts": "not-a-list", "layer": 0})
        assert resp.status_code == 400

    def test_deterministic_repeat(self, synthetic_client):
        body = {"model": "any", "layer": 2, "texts": ["alpha beta gamma"]}
        first = synthetic_client.post("/v1/token_embeddings", json=body).json()
        second = synthetic_client.post("/v1/token_embeddings", json=body).json()
        assert first == second

    def test_batch_order(self, synthetic_client):
        texts = ["one", "two", "three"]
        body = {"model": "any", "layer": 0, "texts": texts}
        items = synthetic_client.post("/v1/token_embeddings", json=body).json()["items"]
        assert [i["tokens"] for i in items] == [["one"], ["two"], ["three"]]


class TestOtherEndpoints:
    def test_nsp_probabilities(self, synthetic_client):
        resp = synthetic_client.post("/v1/nsp", json={
            "model": "any",
            "pairs": [{"first": "a", "second": "b"},
                      {"first": "c", "second": "d"}]})
        probs = resp.json()["probs"]
        assert len(probs) == 2
        assert all(0.0 <= p <= 1.0 for p in probs)

    def test_empty_pairs_rejected(self, synthetic_client):
        resp = synthetic_client.post("/v1/nsp", json={"model": "any", "pairs": []})
        assert resp.status_code == 400

    def test_sts_embeddings(self, synthetic_client):
        resp = synthetic_client.post("/v1/sts_embeddings", json={
            "model": "any", "texts": ["one sentence", "another"]})
        body = resp.json()
        assert body["dim"] == 8
        assert len(body["vectors"]) == 2

    def test_segments(self, synthetic_client):
        resp = synthetic_client.post("/v1/segments", json={
            "text": "A b. C d.", "granularity": "sentence"})
        assert resp.json()["spans"] == [[0, 4], [5, 9]]

    def test_bad_granularity(self, synthetic_client):
        resp = synthetic_client.post("/v1/segments", json={
            "text": "x", "granularity": "paragraph"})
        assert resp.status_code == 400

    def test_entities(self, synthetic_client):
        resp = synthetic_client.post("/v1/entities", json={
            "text": "Alice met Bob Smith in Paris today"})
        assert resp.json()["entities"] == ["Alice", "Bob Smith", "Paris"]


class TestRuleBasedSegments:
    def test_spans_cover_sentences(self):
        spans = rule_based_sentence_spans("First one. Second two! Third?")
        text = "First one. Second two! Third?"
        assert [text[a:b] for a, b in spans] == \
            ["First one.", "Second two!", "Third?"]

    def test_empty(self):
        assert rule_based_sentence_spans("") == []


class TestHfEngine:
    def test_unknown_model_is_404(self, tiny_bert):
        client = TestClient(make_app(HfEngine({})))
        resp = client.post("/v1/token_embeddings", json={
            "model": "missing", "layer": 0, "texts": ["x"]})
        assert resp.status_code == 404

    def test_token_embeddings_shapes(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        info = engine.model_info("tiny")
        assert info.layer_count == 2 and info.dim == 32
        (tokens, vectors), = engine.token_embeddings("tiny", 1, ["the cat sat"])
        assert tokens == ["the", "cat", "sat"]  # specials excluded by default
        assert vectors.shape == (3, 32)

    def test_include_special_keeps_cls_sep(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        (tokens, vectors), = engine.token_embeddings("tiny", 0, ["the cat"],
                                                     include_special=True)
        assert tokens[0] == "[CLS]" and tokens[-1] == "[SEP]"
        assert vectors.shape == (4, 32)

    def test_layer_out_of_range(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        with pytest.raises(LayerOutOfRange):
            engine.token_embeddings("tiny", 3, ["x"])

    def test_deterministic_inference(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        (_, first), = engine.token_embeddings("tiny", 2, ["the dog ran home"])
        (_, second), = engine.token_embeddings("tiny", 2, ["the dog ran home"])
        assert np.array_equal(first, second)

    def test_layers_differ(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        (_, layer0), = engine.token_embeddings("tiny", 0, ["the cat"])
        (_, layer2), = engine.token_embeddings("tiny", 2, ["the cat"])
        assert not np.allclose(layer0, layer2)

    def test_sts_mean_pooling(self, tiny_bert):
        engine = HfEngine({}, sts_map={"sts-tiny": tiny_bert})
        vectors = engine.sts_embeddings("sts-tiny", ["the cat sat", "a dog"])
        assert vectors.shape == (2, 32)

    def test_served_over_http(self, tiny_bert):
        engine = HfEngine({"tiny": {"path": tiny_bert, "kind": "encoder"}})
        client = TestClient(make_app(engine))
        resp = client.post("/v1/token_embeddings", json={
            "model": "tiny", "layer": 2, "texts": ["the cat sat on the mat"]})
        assert resp.status_code == 200
        body = resp.json()
        assert body["dim"] == 32
        assert len(body["items"][0]["vectors"]) == len(body["items"][0]["tokens"])


class TestEncoderDecoderLayerCounts:
    def test_encoder_layers_only(self):
        from ffci_sidecar.models import _served_model_from_config

        class FakeT5Config:
            num_layers = 6          # encoder blocks
            num_decoder_layers = 6  # ignored: only the encoder is served
            d_model = 512

        served = _served_model_from_config("t5ish", "encoder_decoder",
                                           FakeT5Config())
        assert served.layer_count == 6
        assert served.dim == 512
