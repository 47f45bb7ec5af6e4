import json

import numpy as np
import pytest

import synthetic
from conftest import FIXTURES_DIR
from ffci.corpus import EvalInstance, write_dataset
from ffci.errors import DataError
from ffci.metaeval import CorrelationTable
from ffci.provider import ProviderConfig, register_model
from ffci.report import (AspectMetricConfig, FfciReport, RunConfig,
                         emit_layer_curve, evaluate_run, lexical_selector,
                         load_word_vectors, make_selector, render_table)

register_model("test-tiny", "encoder", 4)


def fixture_config(**kwargs):
    return RunConfig(
        dataset=str(FIXTURES_DIR / "dataset.jsonl"),
        provider=ProviderConfig(endpoint="cache-only",
                                cache_dir=str(FIXTURES_DIR / "cache")),
        **kwargs)


class TestEvaluateRun:
    def test_mean_times_hundred(self, tmp_path):
        # two instances for one system with focus 0.4 and 0.6 -> rendered 50.0
        instances = [
            EvalInstance("i1", "a b c d e", "alpha beta gamma delta epsilon",
                         "alpha beta gamma zeta iota", "sys"),
            EvalInstance("i2", "a b c d e", "alpha beta gamma delta epsilon",
                         "alpha beta gamma delta zeta", "sys"),
        ]
        # rouge1 precision: 3/5 = 0.6 and 4/5 = 0.8 -> mean 0.7 -> "70.0"
        path = tmp_path / "d.jsonl"
        write_dataset(instances, path)
        cfg = RunConfig(dataset=str(path), aspects=("fo",),
                        fo=AspectMetricConfig("rouge1"), include_rouge=False)
        report = evaluate_run(cfg)
        row = report.rows["sys"]
        assert row.scores.focus == pytest.approx(0.7, abs=1e-12)
        table = render_table(report, "csv")
        assert "70.0" in table

    def test_single_sentence_ic_absent(self):
        report = evaluate_run(fixture_config())
        assert report.rows["single"].scores.ic is None
        assert report.rows["ext3"].scores.ic is not None

    def test_rendered_cell_is_rounded_mean(self):
        report = evaluate_run(fixture_config())
        header, body = render_table(report, "csv").splitlines()[0:2]
        cols = header.split(",")
        cells = body.split(",")
        fa_cell = cells[cols.index("Fa")]
        fa_mean = report.rows[cells[0]].scores.faithfulness
        assert float(fa_cell) == round(100.0 * fa_mean, 1)

    def test_deterministic_bytes(self):
        cfg = fixture_config()
        a = evaluate_run(cfg)
        b = evaluate_run(cfg)
        assert a.to_json() == b.to_json()
        assert render_table(a, "markdown") == render_table(b, "markdown")
        assert render_table(a, "csv") == render_table(b, "csv")

    def test_json_round_trip(self):
        report = evaluate_run(fixture_config())
        again = FfciReport.from_json(report.to_json())
        assert render_table(again, "csv") == render_table(report, "csv")

    def test_formats_agree_cell_for_cell(self):
        report = evaluate_run(fixture_config())
        md = render_table(report, "markdown")
        csv_text = render_table(report, "csv")
        md_rows = [[c.strip() for c in line.strip("|").split("|")]
                   for line in md.strip().splitlines() if "---|" not in line]
        csv_rows = [line.split(",") for line in csv_text.strip().splitlines()]
        assert md_rows == csv_rows

    def test_aspect_subset(self, tmp_path):
        cfg = fixture_config(aspects=("fo", "c"))
        report = evaluate_run(cfg)
        header = render_table(report, "csv").splitlines()[0].split(",")
        assert "Fa" not in header and "IC" not in header
        assert header[-2:] == ["Fo", "C"]

    def test_empty_report_rejected(self):
        report = FfciReport(rows={}, aspects=("fa",), include_rouge=False,
                            metadata={})
        with pytest.raises(DataError):
            render_table(report)


class TestSelectors:
    def test_unknown_selector(self):
        with pytest.raises(ValueError):
            make_selector("meteor")

    def test_embed_selector_requires_client(self):
        with pytest.raises(ValueError):
            make_selector("embed")

    def test_bleu_selector_duality_by_construction(self):
        sel = lexical_selector("bleu")
        a, b = "the cat sat on the mat", "the dog sat on a log"
        assert sel(a, b).precision == sel(b, a).recall


class TestWordVectors:
    def test_load(self, tmp_path):
        path = tmp_path / "vecs.txt"
        path.write_text("alpha 1.0 0.0\nbeta 0.0 1.0\n")
        table = load_word_vectors(path)
        assert set(table) == {"alpha", "beta"}
        assert np.allclose(table["alpha"], [1.0, 0.0])


class TestCoherenceIcPath:
    def test_coherence_metric_via_run(self, tmp_path):
        instances = [EvalInstance(
            "i1", "Article text here.", "Reference text here.",
            "Word alpha. Word delta. Word delta.", "sys")]
        data = tmp_path / "d.jsonl"
        write_dataset(instances, data)
        vecs = tmp_path / "vecs.txt"
        vecs.write_text("alpha 1.0 0.0 0.0\ndelta 0.0 0.0 1.0\n")
        cfg = RunConfig(dataset=str(data), aspects=("ic",),
                        ic=AspectMetricConfig("coherence"),
                        word_vectors=str(vecs), include_rouge=False)
        report = evaluate_run(cfg)
        # pairs: lambda=0.5 -> 0.5*NE + 0.5*cos; entities {Word} shared -> NE=1
        # cos pairs: (alpha,delta)=0, (delta,delta)=1 -> (0.5 + 1.0)/2 = 0.75
        assert report.rows["sys"].scores.ic == pytest.approx(0.75, abs=1e-12)


class TestEmitLayerCurve:
    def make_table(self):
        table = CorrelationTable()
        for layer, value in [(0, 0.2), (1, 0.9), (2, 0.5)]:
            table.add("m", layer, "C-PG", value)
        return table

    def test_rows_and_marker(self, tmp_path):
        path = tmp_path / "curve.csv"
        emit_layer_curve(self.make_table(), "m", path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "record,layer,pair_id,pearson"
        points = [l for l in lines[1:] if l.startswith("point,")]
        markers = [l for l in lines[1:] if l.startswith("selected,")]
        assert len(points) == 3 and len(markers) == 1
        assert markers[0].split(",")[1] == "1"  # best layer

    def test_marker_matches_selection(self, tmp_path):
        from ffci.metaeval import select_by_average_rank
        table = self.make_table()
        path = tmp_path / "curve.csv"
        emit_layer_curve(table, "m", path)
        marker = [l for l in path.read_text().splitlines()
                  if l.startswith("selected,")][0]
        assert int(marker.split(",")[1]) == select_by_average_rank(table)[1]

    def test_unknown_model_rejected(self, tmp_path):
        with pytest.raises(DataError):
            emit_layer_curve(self.make_table(), "other", tmp_path / "c.csv")


class TestRecommendedLayers:
    def test_lookup(self):
        from ffci.report import recommended_layer
        assert recommended_layer("roberta-base", "fa") == 10
        assert recommended_layer("gpt2-xl", "fo") == 29
        assert recommended_layer("gpt2-xl", "c") == 4
        assert recommended_layer("bert-large-uncased", "fa") == 11
        assert recommended_layer("unknown-model", "fa") is None

    def test_every_recommended_layer_is_servable(self):
        from ffci.provider import MODEL_REGISTRY
        from ffci.report import RECOMMENDED_LAYERS
        for model_id, layers in RECOMMENDED_LAYERS.items():
            assert model_id in MODEL_REGISTRY
            _, block_count = MODEL_REGISTRY[model_id]
            for aspect, layer in layers.items():
                assert 0 <= layer <= block_count, (model_id, aspect, layer)


class TestIcReferenceBaseline:
    def test_rouge_f1_as_ic(self, tmp_path):
        instances = [EvalInstance(
            "i1", "Article body text.", "the cat sat on the mat",
            "the cat sat here now", "sys")]
        data = tmp_path / "d.jsonl"
        write_dataset(instances, data)
        cfg = RunConfig(dataset=str(data), aspects=("ic",),
                        ic=AspectMetricConfig("rouge1"), include_rouge=False)
        report = evaluate_run(cfg)
        from ffci.corpus import tokenize
        from ffci.lexical import rouge_n
        expected = rouge_n(tokenize("the cat sat here now"),
                           tokenize("the cat sat on the mat"), 1).f1
        assert report.rows["sys"].scores.ic == pytest.approx(expected, abs=1e-12)
