"""Run configuration, instance scoring, and leaderboard assembly.

An evaluation run scores every instance on the requested aspects, averages
per system, and renders a table with any lexical baseline columns first and
the aspect columns after, scaled to 0-100 with one decimal.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from ffci import aspects, lexical, metaeval
from ffci.aspects import (CoherenceConfig, FaithfulnessConfig, FfciScores,
                          coherence_baseline_score, faithfulness_score,
                          nsp_score)
from ffci.corpus import EvalInstance, SegmentedText, load_dataset, segment_sentences, tokenize
from ffci.embed import SegmentEmbedding, greedy_match_score, sts_prf
from ffci.errors import DataError
from ffci.lexical import PrfScore, bleu, rouge_l, rouge_n
from ffci.metaeval import CorrelationTable, select_by_average_rank
from ffci.provider import ProviderClient, ProviderConfig

ASPECTS = ("fa", "fo", "c", "ic")
LEXICAL_SELECTORS = ("rouge1", "rouge2", "rougeL", "bleu")
ABSENT_CELL = "---"


def lexical_selector(name: str) -> aspects.MetricSelector:
    """PrfScore-producing selector over raw texts for a lexical metric.

    The BLEU selector defines recall as the swapped-argument score so the
    precision/recall duality holds for it by construction.
    """
    if name == "rouge1":
        return lambda cand, ref: rouge_n(tokenize(cand), tokenize(ref), 1)
    if name == "rouge2":
        return lambda cand, ref: rouge_n(tokenize(cand), tokenize(ref), 2)
    if name == "rougeL":
        return lambda cand, ref: rouge_l(tokenize(cand), tokenize(ref))

    if name == "bleu":
        def _bleu_prf(cand: str, ref: str) -> PrfScore:
            c, r = tokenize(cand), tokenize(ref)
            p = bleu(c, [r]) if c else 0.0
            rec = bleu(r, [c]) if r else 0.0
            return PrfScore.from_pr(p, rec)
        return _bleu_prf
    raise ValueError(f"unknown lexical metric {name!r}")


def embed_selector(client: ProviderClient, model_id: str, layer: int,
                   ) -> aspects.MetricSelector:
    """Greedy token-matching selector over raw texts at one (model, layer)."""
    def _eval(cand: str, ref: str) -> PrfScore:
        cand_m, ref_m = client.fetch_token_embeddings([cand, ref], model_id, layer)
        return greedy_match_score(cand_m, ref_m)
    return _eval


def _segment_texts(client: Optional[ProviderClient], text: str,
                   granularity: str) -> list[str]:
    if granularity == "document":
        return [text] if text.strip() else []
    if granularity == "sentence" or client is None:
        return segment_sentences(text).sentence_texts()
    from ffci.provider import segments_with_fallback
    spans, _ = segments_with_fallback(client, text, granularity)
    return [text[a:b] for a, b in spans]


def sts_selector(client: ProviderClient, model_id: str,
                 granularity: str = "sentence") -> aspects.MetricSelector:
    """Segment-level best-match selector at edu/sentence/document granularity."""
    def _eval(cand: str, ref: str) -> PrfScore:
        cand_texts = _segment_texts(client, cand, granularity)
        ref_texts = _segment_texts(client, ref, granularity)
        if not cand_texts or not ref_texts:
            return lexical.DEGENERATE_ZERO
        vectors = client.fetch_sts_embeddings(cand_texts + ref_texts, model_id)
        cand_segs = [SegmentEmbedding(t, v, granularity)
                     for t, v in zip(cand_texts, vectors[:len(cand_texts)])]
        ref_segs = [SegmentEmbedding(t, v, granularity)
                    for t, v in zip(ref_texts, vectors[len(cand_texts):])]
        return sts_prf(cand_segs, ref_segs)
    return _eval


def make_selector(name: str, client: Optional[ProviderClient] = None,
                  model_id: Optional[str] = None, layer: Optional[int] = None,
                  granularity: str = "sentence") -> aspects.MetricSelector:
    if name in LEXICAL_SELECTORS:
        return lexical_selector(name)
    if name == "embed":
        if client is None or model_id is None or layer is None:
            raise ValueError("embed selector requires a client, model_id, and layer")
        return embed_selector(client, model_id, layer)
    if name == "sts":
        if client is None or model_id is None:
            raise ValueError("sts selector requires a client and model_id")
        return sts_selector(client, model_id, granularity)
    raise ValueError(f"unknown metric selector {name!r}")


@dataclass(frozen=True)
class AspectMetricConfig:
    """Metric choice for one aspect."""

    metric: str
    model_id: Optional[str] = None
    layer: Optional[int] = None
    top_n: Optional[int] = None       # faithfulness only
    aggregation: str = "mean"         # nsp only
    granularity: str = "sentence"     # sts only


# Recommended layer per served model for faithfulness, focus, and coverage;
# used whenever a model is chosen without an explicit layer.
RECOMMENDED_LAYERS: dict[str, dict[str, int]] = {
    "bert-base-uncased": {"fa": 6, "fo": 1, "c": 2},
    "bert-large-uncased": {"fa": 11, "fo": 9, "c": 9},
    "roberta-base": {"fa": 10, "fo": 9, "c": 2},
    "roberta-large": {"fa": 13, "fo": 13, "c": 3},
    "roberta-large-mnli": {"fa": 14, "fo": 15, "c": 3},
    "xlnet-base-cased": {"fa": 6, "fo": 4, "c": 2},
    "xlnet-large-cased": {"fa": 7, "fo": 7, "c": 5},
    "gpt2": {"fa": 1, "fo": 3, "c": 3},
    "gpt2-medium": {"fa": 8, "fo": 5, "c": 1},
    "gpt2-large": {"fa": 2, "fo": 21, "c": 3},
    "gpt2-xl": {"fa": 2, "fo": 29, "c": 4, "ic": 47},
    "t5-small": {"fa": 2, "fo": 3, "c": 2},
    "t5-base": {"fa": 3, "fo": 4, "c": 4},
    "t5-large": {"fa": 10, "fo": 13, "c": 10},
    "bart-base": {"fa": 1, "fo": 3, "c": 1},
    "bart-large": {"fa": 2, "fo": 5, "c": 2},
    "pegasus-xsum": {"fa": 8, "fo": 11, "c": 6},
    "pegasus-cnn_dailymail": {"fa": 12, "fo": 11, "c": 5},
    "pegasus-large": {"fa": 3, "fo": 4, "c": 4},
}


def recommended_layer(model_id: str, aspect: str) -> Optional[int]:
    """Default layer for (model, aspect), or None when the model is unlisted."""
    return RECOMMENDED_LAYERS.get(model_id, {}).get(aspect)


# Run defaults: token embeddings from roberta-base layer 10 for faithfulness,
# gpt2-xl layers 29 and 4 for focus and coverage, and mean-aggregated NSP for
# coherence.
DEFAULT_FA = AspectMetricConfig("embed", "roberta-base", 10)
DEFAULT_FO = AspectMetricConfig("embed", "gpt2-xl", 29)
DEFAULT_C = AspectMetricConfig("embed", "gpt2-xl", 4)
DEFAULT_IC = AspectMetricConfig("nsp", "bert-base-uncased")


@dataclass(frozen=True)
class RunConfig:
    """One evaluation run: dataset, aspect subset, and per-aspect metrics."""

    dataset: str
    aspects: tuple[str, ...] = ASPECTS
    fa: AspectMetricConfig = DEFAULT_FA
    fo: AspectMetricConfig = DEFAULT_FO
    c: AspectMetricConfig = DEFAULT_C
    ic: AspectMetricConfig = DEFAULT_IC
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    include_rouge: bool = True
    word_vectors: Optional[str] = None  # for the coherence baseline
    workers: int = 4
    seed: int = 0

    def __post_init__(self):
        bad = [a for a in self.aspects if a not in ASPECTS]
        if bad:
            raise ValueError(f"unknown aspects {bad}; expected subset of {ASPECTS}")

    def aspect_config(self, aspect: str) -> AspectMetricConfig:
        return getattr(self, aspect)

    def snapshot(self) -> dict:
        return {
            "dataset": str(self.dataset),
            "aspects": list(self.aspects),
            "metrics": {a: asdict(self.aspect_config(a)) for a in self.aspects},
            "provider": asdict(self.provider),
            "include_rouge": self.include_rouge,
            "word_vectors": self.word_vectors,
            "seed": self.seed,
        }


@dataclass
class ReportRow:
    system_name: str
    n_instances: int
    rouge1: Optional[float] = None
    rouge2: Optional[float] = None
    rougeL: Optional[float] = None
    scores: FfciScores = field(default_factory=FfciScores)


@dataclass
class FfciReport:
    """Leaderboard rows plus the configuration and data digest that made them."""

    rows: dict[str, ReportRow]
    aspects: tuple[str, ...]
    include_rouge: bool
    metadata: dict

    def to_json(self) -> str:
        payload = {
            "aspects": list(self.aspects),
            "include_rouge": self.include_rouge,
            "metadata": self.metadata,
            "rows": {
                name: {
                    "n_instances": row.n_instances,
                    "rouge1": row.rouge1,
                    "rouge2": row.rouge2,
                    "rougeL": row.rougeL,
                    "faithfulness": row.scores.faithfulness,
                    "focus": row.scores.focus,
                    "coverage": row.scores.coverage,
                    "ic": row.scores.ic,
                } for name, row in sorted(self.rows.items())
            },
        }
        return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "FfciReport":
        payload = json.loads(text)
        rows = {}
        for name, r in payload["rows"].items():
            rows[name] = ReportRow(
                system_name=name,
                n_instances=r["n_instances"],
                rouge1=r["rouge1"], rouge2=r["rouge2"], rougeL=r["rougeL"],
                scores=FfciScores(r["faithfulness"], r["focus"], r["coverage"], r["ic"]),
            )
        return cls(rows, tuple(payload["aspects"]), payload["include_rouge"],
                   payload["metadata"])


def load_word_vectors(path) -> dict[str, np.ndarray]:
    """Read a text-format static word-vector table: `word v1 v2 ...` per line."""
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            table[parts[0]] = np.asarray([float(x) for x in parts[1:]], dtype=np.float64)
    return table


def _dataset_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


class InstanceScorer:
    """Scores one instance on the configured aspects."""

    def __init__(self, cfg: RunConfig, client: Optional[ProviderClient],
                 word_vectors: Optional[Mapping[str, np.ndarray]] = None):
        self.cfg = cfg
        self.client = client
        self.word_vectors = word_vectors
        self._selectors: dict[str, aspects.MetricSelector] = {}

    def _selector_for(self, mc: AspectMetricConfig) -> aspects.MetricSelector:
        key = f"{mc.metric}:{mc.model_id}:{mc.layer}:{mc.granularity}"
        if key not in self._selectors:
            self._selectors[key] = make_selector(
                mc.metric, self.client, mc.model_id, mc.layer, mc.granularity)
        return self._selectors[key]

    def _faithfulness(self, summary: SegmentedText, article: SegmentedText) -> float:
        mc = self.cfg.fa
        fa_cfg = FaithfulnessConfig(metric=mc.metric, top_n=mc.top_n,
                                    model_id=mc.model_id if mc.metric == "embed" else None,
                                    layer=mc.layer if mc.metric == "embed" else None)
        if mc.metric in ("rouge1", "rouge2"):
            n = 1 if mc.metric == "rouge1" else 2
            metric_eval = lambda t, s: rouge_n(tokenize(t), tokenize(s), n).f1
        elif mc.metric == "embed":
            if self.client is None:
                raise ValueError("embed faithfulness requires a provider client")
            # one batched fetch for all sentences of both texts
            texts = summary.sentence_texts() + article.sentence_texts()
            matrices = self.client.fetch_token_embeddings(texts, mc.model_id, mc.layer)
            by_text = dict(zip(texts, matrices))
            metric_eval = lambda t, s: greedy_match_score(by_text[t], by_text[s]).f1
        elif mc.metric == "sts":
            if self.client is None:
                raise ValueError("sts faithfulness requires a provider client")
            client, model = self.client, mc.model_id or self.client.config.model_id

            def metric_eval(t: str, s: str) -> float:
                vecs = client.fetch_sts_embeddings([t, s], model)
                segs = [SegmentEmbedding(x, v, "sentence") for x, v in zip((t, s), vecs)]
                return sts_prf([segs[0]], [segs[1]]).f1
        else:
            raise ValueError(f"unsupported faithfulness metric {mc.metric!r}")
        return faithfulness_score(summary, article, fa_cfg, metric_eval).value

    def _ic(self, inst: EvalInstance, summary: SegmentedText) -> Optional[float]:
        mc = self.cfg.ic
        if mc.metric in LEXICAL_SELECTORS or mc.metric in ("embed", "sts"):
            # reference-based baseline: F1 of the summary against the reference
            if not inst.system_summary.strip():
                return 0.0
            return self._selector_for(mc)(inst.system_summary, inst.reference).f1
        if mc.metric == "nsp":
            sentences = summary.sentence_texts()
            if len(sentences) < 2:
                return None
            if self.client is None:
                raise ValueError("nsp coherence requires a provider client")
            pairs = list(zip(sentences, sentences[1:]))
            probs = self.client.fetch_nsp_probabilities(
                pairs, mc.model_id or self.client.config.model_id)
            lookup = dict(zip(pairs, probs))
            return nsp_score(summary, lambda a, b: lookup[(a, b)], mc.aggregation)
        if mc.metric == "coherence":
            if self.word_vectors is None:
                raise ValueError("coherence baseline requires a word-vector table")
            entity_fn = None
            if self.client is not None:
                client = self.client
                entity_fn = lambda s: client.fetch_entities(s)
            cfg = CoherenceConfig(ne_extractor="provider" if entity_fn else
                                  "capitalized_heuristic")
            value = coherence_baseline_score(summary, cfg, self.word_vectors, entity_fn)
            return None if value is None else min(1.0, max(0.0, value))
        raise ValueError(f"unsupported ic metric {mc.metric!r}")

    def score(self, inst: EvalInstance) -> ReportRow:
        summary = segment_sentences(inst.system_summary)
        row = ReportRow(system_name=inst.system_name, n_instances=1)
        if self.cfg.include_rouge:
            cand, ref = tokenize(inst.system_summary), tokenize(inst.reference)
            row.rouge1 = rouge_n(cand, ref, 1).f1
            row.rouge2 = rouge_n(cand, ref, 2).f1
            row.rougeL = rouge_l(cand, ref).f1

        fa = fo = c = ic = None
        if "fa" in self.cfg.aspects:
            fa = self._faithfulness(summary, segment_sentences(inst.article))
        if "fo" in self.cfg.aspects:
            fo = aspects.focus_score(inst.system_summary, inst.reference,
                                     self._selector_for(self.cfg.fo)).value
        if "c" in self.cfg.aspects:
            c = aspects.coverage_score(inst.system_summary, inst.reference,
                                       self._selector_for(self.cfg.c)).value
        if "ic" in self.cfg.aspects:
            ic = self._ic(inst, summary)
        row.scores = FfciScores(fa, fo, c, ic)
        return row


def _mean_or_none(values: list[Optional[float]]) -> Optional[float]:
    present = [v for v in values if v is not None]
    if not present:
        return None
    return math.fsum(present) / len(present)


def evaluate_run(cfg: RunConfig) -> FfciReport:
    """Score a dataset and assemble per-system mean rows.

    Instances whose IC is absent are excluded from the IC mean only; a system
    with no instances at all is omitted.  With a cache-only provider the
    result is deterministic down to the byte.
    """
    instances = load_dataset(cfg.dataset)
    needs_client = any(cfg.aspect_config(a).metric in ("embed", "sts", "nsp")
                       for a in cfg.aspects)
    client = ProviderClient(cfg.provider) if needs_client else None
    word_vectors = load_word_vectors(cfg.word_vectors) if cfg.word_vectors else None
    scorer = InstanceScorer(cfg, client, word_vectors)

    if cfg.workers > 1 and len(instances) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            per_instance = list(pool.map(scorer.score, instances))
    else:
        per_instance = [scorer.score(inst) for inst in instances]

    by_system: dict[str, list[ReportRow]] = {}
    for row in per_instance:
        by_system.setdefault(row.system_name, []).append(row)

    rows: dict[str, ReportRow] = {}
    for system_name in sorted(by_system):
        group = by_system[system_name]
        rows[system_name] = ReportRow(
            system_name=system_name,
            n_instances=len(group),
            rouge1=_mean_or_none([g.rouge1 for g in group]),
            rouge2=_mean_or_none([g.rouge2 for g in group]),
            rougeL=_mean_or_none([g.rougeL for g in group]),
            scores=FfciScores(
                _mean_or_none([g.scores.faithfulness for g in group]),
                _mean_or_none([g.scores.focus for g in group]),
                _mean_or_none([g.scores.coverage for g in group]),
                _mean_or_none([g.scores.ic for g in group]),
            ),
        )

    metadata = {"config": cfg.snapshot(), "dataset_digest": _dataset_digest(cfg.dataset)}
    return FfciReport(rows=rows, aspects=cfg.aspects,
                      include_rouge=cfg.include_rouge, metadata=metadata)


def _cell(value: Optional[float]) -> str:
    return ABSENT_CELL if value is None else f"{100.0 * value:.1f}"


_ASPECT_COLUMNS = (("Fa", "faithfulness"), ("Fo", "focus"), ("C", "coverage"),
                   ("IC", "ic"))


def _table_cells(report: FfciReport) -> tuple[list[str], list[list[str]]]:
    header = ["System", "N"]
    if report.include_rouge:
        header += ["R-1", "R-2", "R-L"]
    aspect_cols = [(label, attr) for label, attr in _ASPECT_COLUMNS
                   if {"faithfulness": "fa", "focus": "fo", "coverage": "c",
                       "ic": "ic"}[attr] in report.aspects]
    header += [label for label, _ in aspect_cols]
    body = []
    for name in sorted(report.rows):
        row = report.rows[name]
        cells = [name, str(row.n_instances)]
        if report.include_rouge:
            cells += [_cell(row.rouge1), _cell(row.rouge2), _cell(row.rougeL)]
        cells += [_cell(getattr(row.scores, attr)) for _, attr in aspect_cols]
        body.append(cells)
    return header, body


def render_table(report: FfciReport, format: str = "markdown") -> str:
    """Render the leaderboard; markdown and csv agree cell-for-cell."""
    if not report.rows:
        raise DataError("cannot render an empty report")
    header, body = _table_cells(report)
    if format == "markdown":
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(cells) + " |" for cells in body]
        return "\n".join(lines) + "\n"
    if format == "csv":
        lines = [",".join(header)]
        lines += [",".join(cells) for cells in body]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {format!r}")


def emit_layer_curve(table: CorrelationTable, model_id: str, path) -> None:
    """Write layer-vs-correlation plot data plus the selected-layer marker."""
    model_slice = table.restrict_to_model(model_id)
    if len(model_slice) == 0:
        raise DataError(f"no correlations recorded for model {model_id!r}")
    _, selected_layer = select_by_average_rank(model_slice)
    lines = ["record,layer,pair_id,pearson"]
    for (m, layer, pair_id), value in sorted(model_slice.cells().items()):
        lines.append(f"point,{layer},{pair_id},{value!r}")
    lines.append(f"selected,{selected_layer},,")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
