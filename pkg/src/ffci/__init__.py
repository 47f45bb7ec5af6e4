"""Summarization evaluation along four aspects: faithfulness, focus,
coverage, and inter-sentential coherence, plus the meta-evaluation harness
used to validate the metrics against human judgements."""

from ffci.aspects import (AspectScore, CoherenceConfig, FaithfulnessConfig,
                          FfciScores, NspPair, avg_top_n, build_nsp_pairs,
                          coherence_baseline_score, coverage_score,
                          faithfulness_score, focus_score, nsp_score)
from ffci.corpus import (AnnotationRecord, EvalInstance, SegmentedText,
                         load_dataset, segment_sentences, tokenize, write_dataset)
from ffci.embed import EmbeddingMatrix, SegmentEmbedding, greedy_match_score, sts_prf
from ffci.lexical import PrfScore, bleu, rouge_l, rouge_n
from ffci.metaeval import (CorrelationTable, aggregate_annotations, layer_sweep,
                           pearson, quality_control_check, select_by_average_rank,
                           spearman, zscore_normalize)
from ffci.provider import ProviderClient, ProviderConfig
from ffci.report import FfciReport, RunConfig, evaluate_run, render_table

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord", "AspectScore", "CoherenceConfig", "CorrelationTable",
    "EmbeddingMatrix", "EvalInstance", "FaithfulnessConfig", "FfciReport",
    "FfciScores", "NspPair", "PrfScore", "ProviderClient", "ProviderConfig",
    "RunConfig", "SegmentEmbedding", "SegmentedText", "aggregate_annotations",
    "avg_top_n", "bleu", "build_nsp_pairs", "coherence_baseline_score",
    "coverage_score", "evaluate_run", "faithfulness_score", "focus_score",
    "greedy_match_score", "layer_sweep", "load_dataset", "nsp_score", "pearson",
    "quality_control_check", "render_table", "rouge_l", "rouge_n",
    "segment_sentences", "select_by_average_rank", "spearman", "sts_prf",
    "tokenize", "write_dataset", "zscore_normalize",
]
