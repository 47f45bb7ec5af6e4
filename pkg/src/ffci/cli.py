"""Command-line entry points.

Subcommands map one-to-one onto the evaluation workflows: ``eval`` scores a
dataset, ``metaeval`` correlates a metric against human judgements, ``sweep``
runs a per-layer correlation sweep, ``nsp-pairs`` builds NSP training pairs,
and ``report`` re-renders a saved report.  Exit codes: 0 success, 1 usage,
2 data error, 3 provider error.  All logs go to stderr; outputs land under
``--out``.
"""

from __future__ import annotations

import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

import click

from ffci import aspects as aspects_mod
from ffci import metaeval as metaeval_mod
from ffci import report as report_mod
from ffci.corpus import load_annotations, load_dataset, segment_sentences
from ffci.errors import DataError, ProviderError, ZeroVarianceError
from ffci.metaeval import aggregate_annotations, layer_sweep, pearson, spearman
from ffci.provider import ProviderClient, ProviderConfig
from ffci.report import (AspectMetricConfig, FfciReport, RunConfig,
                         emit_layer_curve, evaluate_run, render_table)

log = logging.getLogger("ffci")

_ASPECT_NAMES = {"fa": "faithfulness", "fo": "focus", "c": "coverage", "ic": "ic"}


def _provider_config(provider: Optional[str], cache_dir: str, cache_only: bool,
                     model: Optional[str]) -> ProviderConfig:
    endpoint = "cache-only" if cache_only or not provider else provider
    kwargs = {"endpoint": endpoint, "cache_dir": cache_dir}
    if model:
        kwargs["model_id"] = model
    return ProviderConfig(**kwargs)


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
def cli():
    """Summarization evaluation: faithfulness, focus, coverage, coherence."""
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@cli.command("eval")
@click.option("--dataset", required=True, help="JSONL dataset of instances.")
@click.option("--aspects", default="fa,fo,c,ic", show_default=True,
              help="Comma-separated subset of fa,fo,c,ic.")
@click.option("--metric", default=None,
              help="Override the fa/fo/c metric (rouge1,rouge2,rougeL,bleu,sts,embed).")
@click.option("--model", default=None, help="Model id for embedding metrics.")
@click.option("--layer", default=None, type=int, help="Layer for the embed metric.")
@click.option("--ic-metric", default="nsp", show_default=True,
              type=click.Choice(["nsp", "coherence"]))
@click.option("--ic-model", default="bert-base-uncased", show_default=True)
@click.option("--word-vectors", default=None,
              help="Static word-vector table for the coherence baseline.")
@click.option("--provider", default=None, help="Provider endpoint URL.")
@click.option("--cache-dir", default=".ffci-cache", show_default=True)
@click.option("--cache-only", is_flag=True, default=False)
@click.option("--no-rouge", is_flag=True, default=False,
              help="Skip the lexical baseline columns.")
@click.option("--workers", default=4, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, help="Output directory.")
def eval_cmd(dataset, aspects, metric, model, layer, ic_metric, ic_model,
             word_vectors, provider, cache_dir, cache_only, no_rouge, workers,
             seed, out):
    """Score a dataset and write the leaderboard report."""
    requested = tuple(a.strip() for a in aspects.split(",") if a.strip())
    cfg = RunConfig(
        dataset=dataset,
        aspects=requested,
        provider=_provider_config(provider, cache_dir, cache_only, None),
        include_rouge=not no_rouge,
        word_vectors=word_vectors,
        workers=workers,
        seed=seed,
    )
    if metric is not None or model is not None or layer is not None:
        overrides = {aspect: _aspect_metric_config(aspect, metric, model, layer)
                     for aspect in ("fa", "fo", "c") if aspect in requested}
        cfg = replace(cfg, **overrides)
    if "ic" in requested:
        cfg = replace(cfg, ic=AspectMetricConfig(ic_metric, model_id=ic_model))

    report = evaluate_run(cfg)
    out_path = _out_dir(out)
    (out_path / "report.json").write_text(report.to_json(), encoding="utf-8")
    (out_path / "report.md").write_text(render_table(report, "markdown"),
                                        encoding="utf-8")
    (out_path / "report.csv").write_text(render_table(report, "csv"),
                                         encoding="utf-8")
    log.info("wrote report for %d systems to %s", len(report.rows), out_path)
    click.echo(render_table(report, "markdown"), nl=False)


def _instance_aspect_scorer(aspect: str, mc: AspectMetricConfig,
                            client: Optional[ProviderClient],
                            word_vectors_path: Optional[str]):
    cfg = RunConfig(dataset="-", aspects=(aspect,), include_rouge=False,
                    word_vectors=word_vectors_path, **{aspect: mc})
    vectors = (report_mod.load_word_vectors(word_vectors_path)
               if word_vectors_path else None)
    scorer = report_mod.InstanceScorer(cfg, client, vectors)

    def score(inst):
        row = scorer.score(inst)
        return getattr(row.scores, _ASPECT_NAMES[aspect])
    return score


def _resolve_layer(aspect: str, model: str, layer: Optional[int],
                   fallback: Optional[int]) -> int:
    """Explicit layer wins; otherwise the model's recommended layer."""
    if layer is not None:
        return layer
    recommended = report_mod.recommended_layer(model, aspect)
    if recommended is not None:
        return recommended
    if fallback is not None:
        return fallback
    raise click.UsageError(
        f"no recommended layer for model {model!r} and aspect {aspect!r}; "
        f"pass --layer")


def _aspect_metric_config(aspect: str, metric: Optional[str], model: Optional[str],
                          layer: Optional[int]) -> AspectMetricConfig:
    base = {"fa": report_mod.DEFAULT_FA, "fo": report_mod.DEFAULT_FO,
            "c": report_mod.DEFAULT_C, "ic": report_mod.DEFAULT_IC}[aspect]
    if metric is None:
        metric = base.metric
    needs_model = metric in ("embed", "sts", "nsp")
    model_id = (model or base.model_id) if needs_model else None
    resolved = None
    if metric == "embed":
        fallback = base.layer if model_id == base.model_id else None
        resolved = _resolve_layer(aspect, model_id, layer, fallback)
    return AspectMetricConfig(metric=metric, model_id=model_id, layer=resolved)


@cli.command("metaeval")
@click.option("--dataset", required=True)
@click.option("--annotations", required=True, help="Worker-annotation JSONL.")
@click.option("--aspect", required=True, type=click.Choice(["fa", "fo", "c", "ic"]))
@click.option("--metric", default=None)
@click.option("--model", default=None)
@click.option("--layer", default=None, type=int)
@click.option("--word-vectors", default=None)
@click.option("--qc-tolerance", default=25.0, show_default=True, type=float)
@click.option("--provider", default=None)
@click.option("--cache-dir", default=".ffci-cache", show_default=True)
@click.option("--cache-only", is_flag=True, default=False)
@click.option("--out", required=True)
def metaeval_cmd(dataset, annotations, aspect, metric, model, layer, word_vectors,
                 qc_tolerance, provider, cache_dir, cache_only, out):
    """Correlate one metric with aggregated human judgements per system pair."""
    instances = load_dataset(dataset)
    records = load_annotations(annotations)
    aspect_name = _ASPECT_NAMES[aspect] if aspect != "fa" else "focus"
    record_aspect = {"fa": None, "fo": "focus", "c": "coverage", "ic": "ic"}[aspect]
    if record_aspect is not None:
        records = [r for r in records if r.aspect == record_aspect or r.is_control]
    aggregated = aggregate_annotations(records, tolerance=qc_tolerance)
    if aggregated.missing_items:
        log.warning("items without passing annotations: %s",
                    ", ".join(aggregated.missing_items))

    mc = _aspect_metric_config(aspect, metric, model, layer)
    needs_client = mc.metric in ("embed", "sts", "nsp")
    client = ProviderClient(_provider_config(provider, cache_dir, cache_only,
                                             mc.model_id)) if needs_client else None
    score = _instance_aspect_scorer(aspect, mc, client, word_vectors)

    groups: dict[str, list] = {}
    for inst in instances:
        if inst.id in aggregated.scores:
            groups.setdefault(inst.system_name, []).append(inst)

    out_path = _out_dir(out)
    rows = []
    for pair_id in sorted(groups):
        xs, ys = [], []
        for inst in groups[pair_id]:
            value = score(inst)
            if value is None:
                continue
            xs.append(value)
            ys.append(aggregated.scores[inst.id])
        try:
            r, rho = pearson(xs, ys), spearman(xs, ys)
        except (DataError, ZeroVarianceError) as exc:
            log.warning("pair %s skipped: %s", pair_id, exc)
            continue
        rows.append((pair_id, len(xs), r, rho))

    with open(out_path / "correlations.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["pair_id", "n", "pearson", "spearman"])
        for pair_id, n, r, rho in rows:
            writer.writerow([pair_id, n, repr(r), repr(rho)])
    for pair_id, n, r, rho in rows:
        click.echo(f"{pair_id}\tn={n}\tr={r:.4f}\trho={rho:.4f}")


def _parse_layers(spec: str) -> list[int]:
    layers: list[int] = []
    for chunk in spec.split(","):
        chunk = chunk.strip()
        if "-" in chunk:
            lo, hi = chunk.split("-", 1)
            layers.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            layers.append(int(chunk))
    if not layers:
        raise click.UsageError(f"no layers parsed from {spec!r}")
    return layers


@cli.command("sweep")
@click.option("--dataset", required=True)
@click.option("--annotations", required=True)
@click.option("--aspect", required=True, type=click.Choice(["fa", "fo", "c"]))
@click.option("--model", required=True)
@click.option("--layers", required=True, help="e.g. 0-12 or 0,4,8.")
@click.option("--qc-tolerance", default=25.0, show_default=True, type=float)
@click.option("--provider", default=None)
@click.option("--cache-dir", default=".ffci-cache", show_default=True)
@click.option("--cache-only", is_flag=True, default=False)
@click.option("--out", required=True)
def sweep_cmd(dataset, annotations, aspect, model, layers, qc_tolerance, provider,
              cache_dir, cache_only, out):
    """Per-layer correlation sweep for the embed metric at one model."""
    instances = load_dataset(dataset)
    records = load_annotations(annotations)
    record_aspect = {"fa": None, "fo": "focus", "c": "coverage"}[aspect]
    if record_aspect is not None:
        records = [r for r in records if r.aspect == record_aspect or r.is_control]
    aggregated = aggregate_annotations(records, tolerance=qc_tolerance)
    human = aggregated.scores

    client = ProviderClient(_provider_config(provider, cache_dir, cache_only, model))
    scorers: dict[int, object] = {}

    def score_fn(layer: int, inst) -> float:
        if layer not in scorers:
            mc = AspectMetricConfig("embed", model_id=model, layer=layer)
            scorers[layer] = _instance_aspect_scorer(aspect, mc, client, None)
        return scorers[layer](inst)

    usable = [inst for inst in instances if inst.id in human]
    dropped = len(instances) - len(usable)
    if dropped:
        log.warning("%d instances lack human scores and were dropped", dropped)
    table = layer_sweep(score_fn, model, _parse_layers(layers), human, usable)

    out_path = _out_dir(out)
    table.write_csv(out_path / "sweep.csv")
    emit_layer_curve(table, model, out_path / f"curve_{model}.csv")
    selected = metaeval_mod.select_by_average_rank(table)
    click.echo(f"selected {selected[0]} layer {selected[1]}")


@cli.command("nsp-pairs")
@click.option("--dataset", required=True, help="Articles come from this dataset.")
@click.option("--variant", default=5, show_default=True, type=click.IntRange(1, 5))
@click.option("--positives", default=50, show_default=True, type=int)
@click.option("--negatives", default=50, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True)
def nsp_pairs_cmd(dataset, variant, positives, negatives, seed, out):
    """Build NSP training pairs from the dataset's articles."""
    instances = load_dataset(dataset)
    articles = [segment_sentences(inst.article) for inst in instances]
    pairs = aspects_mod.build_nsp_pairs(articles, variant, positives, negatives, seed)
    out_path = _out_dir(out)
    aspects_mod.write_nsp_pairs(pairs, out_path / "nsp_pairs.jsonl")
    by_type: dict[str, int] = {}
    for p in pairs:
        key = p.negative_type or "positive"
        by_type[key] = by_type.get(key, 0) + 1
    click.echo(json.dumps(by_type, sort_keys=True))


@cli.command("report")
@click.option("--report", "report_path", required=True, help="A saved report.json.")
@click.option("--format", "fmt", default="markdown", show_default=True,
              type=click.Choice(["markdown", "csv"]))
@click.option("--out", default=None, help="Write here instead of stdout.")
def report_cmd(report_path, fmt, out):
    """Re-render a saved report."""
    report = FfciReport.from_json(Path(report_path).read_text(encoding="utf-8"))
    text = render_table(report, fmt)
    if out:
        out_path = _out_dir(out)
        suffix = "md" if fmt == "markdown" else "csv"
        (out_path / f"report.{suffix}").write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


def main(argv=None) -> int:
    """Entry point with the documented exit-code mapping."""
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1 if isinstance(exc, ValueError) else 2
    except ZeroVarianceError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except DataError as exc:
        click.echo(f"data error: {exc}", err=True)
        return 2
    except ProviderError as exc:
        click.echo(f"provider error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
