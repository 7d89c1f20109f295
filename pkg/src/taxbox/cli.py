"""Command-line interface: dataset generation, training, evaluation,
completion of new terms, and report rendering."""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from . import reporting, taxonomy
from .config import RunConfig, dump_config, parse_config
from .embeddings import load_embeddings
from .errors import DataError, NumericError, TaxboxError
from .metrics import RankResult, breakdown_eval, metric_table
from .training import (CONFIG_NAME, TRAINING_LOG, Trainer, load_model,
                       rank_queries)


def _fail(exc: TaxboxError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


@click.group()
def main() -> None:
    """Taxonomy completion with probabilistic box embeddings."""


@main.command("gen-dataset")
@click.option("--terms", "terms_file", required=True, type=click.Path(exists=True))
@click.option("--edges", "edges_file", required=True, type=click.Path(exists=True))
@click.option("--test-frac", type=float, default=None,
              help="Fraction of all nodes to hold out for testing.")
@click.option("--test-count", type=int, default=None)
@click.option("--valid-frac", type=float, default=None)
@click.option("--valid-count", type=int, default=None)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def gen_dataset(terms_file, edges_file, test_frac, test_count,
                valid_frac, valid_count, seed, out_dir) -> None:
    """Split a taxonomy and write the bypassed seed plus ground truth."""
    try:
        tax = taxonomy.load(terms_file, edges_file)
    except DataError as exc:
        _fail(exc)
    n_test = _resolve_count("test", test_frac, test_count, len(tax))
    n_valid = _resolve_count("valid", valid_frac, valid_count, len(tax))
    try:
        test_ids, valid_ids = ds.make_split(tax, n_test, n_valid, seed)
    except ValueError as exc:
        raise click.UsageError(str(exc))
    try:
        ds.write_dataset(out_dir, tax, test_ids, valid_ids)
    except DataError as exc:
        _fail(exc)
    click.echo(f"wrote dataset to {out_dir}: {len(test_ids)} test, "
               f"{len(valid_ids)} valid, {len(tax) - len(test_ids) - len(valid_ids)} seed nodes")


def _resolve_count(name: str, frac, count, n_nodes: int) -> int:
    if (frac is None) == (count is None):
        raise click.UsageError(f"provide exactly one of --{name}-frac / --{name}-count")
    if frac is not None:
        if not 0 <= frac < 1:
            raise click.UsageError(f"--{name}-frac must be in [0, 1)")
        return int(frac * n_nodes)
    if count < 0:
        raise click.UsageError(f"--{name}-count must be non-negative")
    return count


@main.command()
@click.option("--config", "config_file", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def train(config_file, out_dir) -> None:
    """Train a model; writes checkpoint, effective config, training log."""
    try:
        cfg = parse_config(config_file)
        bundle = ds.load_dataset(cfg.data_dir)
        table = load_embeddings(cfg.embeddings)
        trainer = Trainer(cfg, bundle, table)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / CONFIG_NAME)
        summary = trainer.train(out)
    except (DataError, NumericError) as exc:
        _fail(exc)
    click.echo(f"best epoch {summary.best_epoch} "
               f"(val MRR {summary.best_val_mrr:.4f}); "
               f"checkpoint at {summary.checkpoint}")


def _load_run(checkpoint, config_file):
    ckpt = Path(checkpoint)
    cfg_path = Path(config_file) if config_file else ckpt.parent / CONFIG_NAME
    if not cfg_path.exists():
        raise DataError(f"no config found at {cfg_path}; pass --config")
    cfg = parse_config(cfg_path)
    bundle = ds.load_dataset(cfg.data_dir)
    table = load_embeddings(cfg.embeddings)
    trainer, cache = load_model(cfg, bundle, table, ckpt)
    return cfg, bundle, table, trainer, cache


@main.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--split", type=click.Choice(["test", "valid"]), default="test",
              show_default=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Report directory (defaults to the checkpoint's).")
def eval_cmd(checkpoint, split, config_file, out_dir) -> None:
    """Rank held-out queries and write the metrics report."""
    try:
        cfg, bundle, _, trainer, cache = _load_run(checkpoint, config_file)
        queries = bundle.queries(split)
        if not queries:
            raise DataError(f"split {split!r} has no queries")
        results, skipped = rank_queries(
            queries, lambda q: trainer.emb[trainer.row_of[q]], bundle,
            trainer.store.frozen_view(), trainer.enc_cfg, *cache,
            tau=cfg.tau_predict)
        if skipped:
            click.echo(f"warning: skipped {skipped} queries without ground truth",
                       err=True)
        table = metric_table(results)
        breakdown = breakdown_eval(results)
        out = Path(out_dir) if out_dir else Path(checkpoint).parent
        out.mkdir(parents=True, exist_ok=True)
        reporting.write_metrics_report(out / f"metrics_{split}.tsv", table,
                                       breakdown, skipped)
        _write_ranks(out / f"ranks_{split}.tsv", results)
    except (DataError, NumericError) as exc:
        _fail(exc)
    for name, value in table.items():
        click.echo(f"{name}\t{value:.4f}")
    click.echo(f"report written to {out}")


def _write_ranks(path, results: list[RankResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query\tkind\tranks\n")
        for r in results:
            fh.write(f"{r.query}\t{r.kind}\t{','.join(map(str, r.ranks))}\n")


def _read_ranks(path) -> list[RankResult]:
    results = []
    for ln in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        if not ln.strip():
            continue
        query, kind, ranks = ln.split("\t")
        results.append(RankResult(query, [int(v) for v in ranks.split(",")], kind))
    return results


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--queries", "queries_file", required=True, type=click.Path(exists=True))
@click.option("--topk", type=int, default=10, show_default=True)
@click.option("--config", "config_file", type=click.Path(exists=True), default=None)
@click.option("--out", "out_file", type=click.Path(), default=None,
              help="Score table file (defaults to stdout).")
def complete(checkpoint, queries_file, topk, config_file, out_file) -> None:
    """Rank candidate positions for new terms with supplied embeddings."""
    if topk < 1:
        raise click.UsageError("--topk must be >= 1")
    try:
        cfg, bundle, table, trainer, cache = _load_run(checkpoint, config_file)
        cand_min, cand_max, child_pos = cache
        candidates = bundle.seed.enumerate_candidates()
        terms = [ln.strip() for ln in
                 Path(queries_file).read_text(encoding="utf-8").splitlines()
                 if ln.strip()]
        if not terms:
            raise DataError(f"{queries_file}: no query terms")

        from .scoring import score_positions
        from .training import query_box

        rows = []
        failures = 0
        frozen = trainer.store.frozen_view()
        for term in terms:
            if term not in table:
                click.echo(f"error: no embedding for query term {term!r}", err=True)
                failures += 1
                continue
            vec = table.vector(term).astype(trainer.dtype)
            qmin, qmax = query_box(vec, frozen, trainer.enc_cfg)
            scores = score_positions(qmin, qmax, cand_min, cand_max, child_pos,
                                     cfg.tau_predict)
            top = np.argsort(-scores, kind="stable")[:topk]
            for rank, idx in enumerate(top, start=1):
                rows.append((term, candidates[idx], float(scores[idx]), rank))
        if failures == len(terms):
            raise DataError("no query term had an embedding")
        if out_file:
            reporting.write_score_table(out_file, rows)
            click.echo(f"wrote {len(rows)} rows to {out_file}")
        else:
            click.echo("query_id\tparent_id\tchild_id\tscore\trank")
            for term, pos, score, rank in rows:
                child = pos.child if pos.child is not None else "NONE"
                click.echo(f"{term}\t{pos.parent}\t{child}\t{score:.6g}\t{rank}")
    except (DataError, NumericError) as exc:
        _fail(exc)
    if failures:
        sys.exit(3)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True))
def report(run_dir) -> None:
    """Render figures next to a run's delimited outputs."""
    run = Path(run_dir)
    produced = []
    try:
        log_path = run / TRAINING_LOG
        if log_path.exists():
            reporting.render_training_figure(log_path, run / "training_curves.png")
            produced.append("training_curves.png")
        for split in ("test", "valid"):
            metrics_path = run / f"metrics_{split}.tsv"
            if metrics_path.exists():
                reporting.render_metrics_figure(
                    metrics_path, run / f"metrics_{split}.png")
                produced.append(f"metrics_{split}.png")
            ranks_path = run / f"ranks_{split}.tsv"
            if ranks_path.exists():
                reporting.render_rank_histogram(
                    _read_ranks(ranks_path), run / f"rank_hist_{split}.png")
                produced.append(f"rank_hist_{split}.png")
    except DataError as exc:
        _fail(exc)
    if not produced:
        raise click.UsageError(
            f"{run_dir} has no training_log.tsv, metrics_*.tsv or ranks_*.tsv")
    click.echo(f"rendered {', '.join(produced)} in {run_dir}")


if __name__ == "__main__":
    main()
