"""Delimited reports and the matplotlib figures rendered alongside them."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .metrics import RankResult
from .taxonomy import ABSENT, CandidatePosition


def write_metrics_report(path, table: dict[str, float],
                         breakdown: dict[str, dict[str, float]],
                         skipped: int = 0) -> None:
    """metric<TAB>value rows, then the attachment/insertion breakdown tables."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\n")
        for name, value in table.items():
            fh.write(f"{name}\t{value:.6f}\n")
        fh.write(f"skipped_queries\t{skipped}\n")
        for kind, sub in breakdown.items():
            for name, value in sub.items():
                fh.write(f"{kind}.{name}\t{value:.6f}\n")


def write_score_table(path, rows: list[tuple[str, CandidatePosition, float, int]]) -> None:
    """query_id<TAB>parent_id<TAB>child_id|NONE<TAB>score<TAB>rank rows."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("query_id\tparent_id\tchild_id\tscore\trank\n")
        for query, pos, score, rank in rows:
            child = pos.child if pos.child is not ABSENT else "NONE"
            fh.write(f"{query}\t{pos.parent}\t{child}\t{score:.6g}\t{rank}\n")


def read_training_log(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise DataError(f"{path}: empty training log")
    header = lines[0].split("\t")
    rows = [ln.split("\t") for ln in lines[1:] if ln.strip()]
    if any(len(r) != len(header) for r in rows):
        raise DataError(f"{path}: ragged training log")
    cols = {name: np.array([float(r[i]) for r in rows])
            for i, name in enumerate(header)}
    return cols


def read_metrics_report(path) -> dict[str, float]:
    out: dict[str, float] = {}
    for ln in Path(path).read_text(encoding="utf-8").splitlines()[1:]:
        if not ln.strip():
            continue
        name, value = ln.split("\t")
        out[name] = float(value)
    return out


def render_training_figure(log_path, out_path) -> None:
    """Loss-component curves plus validation MRR / learning rate."""
    cols = read_training_log(log_path)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for name in ("l_cls", "l_box", "l_rank", "total"):
        ax1.plot(cols["epoch"], cols[name], label=name)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=8)
    ax1.set_title("training losses")

    ax2.plot(cols["epoch"], cols["val_mrr"], color="tab:green", label="val MRR")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("validation MRR")
    ax2b = ax2.twinx()
    ax2b.plot(cols["epoch"], cols["lr"], color="tab:gray", linestyle="--", label="lr")
    ax2b.set_yscale("log")
    ax2b.set_ylabel("learning rate")
    ax2.set_title("validation")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_metrics_figure(metrics_path, out_path) -> None:
    """Bar chart of the headline metrics (MR excluded: different scale)."""
    table = read_metrics_report(metrics_path)
    keys = [k for k in table
            if k != "MR" and not k.startswith(("skipped", "attachment.count",
                                               "insertion.count"))]
    values = [table[k] for k in keys]
    fig, ax = plt.subplots(figsize=(max(6, 0.7 * len(keys)), 4))
    ax.bar(range(len(keys)), values, color="tab:blue")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("value")
    ax.set_title("ranking metrics")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def render_rank_histogram(results: list[RankResult], out_path) -> None:
    ranks = [r for res in results for r in res.ranks]
    if not ranks:
        return
    fig, ax = plt.subplots(figsize=(6, 4))
    bins = np.logspace(0, np.log10(max(ranks) + 1), 30)
    ax.hist(ranks, bins=bins, color="tab:purple")
    ax.set_xscale("log")
    ax.set_xlabel("ground-truth rank")
    ax.set_ylabel("count")
    ax.set_title("rank distribution")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
