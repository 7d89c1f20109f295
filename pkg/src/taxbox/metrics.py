"""Ranking metrics: MR, scaled MRR, Hit@k, Precision@k, and the
attachment/insertion breakdown."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class RankResult:
    """Ground-truth ranks for one evaluated query (one rank per true position)."""

    query: str
    ranks: list[int]
    kind: str  # "attachment" (leaf query) or "insertion" (internal query)


def rank_of(scores: np.ndarray, true_index: int) -> int:
    """Rank of one candidate under descending scores.

    Ties break by candidate index: equal-scored candidates that come
    earlier in the deterministic enumeration order rank first.
    """
    s = scores[true_index]
    greater = int(np.sum(scores > s))
    tied_before = int(np.sum(scores[:true_index] == s))
    return 1 + greater + tied_before


def mean_rank(results: list[RankResult]) -> float:
    """Mean over queries of each query's mean true-position rank.

    Sequential sums in formula order, so brute-force references agree to
    the last bit.
    """
    total = 0.0
    for r in results:
        total += sum(r.ranks) / len(r.ranks)
    return total / len(results)


def mean_reciprocal_rank(results: list[RankResult]) -> float:
    """Scaled MRR: RR = 1 / max(1, rank / 10), so ranks 1-10 all score 1.0."""
    total = 0.0
    for r in results:
        total += sum(1.0 / max(1.0, rank / 10.0) for rank in r.ranks) / len(r.ranks)
    return total / len(results)


def hit_at_k(results: list[RankResult], k: int) -> float:
    """Fraction of all true positions ranked within the top k."""
    hits = sum(1 for r in results for rank in r.ranks if rank <= k)
    total = sum(len(r.ranks) for r in results)
    return hits / total


def precision_at_k(results: list[RankResult], k: int) -> float:
    """True positions in the top k, normalized by k slots per query."""
    hits = sum(1 for r in results for rank in r.ranks if rank <= k)
    return hits / (k * len(results))


def metric_table(results: list[RankResult], ks=(1, 5, 10)) -> dict[str, float]:
    table = {
        "MR": mean_rank(results),
        "MRR": mean_reciprocal_rank(results),
    }
    for k in ks:
        table[f"Hit@{k}"] = hit_at_k(results, k)
    for k in ks:
        table[f"Precision@{k}"] = precision_at_k(results, k)
    return table


def breakdown_eval(results: list[RankResult]) -> dict[str, dict[str, float]]:
    """Per-kind MRR/Hit@1 tables; empty partitions are flagged with count 0."""
    out: dict[str, dict[str, float]] = {}
    for kind in ("attachment", "insertion"):
        part = [r for r in results if r.kind == kind]
        if not part:
            out[kind] = {"count": 0.0}
            continue
        out[kind] = {
            "count": float(len(part)),
            "MRR": mean_reciprocal_rank(part),
            "Hit@1": hit_at_k(part, 1),
            "Hit@10": hit_at_k(part, 10),
        }
    return out
