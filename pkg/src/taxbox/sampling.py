"""Self-supervised training-sample generation and ego-subtree sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .taxonomy import ABSENT, CandidatePosition, Taxonomy


@dataclass(frozen=True)
class EgoSubtree:
    """A node plus a sample of its one-hop children.

    A self-loop stands in whenever fewer than `max_children` children
    survive exclusion (always for leaves), so the aggregation layer never
    sees an empty neighborhood.
    """

    root: str
    children: tuple[str, ...]
    has_self_loop: bool


@dataclass(frozen=True)
class TrainingSample:
    query: str
    position: CandidatePosition
    labels: tuple[bool, bool, bool, bool]  # l1..l4
    is_positive: bool


@dataclass
class QueryGroup:
    """One query's positive plus its sampled negatives (positive first)."""

    query: str
    samples: list[TrainingSample] = field(default_factory=list)


def ego_subtree(tax: Taxonomy, n: str, max_children: int,
                rng: np.random.Generator, exclude: frozenset[str] = frozenset()) -> EgoSubtree:
    if max_children < 1:
        raise ValueError(f"max_children must be >= 1, got {max_children}")
    surviving = [c for c in tax.child_adj[n] if c not in exclude]
    if len(surviving) > max_children:
        picks = rng.choice(len(surviving), size=max_children, replace=False)
        children = tuple(surviving[i] for i in picks)
        return EgoSubtree(n, children, has_self_loop=False)
    return EgoSubtree(n, tuple(surviving), has_self_loop=len(surviving) < max_children)


def position_labels(tax: Taxonomy, query: str,
                    position: CandidatePosition) -> tuple[bool, bool, bool, bool]:
    """Containment label bits: which sides of the pair enclose / are enclosed by the query."""
    l1 = position.parent in tax.ancestors[query]
    l3 = position.parent in tax.descendants[query]
    if position.child is ABSENT:
        l2 = l4 = False
    else:
        l2 = position.child in tax.descendants[query]
        l4 = position.child in tax.ancestors[query]
    return (l1, l2, l3, l4)


def positive_positions(tax: Taxonomy, n: str) -> list[CandidatePosition]:
    """C_pos(n): parent/child combinations for internal nodes, attachment slots for leaves."""
    parents = tax.parent_adj[n]
    if tax.is_leaf(n):
        return [CandidatePosition(p, ABSENT) for p in parents]
    return [CandidatePosition(p, c) for p in parents for c in tax.child_adj[n]]


def form_dataset(tax: Taxonomy, neg_per_pos: int, seed: int,
                 hard_negatives: bool = False) -> list[QueryGroup]:
    """One group per query node: a uniform positive plus sampled negatives.

    Negatives are drawn uniformly without replacement from the candidate
    positions that neither touch the query node nor belong to C_pos(n);
    when the pool is smaller than `neg_per_pos` the whole pool is used.
    With `hard_negatives`, half the budget is filled from positions whose
    parent lies in the query's two-hop structural neighborhood first.
    Deterministic given the seed.
    """
    if neg_per_pos < 1:
        raise ValueError(f"neg_per_pos must be >= 1, got {neg_per_pos}")
    candidates = tax.enumerate_candidates()
    index = tax.candidate_index()
    queries = [n for n in tax.node_ids if tax.parent_adj[n]]
    if not queries:
        raise DataError("taxonomy has no non-root nodes; cannot form a dataset")

    parent_of = np.array([c.parent for c in candidates])
    child_of = np.array([c.child if c.child is not None else "" for c in candidates])

    groups: list[QueryGroup] = []
    for qi, n in enumerate(queries):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(qi,)))
        pos_set = positive_positions(tax, n)
        positive = pos_set[int(rng.integers(len(pos_set)))]

        keep = (parent_of != n) & (child_of != n)
        for p in pos_set:
            keep[index[p]] = False
        pool = np.flatnonzero(keep)
        take = min(neg_per_pos, pool.size)

        if hard_negatives and take > 0:
            near = _structural_neighborhood(tax, n)
            hard_mask = np.isin(parent_of[pool], sorted(near))
            hard_pool = pool[hard_mask]
            n_hard = min(take // 2, hard_pool.size)
            hard_pick = rng.choice(hard_pool, size=n_hard, replace=False) if n_hard else np.array([], dtype=np.int64)
            rest_pool = np.setdiff1d(pool, hard_pick)
            rest_pick = rng.choice(rest_pool, size=take - n_hard, replace=False)
            picks = np.concatenate([hard_pick, rest_pick])
        else:
            picks = rng.choice(pool, size=take, replace=False) if take else np.array([], dtype=np.int64)

        group = QueryGroup(query=n)
        group.samples.append(TrainingSample(
            n, positive, position_labels(tax, n, positive), is_positive=True))
        for i in sorted(int(v) for v in picks):
            pos = candidates[i]
            group.samples.append(TrainingSample(
                n, pos, position_labels(tax, n, pos), is_positive=False))
        groups.append(group)
    return groups


def _structural_neighborhood(tax: Taxonomy, n: str) -> set[str]:
    near: set[str] = set(tax.parent_adj[n]) | set(tax.child_adj[n])
    for p in tax.parent_adj[n]:
        near |= set(tax.parent_adj[p])
        near |= set(tax.child_adj[p])  # siblings
    return near - {n}
