"""Immutable taxonomy DAG: depths, candidate positions, structural margins.

Node ids are strings. Depth is 1 at roots and 1 + max over parents
elsewhere, so Wu&Palmer-style ratios stay in (0, 1]. Candidate positions
are every ⟨parent, descendant⟩ pair plus one ⟨parent, ABSENT⟩ attachment
slot per node, in a deterministic sorted order that the rest of the
system (caches, rankings, tie-breaking) is aligned to.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

ABSENT = None


@dataclass(frozen=True, order=True)
class CandidatePosition:
    """A ⟨parent, child⟩ slot; child None means leaf attachment."""

    parent: str
    child: str | None = ABSENT

    def key(self) -> str:
        return f"{self.parent}\t{self.child if self.child is not None else 'NONE'}"


class Taxonomy:
    def __init__(self, nodes: list[tuple[str, str]], edges):
        self.names: dict[str, str] = {}
        for node_id, name in nodes:
            if node_id in self.names:
                raise DataError(f"duplicate node id: {node_id}")
            self.names[node_id] = name
        self.node_ids: list[str] = sorted(self.names)

        parent_adj: dict[str, set[str]] = {n: set() for n in self.node_ids}
        child_adj: dict[str, set[str]] = {n: set() for n in self.node_ids}
        edge_set: set[tuple[str, str]] = set()
        for p, c in edges:
            if p not in self.names or c not in self.names:
                missing = p if p not in self.names else c
                raise DataError(f"edge ({p}, {c}) references unknown node {missing!r}")
            if p == c:
                raise DataError(f"cycle detected at edge ({p}, {c})")
            edge_set.add((p, c))
            parent_adj[c].add(p)
            child_adj[p].add(c)
        self.edges = edge_set
        self.parent_adj = {n: tuple(sorted(parent_adj[n])) for n in self.node_ids}
        self.child_adj = {n: tuple(sorted(child_adj[n])) for n in self.node_ids}
        self.roots = [n for n in self.node_ids if not self.parent_adj[n]]
        if not self.roots and self.node_ids:
            raise DataError(f"cycle detected at edge {self._find_cycle_edge(set(self.node_ids))}")

        self._topo = self._toposort()
        self.depth: dict[str, int] = {}
        for n in self._topo:
            parents = self.parent_adj[n]
            self.depth[n] = 1 + max((self.depth[p] for p in parents), default=0)

        # strict ancestor/descendant sets; desk-scale taxonomies keep these small
        self.ancestors: dict[str, frozenset[str]] = {}
        for n in self._topo:
            acc: set[str] = set()
            for p in self.parent_adj[n]:
                acc.add(p)
                acc |= self.ancestors[p]
            self.ancestors[n] = frozenset(acc)
        self.descendants: dict[str, frozenset[str]] = {}
        for n in reversed(self._topo):
            acc = set()
            for c in self.child_adj[n]:
                acc.add(c)
                acc |= self.descendants[c]
            self.descendants[n] = frozenset(acc)

        self._candidates: list[CandidatePosition] | None = None
        self._candidate_index: dict[CandidatePosition, int] | None = None

    def _toposort(self) -> list[str]:
        indeg = {n: len(self.parent_adj[n]) for n in self.node_ids}
        order: list[str] = []
        frontier = sorted(n for n in self.node_ids if indeg[n] == 0)
        while frontier:
            n = frontier.pop(0)
            order.append(n)
            for c in self.child_adj[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    frontier.append(c)
            frontier.sort()
        if len(order) != len(self.node_ids):
            residual = set(self.node_ids) - set(order)
            raise DataError(f"cycle detected at edge {self._find_cycle_edge(residual)}")
        return order

    def _find_cycle_edge(self, residual: set[str]) -> tuple[str, str]:
        # every residual node keeps a residual parent, so walking up revisits
        start = min(residual)
        path = [start]
        seen = {start}
        while True:
            cur = path[-1]
            parent = min(p for p in self.parent_adj[cur] if p in residual)
            if parent in seen:
                return (parent, cur)
            seen.add(parent)
            path.append(parent)

    # -- structure queries ------------------------------------------------

    def __len__(self) -> int:
        return len(self.node_ids)

    def __contains__(self, node_id: str) -> bool:
        return node_id in self.names

    def is_leaf(self, n: str) -> bool:
        return not self.child_adj[n]

    def _require(self, n: str) -> None:
        if n not in self.names:
            raise KeyError(f"unknown node: {n}")

    def lca_depth(self, a: str, b: str) -> int:
        """Depth of the deepest common ancestor (a node is its own ancestor).

        Returns 0 when the two nodes share no ancestor (disjoint forest
        components fall back to a virtual depth-0 root).
        """
        self._require(a)
        self._require(b)
        common = (self.ancestors[a] | {a}) & (self.ancestors[b] | {b})
        if not common:
            return 0
        return max(self.depth[n] for n in common)

    def dynamic_margin(self, a: str, b: str, alpha: float) -> float:
        """Wu&Palmer-style structural similarity scaled by alpha."""
        return alpha * 2.0 * self.lca_depth(a, b) / (self.depth[a] + self.depth[b])

    # -- candidate positions ----------------------------------------------

    def enumerate_candidates(self) -> list[CandidatePosition]:
        """All ⟨p, strict descendant⟩ pairs plus one attachment slot per node.

        Order: parent id, then child id, with the ABSENT slot last per
        parent. Cached; the index of a position in this list is its
        canonical candidate index.
        """
        if self._candidates is None:
            out: list[CandidatePosition] = []
            for p in self.node_ids:
                for c in sorted(self.descendants[p]):
                    out.append(CandidatePosition(p, c))
                out.append(CandidatePosition(p, ABSENT))
            self._candidates = out
            self._candidate_index = {pos: i for i, pos in enumerate(out)}
        return self._candidates

    def candidate_index(self) -> dict[CandidatePosition, int]:
        self.enumerate_candidates()
        return self._candidate_index

    def candidate_endpoint_rows(self) -> tuple[np.ndarray, np.ndarray]:
        """Parent/child node-row arrays aligned with the candidate order (-1 = ABSENT)."""
        row = {n: i for i, n in enumerate(self.node_ids)}
        cands = self.enumerate_candidates()
        parents = np.array([row[c.parent] for c in cands], dtype=np.int64)
        children = np.array([-1 if c.child is None else row[c.child] for c in cands],
                            dtype=np.int64)
        return parents, children


def load(terms_file, edges_file) -> Taxonomy:
    """Build a taxonomy from tab-separated terms and edges files."""
    nodes = []
    for lineno, line in enumerate(_read_lines(terms_file), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{terms_file}:{lineno}: expected 'id<TAB>name', got {line!r}")
        nodes.append((parts[0], parts[1]))
    edges = []
    for lineno, line in enumerate(_read_lines(edges_file), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{edges_file}:{lineno}: expected 'parent<TAB>child', got {line!r}")
        edges.append((parts[0], parts[1]))
    return Taxonomy(nodes, edges)


def _read_lines(path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    return [ln for ln in text.splitlines() if ln.strip()]


# -- holdout splits ---------------------------------------------------------


def surviving_parents(tax: Taxonomy, node: str, removed: set[str]) -> list[str]:
    """Closest surviving ancestors, walking up through removed nodes."""
    out: set[str] = set()
    stack = list(tax.parent_adj[node])
    seen = set(stack)
    while stack:
        p = stack.pop()
        if p in removed:
            for pp in tax.parent_adj[p]:
                if pp not in seen:
                    seen.add(pp)
                    stack.append(pp)
        else:
            out.add(p)
    return sorted(out)


def surviving_children(tax: Taxonomy, node: str, removed: set[str]) -> list[str]:
    """Closest surviving descendants, walking down through removed nodes."""
    out: set[str] = set()
    stack = list(tax.child_adj[node])
    seen = set(stack)
    while stack:
        c = stack.pop()
        if c in removed:
            for cc in tax.child_adj[c]:
                if cc not in seen:
                    seen.add(cc)
                    stack.append(cc)
        else:
            out.add(c)
    return sorted(out)


def build_seed(tax: Taxonomy, removed: set[str]) -> Taxonomy:
    """Seed taxonomy after removing nodes, with bypass edges restoring paths.

    Every removed node's closest surviving parents are connected to its
    closest surviving children, so ground-truth positions of held-out
    nodes remain valid candidate positions of the seed.
    """
    survivors = [n for n in tax.node_ids if n not in removed]
    edges = {(p, c) for p, c in tax.edges if p not in removed and c not in removed}
    for r in removed:
        for sp in surviving_parents(tax, r, removed):
            for sc in surviving_children(tax, r, removed):
                edges.add((sp, sc))
    return Taxonomy([(n, tax.names[n]) for n in survivors], sorted(edges))


def ground_truth_positions(tax: Taxonomy, node: str, removed: set[str]) -> list[CandidatePosition]:
    """True positions of a held-out node, relative to the seed taxonomy.

    Leaves map to attachment slots under each surviving parent; internal
    nodes map to every surviving ⟨parent, child⟩ combination.
    """
    parents = surviving_parents(tax, node, removed)
    if tax.is_leaf(node):
        return [CandidatePosition(p, ABSENT) for p in parents]
    children = surviving_children(tax, node, removed)
    return [CandidatePosition(p, c) for p in parents for c in children]
