"""On-disk dataset bundles: holdout splits, seed taxonomy, ground truth.

`gen-dataset` removes the held-out nodes, bypasses their edges so the
fragmented taxonomy is restored, and records each held-out node's true
positions relative to the seed. Eval and training read the bundle back
through `load_dataset`.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .taxonomy import (ABSENT, CandidatePosition, Taxonomy, build_seed,
                       ground_truth_positions, load)

SEED_TERMS = "seed_terms.tsv"
SEED_EDGES = "seed_edges.tsv"
SPLIT_FILE = "split.tsv"
HOLDOUT_TERMS = "holdout_terms.tsv"
GT_FILE = "gt_positions.tsv"


@dataclass
class DatasetBundle:
    seed: Taxonomy
    holdout_names: dict[str, str]
    roles: dict[str, str]  # query id -> test|valid
    gt: dict[str, list[CandidatePosition]]

    def queries(self, role: str) -> list[str]:
        return sorted(q for q, r in self.roles.items() if r == role)


def make_split(tax: Taxonomy, test_count: int, valid_count: int,
               seed: int) -> tuple[list[str], list[str]]:
    """Pick disjoint test/valid node sets; roots are never held out."""
    eligible = [n for n in tax.node_ids if tax.parent_adj[n]]
    if test_count + valid_count > len(eligible):
        raise ValueError(
            f"requested holdout of {test_count + valid_count} exceeds the "
            f"{len(eligible)} non-root nodes")
    if test_count < 0 or valid_count < 0:
        raise ValueError("holdout counts must be non-negative")
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(eligible), size=test_count + valid_count, replace=False)
    chosen = [eligible[i] for i in picks]
    return sorted(chosen[:test_count]), sorted(chosen[test_count:])


def write_dataset(out_dir, tax: Taxonomy, test_ids: list[str],
                  valid_ids: list[str]) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    removed = set(test_ids) | set(valid_ids)
    seed = build_seed(tax, removed)

    _write_tsv(out / SEED_TERMS, [(n, tax.names[n]) for n in seed.node_ids])
    _write_tsv(out / SEED_EDGES, sorted(seed.edges))
    roles = [(n, "test") for n in test_ids] + [(n, "valid") for n in valid_ids]
    _write_tsv(out / SPLIT_FILE, sorted(roles))
    _write_tsv(out / HOLDOUT_TERMS, [(n, tax.names[n]) for n in sorted(removed)])

    gt_rows = []
    for n, role in sorted(roles):
        for pos in ground_truth_positions(tax, n, removed):
            child = pos.child if pos.child is not ABSENT else "NONE"
            gt_rows.append((n, pos.parent, child, role))
    _write_tsv(out / GT_FILE, gt_rows)


def load_dataset(data_dir) -> DatasetBundle:
    data = Path(data_dir)
    for fname in (SEED_TERMS, SEED_EDGES, SPLIT_FILE, HOLDOUT_TERMS, GT_FILE):
        if not (data / fname).exists():
            raise DataError(f"dataset dir {data} is missing {fname}")
    seed = load(data / SEED_TERMS, data / SEED_EDGES)

    holdout_names: dict[str, str] = {}
    for parts in _read_tsv(data / HOLDOUT_TERMS, 2):
        holdout_names[parts[0]] = parts[1]

    roles: dict[str, str] = {}
    for parts in _read_tsv(data / SPLIT_FILE, 2):
        node, role = parts
        if role not in ("test", "valid"):
            raise DataError(f"{data / SPLIT_FILE}: bad role {role!r} for node {node}")
        if node not in holdout_names:
            raise DataError(f"{data / SPLIT_FILE}: node {node} missing from holdout terms")
        roles[node] = role

    gt: dict[str, list[CandidatePosition]] = {q: [] for q in roles}
    for parts in _read_tsv(data / GT_FILE, 4):
        query, parent, child, role = parts
        if query not in roles or roles[query] != role:
            raise DataError(f"{data / GT_FILE}: split/ground-truth mismatch for {query}")
        if parent not in seed:
            raise DataError(f"{data / GT_FILE}: parent {parent} not in seed taxonomy")
        pos = CandidatePosition(parent, ABSENT if child == "NONE" else child)
        if pos.child is not ABSENT and pos.child not in seed:
            raise DataError(f"{data / GT_FILE}: child {child} not in seed taxonomy")
        gt[query].append(pos)
    return DatasetBundle(seed=seed, holdout_names=holdout_names, roles=roles, gt=gt)


def _write_tsv(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def _read_tsv(path: Path, arity: int) -> list[list[str]]:
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(),
                                  start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != arity:
            raise DataError(f"{path}:{lineno}: expected {arity} fields, got {len(parts)}")
        out.append(parts)
    return out
