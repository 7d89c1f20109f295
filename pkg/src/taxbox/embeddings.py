"""Whitespace-delimited embedding file parsing and term lookup."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import DataError


class EmbeddingTable:
    """term -> row lookup over a dense matrix; terms use underscores for spaces."""

    def __init__(self, terms: list[str], matrix: np.ndarray):
        self.matrix = matrix
        self.row: dict[str, int] = {}
        for i, t in enumerate(terms):
            self.row[t] = i

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __contains__(self, term: str) -> bool:
        return _normalize(term) in self.row

    def vector(self, term: str) -> np.ndarray:
        key = _normalize(term)
        if key not in self.row:
            raise KeyError(f"no embedding for term {term!r}")
        return self.matrix[self.row[key]]

    def missing(self, terms) -> list[str]:
        return [t for t in terms if _normalize(t) not in self.row]

    def matrix_for(self, terms: list[str]) -> np.ndarray:
        """Rows for `terms`, in order; raises DataError listing any misses."""
        misses = self.missing(terms)
        if misses:
            shown = ", ".join(repr(t) for t in misses[:10])
            more = f" (+{len(misses) - 10} more)" if len(misses) > 10 else ""
            raise DataError(f"{len(misses)} terms have no embedding: {shown}{more}")
        rows = [self.row[_normalize(t)] for t in terms]
        return self.matrix[rows]


def _normalize(term: str) -> str:
    return term.replace(" ", "_")


def load_embeddings(path) -> EmbeddingTable:
    """Parse a text embedding file: header `count dim`, then `term v1 .. v_dim` rows."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty embedding file")
    header = lines[0].split()
    if len(header) != 2:
        raise DataError(f"{path}:1: expected header 'count dim', got {lines[0]!r}")
    try:
        count, dim = int(header[0]), int(header[1])
    except ValueError as exc:
        raise DataError(f"{path}:1: non-integer header {lines[0]!r}") from exc
    if len(lines) - 1 != count:
        raise DataError(f"{path}: header says {count} rows, found {len(lines) - 1}")

    terms: list[str] = []
    matrix = np.empty((count, dim), dtype=np.float32)
    for i, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if len(parts) != dim + 1:
            raise DataError(f"{path}:{i}: expected {dim + 1} fields, got {len(parts)}")
        terms.append(parts[0])
        try:
            matrix[i - 2] = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise DataError(f"{path}:{i}: non-numeric value") from exc
    return EmbeddingTable(terms, matrix)
