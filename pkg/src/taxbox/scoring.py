"""Insertion and attachment scorers over box triples/pairs.

Scores multiply conditional containment probabilities with center
similarities that are softmax-normalized within a score group: the 1 +
negatives of one query at training time, the query's full candidate
list at prediction time. Candidates without a child use the attachment
form and contribute a neutral child similarity of 1, which is what lets
the system rank attachments and insertions together without pseudo-leaf
placeholders.

The plain-numpy path (`score_group`, `score_positions`) serves oracle
tests and inference; `group_scores_t` is the tape path used in training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .boxes import Box, Smoothing, center, log_volume, log_volume_t
from .errors import DataError

DIST_FLOOR = 1e-9


@dataclass
class ScoreGroup:
    """A query box and candidate (parent, optional child) boxes scored together."""

    query: Box
    candidates: list[tuple[Box, Box | None]]


def _softmax(v: np.ndarray) -> np.ndarray:
    e = np.exp(v - v.max())
    return e / e.sum()


def _stack(boxes: list[Box]) -> tuple[np.ndarray, np.ndarray]:
    return (np.stack([b.min_corner for b in boxes]),
            np.stack([b.max_corner for b in boxes]))


def center_similarity(group: ScoreGroup) -> tuple[np.ndarray, np.ndarray]:
    """Per-candidate (sim_parent, sim_child), softmaxed within the group.

    The child softmax runs over the candidates that have a child;
    ABSENT-child candidates get the neutral value 1.
    """
    if not group.candidates:
        raise ValueError("center_similarity: empty group")
    qc = center(group.query)
    pmin, pmax = _stack([p for p, _ in group.candidates])
    pcen = (pmin + pmax) / 2.0
    dist_p = np.linalg.norm(qc - pcen, axis=-1)
    sim_p = _softmax(1.0 / np.maximum(dist_p, DIST_FLOOR))

    sim_c = np.ones(len(group.candidates))
    child_rows = [i for i, (_, c) in enumerate(group.candidates) if c is not None]
    if child_rows:
        cmin, cmax = _stack([group.candidates[i][1] for i in child_rows])
        ccen = (cmin + cmax) / 2.0
        dist_c = np.linalg.norm(qc - ccen, axis=-1)
        sim_c[child_rows] = _softmax(1.0 / np.maximum(dist_c, DIST_FLOOR))
    return sim_p, sim_c


def insertion_score(b_q: Box, b_p: Box, b_c: Box, sims: tuple[float, float],
                    s: Smoothing) -> float:
    """Pr(B_p|B_q) * Pr(B_q|B_c) * sim_parent * sim_child."""
    from .boxes import cond_prob
    return cond_prob(b_p, b_q, s) * cond_prob(b_q, b_c, s) * sims[0] * sims[1]


def attachment_score(b_q: Box, b_p: Box, sim_parent: float, s: Smoothing) -> float:
    """Pr(B_q|B_p) * sim_parent (conditioning on the parent, as printed)."""
    from .boxes import cond_prob
    return cond_prob(b_q, b_p, s) * sim_parent


def score_group(group: ScoreGroup, s: Smoothing) -> np.ndarray:
    """One score in [0, 1] per candidate, insertion or attachment by shape."""
    qmin = group.query.min_corner
    qmax = group.query.max_corner
    pmin, pmax = _stack([p for p, _ in group.candidates])
    child_rows = np.array([i for i, (_, c) in enumerate(group.candidates) if c is not None],
                          dtype=np.int64)
    if child_rows.size:
        cmin, cmax = _stack([group.candidates[i][1] for i in child_rows])
    else:
        cmin = cmax = np.zeros((0, qmin.shape[0]))
    return _scores_np(qmin, qmax, pmin, pmax, cmin, cmax, child_rows,
                      len(group.candidates), s.tau)


def _scores_np(qmin, qmax, pmin, pmax, cmin, cmax, child_rows, n, tau) -> np.ndarray:
    """Shared vectorized scoring core; child arrays hold only child-present rows."""
    lv_q = log_volume(qmin, qmax, tau)
    imin = np.maximum(qmin, pmin)
    imax = np.minimum(qmax, pmax)
    lv_int = log_volume(imin, imax, tau)
    lv_p = log_volume(pmin, pmax, tau)
    has_child = np.zeros(n, dtype=bool)
    has_child[child_rows] = True
    # insertion conditions on the query volume, attachment on the parent's
    parent_factor = np.exp(lv_int - np.where(has_child, lv_q, lv_p))

    child_factor = np.ones(n)
    if child_rows.size:
        icmin = np.maximum(qmin, cmin)
        icmax = np.minimum(qmax, cmax)
        child_factor[child_rows] = np.exp(
            log_volume(icmin, icmax, tau) - log_volume(cmin, cmax, tau))

    qcen = (qmin + qmax) / 2.0
    dist_p = np.linalg.norm(qcen - (pmin + pmax) / 2.0, axis=-1)
    sim_p = _softmax(1.0 / np.maximum(dist_p, DIST_FLOOR))
    sim_c = np.ones(n)
    if child_rows.size:
        dist_c = np.linalg.norm(qcen - (cmin + cmax) / 2.0, axis=-1)
        sim_c[child_rows] = _softmax(1.0 / np.maximum(dist_c, DIST_FLOOR))

    return parent_factor * child_factor * sim_p * sim_c


def score_positions(qmin: np.ndarray, qmax: np.ndarray, cand_min: np.ndarray,
                    cand_max: np.ndarray, child_rows: np.ndarray, tau: float) -> np.ndarray:
    """Score a query against cached candidate boxes, shape (n, 2, d_box).

    Axis 1 holds the (parent, child) boxes of each enumerated position;
    `child_rows` lists the positions that actually have a child. Pure
    array work over the precomputed cache: the graph aggregation never
    reruns here, which is what keeps per-query scoring cheap.
    """
    if cand_min.ndim != 3 or cand_min.shape[1] != 2 or cand_min.shape != cand_max.shape:
        raise DataError(f"candidate cache has shape {cand_min.shape}, expected (n, 2, d)")
    if cand_min.shape[2] != qmin.shape[-1]:
        raise DataError(f"candidate cache dim {cand_min.shape[2]} does not match "
                        f"query dim {qmin.shape[-1]}")
    n = cand_min.shape[0]
    if child_rows.size and (child_rows.min() < 0 or child_rows.max() >= n):
        raise DataError("child_rows misaligned with candidate cache")
    return _scores_np(qmin, qmax, cand_min[:, 0], cand_max[:, 0],
                      cand_min[child_rows, 1], cand_max[child_rows, 1],
                      child_rows, n, tau)


# -- tape path ---------------------------------------------------------------


def _scatter_t(values: Tensor, rows: np.ndarray, size: int, fill: float,
               dtype) -> Tensor:
    """Place `values` at `rows` of a length-`size` vector filled with `fill`."""
    filled = Tensor(np.full(size, fill, dtype=dtype))
    if rows.size == 0:
        return filled
    inv = np.zeros(size, dtype=np.int64)
    inv[rows] = np.arange(rows.size)
    mask = np.zeros(size, dtype=bool)
    mask[rows] = True
    return ad.where(mask, values[inv], filled)


def group_scores_t(qmin: Tensor, qmax: Tensor, pmin: Tensor, pmax: Tensor,
                   cmin: Tensor, cmax: Tensor, child_rows: np.ndarray,
                   tau: float) -> Tensor:
    """Training-time scores for one group; query corners are (1, d)."""
    n = pmin.shape[0]
    dtype = pmin.dtype
    lv_q = log_volume_t(qmin, qmax, tau).reshape(1)
    imin = ad.maximum(qmin, pmin)
    imax = ad.minimum(qmax, pmax)
    lv_int = log_volume_t(imin, imax, tau)
    lv_p = log_volume_t(pmin, pmax, tau)
    has_child = np.zeros(n, dtype=bool)
    has_child[child_rows] = True
    parent_factor = (lv_int - ad.where(has_child, lv_q * Tensor(np.ones(n, dtype)), lv_p)).exp()

    if child_rows.size:
        icmin = ad.maximum(qmin, cmin)
        icmax = ad.minimum(qmax, cmax)
        pr_c = (log_volume_t(icmin, icmax, tau) - log_volume_t(cmin, cmax, tau)).exp()
        child_factor = _scatter_t(pr_c, child_rows, n, 1.0, dtype)
    else:
        child_factor = Tensor(np.ones(n, dtype=dtype))

    qcen = (qmin + qmax) * 0.5
    # flooring the squared distance keeps the sqrt gradient finite at 0
    # and equals max(dist, floor) exactly
    sim_p = _center_sim_t((pmin + pmax) * 0.5, qcen)
    if child_rows.size:
        sim_c = _scatter_t(_center_sim_t((cmin + cmax) * 0.5, qcen),
                           child_rows, n, 1.0, dtype)
    else:
        sim_c = Tensor(np.ones(n, dtype=dtype))

    return parent_factor * child_factor * sim_p * sim_c


def _center_sim_t(cen: Tensor, qcen: Tensor) -> Tensor:
    diff = cen - qcen
    dist = ad.maximum((diff * diff).sum(axis=-1), DIST_FLOOR ** 2).sqrt()
    return (1.0 / dist).softmax(axis=-1)
