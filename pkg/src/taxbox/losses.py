"""Training objectives: classification, box constraint, ranking, and their sum.

All losses are tape ops over box-corner tensors so gradients flow back
through the decoders. Probabilities are clamped to [1e-7, 1 - 1e-7]
before any log: exact containment drives Pr to 1 and would otherwise
make log(1 - Pr) singular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .boxes import log_cond_prob_t
from .errors import DataError

PROB_EPS = 1e-7


@dataclass
class LossBreakdown:
    l_cls: float
    l_box: float
    l_rank: float

    @property
    def total(self) -> float:
        return self.l_cls + self.l_box + self.l_rank


def classification_loss(scores: Tensor, is_positive: np.ndarray,
                        pos_weight: float) -> Tensor:
    """Weighted binary cross-entropy over a batch of candidate scores.

    `pos_weight` counters the positive/negative imbalance (one positive
    per neg_per_pos negatives); it scales only the positive term.
    """
    y = np.asarray(is_positive, dtype=bool)
    s = scores.clip(PROB_EPS, 1.0 - PROB_EPS)
    term = ad.where(y, s.log() * pos_weight, (1.0 - s).log())
    return -term.mean()


def inclusion_loss(amin, amax, bmin, bmax, tau: float) -> Tensor:
    """l_in(a, b) = -log Pr(b | a): drives box b to contain box a."""
    return -log_cond_prob_t(bmin, bmax, amin, amax, tau)


def disjoint_loss(amin, amax, bmin, bmax, margin: np.ndarray, tau: float) -> Tensor:
    """l_dis(a, b) = max(0, log(1-margin) - log(1-Pr(a|b))): caps Pr(a|b) at the margin."""
    pr = log_cond_prob_t(amin, amax, bmin, bmax, tau).exp().clip(hi=1.0 - PROB_EPS)
    target = Tensor(np.log1p(-np.asarray(margin, dtype=pr.dtype)))
    return (target - (1.0 - pr).log()).relu()


def _l_in_pair(amin, amax, bmin, bmax, margin, tau) -> Tensor:
    """Composite L_in = l_in(a,b) + l_dis(a,b)."""
    return (inclusion_loss(amin, amax, bmin, bmax, tau)
            + disjoint_loss(amin, amax, bmin, bmax, margin, tau))


def _l_dis_pair(amin, amax, bmin, bmax, margin, tau) -> Tensor:
    """Symmetric L_dis = l_dis(a,b) + l_dis(b,a)."""
    return (disjoint_loss(amin, amax, bmin, bmax, margin, tau)
            + disjoint_loss(bmin, bmax, amin, amax, margin, tau))


def box_constraint_loss(qmin: Tensor, qmax: Tensor, pmin: Tensor, pmax: Tensor,
                        cmin: Tensor, cmax: Tensor, child_rows: np.ndarray,
                        labels: np.ndarray, parent_margin: np.ndarray,
                        child_margin: np.ndarray, tau: float) -> Tensor:
    """Batch mean of the six containment/disjointness cases.

    `labels` is (n, 4) bool for l1..l4; child tensors hold only the rows
    in `child_rows` (ABSENT-child samples contribute parent terms only).
    Margins are the per-sample structural margins between the query and
    the respective candidate node.
    """
    labels = np.asarray(labels, dtype=bool)
    n = labels.shape[0]
    l1, l2, l3, l4 = labels.T
    if np.any(l1 & l3) or np.any(l2 & l4):
        raise DataError("inconsistent containment labels: node marked both "
                        "ancestor and descendant of the query")

    dtype = qmin.dtype
    w1 = Tensor(l1.astype(dtype))
    w3 = Tensor(l3.astype(dtype))
    w5 = Tensor(((~l1) & (~l3)).astype(dtype))
    pm = np.asarray(parent_margin, dtype=dtype)
    total = (w1 * _l_in_pair(qmin, qmax, pmin, pmax, pm, tau)
             + w3 * _l_in_pair(pmin, pmax, qmin, qmax, pm, tau)
             + w5 * _l_dis_pair(qmin, qmax, pmin, pmax, pm, tau)).sum()

    if child_rows.size:
        l2s, l4s = l2[child_rows], l4[child_rows]
        w2 = Tensor(l2s.astype(dtype))
        w4 = Tensor(l4s.astype(dtype))
        w6 = Tensor(((~l2s) & (~l4s)).astype(dtype))
        cm = np.asarray(child_margin, dtype=dtype)
        qmin_s, qmax_s = qmin, qmax
        if qmin.shape[0] == n:
            qmin_s, qmax_s = qmin[child_rows], qmax[child_rows]
        total = total + (w2 * _l_in_pair(cmin, cmax, qmin_s, qmax_s, cm, tau)
                         + w4 * _l_in_pair(qmin_s, qmax_s, cmin, cmax, cm, tau)
                         + w6 * _l_dis_pair(cmin, cmax, qmin_s, qmax_s, cm, tau)).sum()

    return total * (1.0 / float(n))


def ranking_loss(pos_scores: Tensor, neg_scores: Tensor,
                 margins: np.ndarray) -> Tensor:
    """Mean hinge over (positive, negative) pairs of one query group.

    margins[k] is the structural margin between the positive's parent
    and negative k's parent.
    """
    m = Tensor(np.asarray(margins, dtype=neg_scores.dtype))
    return (m + neg_scores - pos_scores).relu().mean()


def total_loss(l_cls: Tensor | None, l_box: Tensor | None,
               l_rank: Tensor | None) -> tuple[Tensor, LossBreakdown]:
    """Unweighted sum; disabled components (None) drop out for ablations."""
    parts = [t for t in (l_cls, l_box, l_rank) if t is not None]
    if not parts:
        raise ValueError("all loss components disabled")
    total = parts[0]
    for t in parts[1:]:
        total = total + t
    breakdown = LossBreakdown(
        l_cls=l_cls.item() if l_cls is not None else 0.0,
        l_box=l_box.item() if l_box is not None else 0.0,
        l_rank=l_rank.item() if l_rank is not None else 0.0,
    )
    return total, breakdown
