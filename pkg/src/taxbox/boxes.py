"""Box embedding kernels: centers, smoothed intersection/volume, containment.

A box is an axis-aligned hyperrectangle stored as a (min, max) corner
pair. Volumes are smoothed per axis with tau * softplus(extent / tau),
which keeps them strictly positive and differentiable even for negative
extents (disjoint intersections). All volume arithmetic happens in log
space so that ratios stay finite up to at least 160 dimensions.

Two parallel implementations share the same formulas: plain-numpy
kernels for oracle tests and fast inference, and tape-based kernels
(suffix ``_t``) for training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

# below this, log(softplus(a)) == a to double precision and the direct
# log would underflow in float32
_LOG_SOFTPLUS_CUT = -30.0


@dataclass(frozen=True)
class Smoothing:
    """Softplus temperature for volume smoothing."""

    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class Box:
    """One concept's embedding: a d-dimensional corner pair.

    Decoder outputs satisfy min <= max on every axis; intersection
    results may not, and every kernel here accepts that.
    """

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __init__(self, min_corner, max_corner):
        mn = np.asarray(min_corner, dtype=np.float64)
        mx = np.asarray(max_corner, dtype=np.float64)
        if mn.shape != mx.shape or mn.ndim != 1:
            raise ValueError(f"box corners must be equal-length vectors, "
                             f"got {mn.shape} and {mx.shape}")
        object.__setattr__(self, "min_corner", mn)
        object.__setattr__(self, "max_corner", mx)

    @property
    def dim(self) -> int:
        return self.min_corner.shape[0]


def center(b: Box) -> np.ndarray:
    return (b.max_corner + b.min_corner) / 2.0


def intersection(x: Box, y: Box) -> Box:
    """Corner-wise intersection; negative extents encode disjointness."""
    if x.dim != y.dim:
        raise ValueError(f"intersection: dimension mismatch {x.dim} vs {y.dim}")
    return Box(np.maximum(x.min_corner, y.min_corner),
               np.minimum(x.max_corner, y.max_corner))


def _log_softplus(a: np.ndarray) -> np.ndarray:
    """log(log1p(exp(a))), stable over the whole real line."""
    a = np.asarray(a)
    safe = np.maximum(a, _LOG_SOFTPLUS_CUT)
    sp = np.maximum(safe, 0.0) + np.log1p(np.exp(-np.abs(safe)))
    return np.where(a < _LOG_SOFTPLUS_CUT, a, np.log(sp))


def log_volume(bmin: np.ndarray, bmax: np.ndarray, tau: float) -> np.ndarray:
    """Log smoothed volume of (..., d) corner arrays, reduced over the last axis."""
    bmin = np.asarray(bmin)
    bmax = np.asarray(bmax)
    d = bmin.shape[-1]
    extents = (bmax - bmin) / tau
    return _log_softplus(extents).sum(axis=-1) + d * math.log(tau)


def volume(b: Box, s: Smoothing) -> float:
    """Smoothed volume; strictly positive for any extents."""
    return float(np.exp(log_volume(b.min_corner, b.max_corner, s.tau)))


def cond_prob(x: Box, y: Box, s: Smoothing) -> float:
    """Probability that box x contains box y: Vol(x ∩ y) / Vol(y).

    Computed as exp(logVol(int) - logVol(y)); equals 1.0 exactly when
    the intersection reproduces y (e.g. cond_prob(x, x)).
    """
    inter = intersection(x, y)
    lv_int = log_volume(inter.min_corner, inter.max_corner, s.tau)
    lv_y = log_volume(y.min_corner, y.max_corner, s.tau)
    return float(np.exp(lv_int - lv_y))


# -- batched numpy kernels (inference path) -------------------------------


def log_volume_nd(bmin: np.ndarray, bmax: np.ndarray, tau: float) -> np.ndarray:
    return log_volume(bmin, bmax, tau)


def intersect_nd(amin, amax, bmin, bmax):
    return np.maximum(amin, bmin), np.minimum(amax, bmax)


# -- tape kernels (training path) ------------------------------------------


def log_volume_t(bmin: Tensor, bmax: Tensor, tau: float) -> Tensor:
    """Tape version of log_volume over (..., d) tensors."""
    d = bmin.shape[-1]
    extents = (bmax - bmin) * (1.0 / tau)
    sp = extents.softplus().clip(lo=1e-30)
    log_sp = ad.where(extents.data < _LOG_SOFTPLUS_CUT, extents, sp.log())
    return log_sp.sum(axis=-1) + d * math.log(tau)


def log_cond_prob_t(xmin: Tensor, xmax: Tensor, ymin: Tensor, ymax: Tensor,
                    tau: float) -> Tensor:
    """log Pr(x | y) for broadcast-compatible corner tensors."""
    imin = ad.maximum(xmin, ymin)
    imax = ad.minimum(xmax, ymax)
    return log_volume_t(imin, imax, tau) - log_volume_t(ymin, ymax, tau)
