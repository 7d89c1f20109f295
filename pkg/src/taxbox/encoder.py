"""Graph aggregation over ego-subtrees and the twin highway box decoders.

The aggregation layer is a single multi-head attention pass in which the
root attends over its sampled children (edges point child -> root) plus
itself when the subtree carries a self-loop. The root's attended output
is added to the raw root embedding and passed through one linear layer.

Two structurally identical but weight-disjoint decoders map features to
boxes: two highway layers, then a linear projection whose output splits
into a center and a softplus-positive offset, so decoded boxes always
have min < max on every axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DataError
from .optim import ParamStore
from .sampling import EgoSubtree

_MASK_OFF = -1e30


@dataclass(frozen=True)
class EncoderConfig:
    d_in: int
    d_box: int
    n_heads: int = 4
    dropout: float = 0.1
    max_children: int = 30

    def __post_init__(self):
        if self.d_in <= 0 or self.d_box <= 0:
            raise ValueError("d_in and d_box must be positive")
        if self.d_in % self.n_heads != 0:
            raise ValueError(f"n_heads={self.n_heads} must divide d_in={self.d_in}")

    @property
    def d_head(self) -> int:
        return self.d_in // self.n_heads


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(store: ParamStore, cfg: EncoderConfig, rng: np.random.Generator) -> None:
    d, dh, h = cfg.d_in, cfg.d_head, cfg.n_heads
    store.add("gat.w", _glorot(rng, d, d, (d, d)))
    store.add("gat.a_src", _glorot(rng, dh, 1, (h, dh)))
    store.add("gat.a_dst", _glorot(rng, dh, 1, (h, dh)))
    store.add("agg.w", _glorot(rng, d, d, (d, d)))
    store.add("agg.b", np.zeros(d))
    for side in ("key", "qry"):
        for layer in ("h1", "h2"):
            store.add(f"{side}.{layer}.wh", _glorot(rng, d, d, (d, d)))
            store.add(f"{side}.{layer}.bh", np.zeros(d))
            store.add(f"{side}.{layer}.wt", _glorot(rng, d, d, (d, d)))
            # negative transform bias starts the highway near identity
            store.add(f"{side}.{layer}.bt", np.full(d, -1.0))
        store.add(f"{side}.out.w", _glorot(rng, d, 2 * cfg.d_box, (d, 2 * cfg.d_box)))
        store.add(f"{side}.out.b", np.zeros(2 * cfg.d_box))


def aggregate_batch(subtrees: list[EgoSubtree], emb: np.ndarray,
                    row_of: dict[str, int], store: ParamStore, cfg: EncoderConfig,
                    train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Aggregated features, one row per subtree. `emb` rows are constants."""
    B = len(subtrees)
    d, h, dh = cfg.d_in, cfg.n_heads, cfg.d_head
    if emb.shape[1] != d:
        raise DataError(f"embedding dim {emb.shape[1]} does not match d_in {d}")

    sizes = []
    for sub in subtrees:
        for node in (sub.root, *sub.children):
            if node not in row_of:
                raise DataError(f"no embedding row for subtree node {node!r}")
        sizes.append(len(sub.children) + (1 if sub.has_self_loop else 0))
    K = max(sizes)

    idx = np.zeros((B, K), dtype=np.int64)
    mask = np.full((B, K, 1), _MASK_OFF, dtype=emb.dtype)
    root_rows = np.empty(B, dtype=np.int64)
    for i, sub in enumerate(subtrees):
        neigh = [row_of[c] for c in sub.children]
        if sub.has_self_loop:
            neigh.append(row_of[sub.root])
        idx[i, :len(neigh)] = neigh
        mask[i, :len(neigh), 0] = 0.0
        root_rows[i] = row_of[sub.root]

    x_neigh = Tensor(emb[idx])            # (B, K, d) constant
    x_root = Tensor(emb[root_rows])       # (B, d) constant

    w = store["gat.w"]
    z = (x_neigh.reshape(B * K, d) @ w).reshape(B, K, h, dh)
    z_root = (x_root @ w).reshape(B, h, dh)

    a_src = store["gat.a_src"].reshape(1, 1, h, dh)
    a_dst = store["gat.a_dst"].reshape(1, h, dh)
    s_src = (z * a_src).sum(axis=-1)                      # (B, K, h)
    s_dst = (z_root * a_dst).sum(axis=-1).reshape(B, 1, h)
    scores = (s_src + s_dst).leaky_relu(0.2) + Tensor(mask)
    att = scores.softmax(axis=1)                          # (B, K, h)
    att = ad.dropout(att, cfg.dropout, train, rng)
    gat_root = (att.reshape(B, K, h, 1) * z).sum(axis=1).reshape(B, d)

    return (gat_root + x_root) @ store["agg.w"] + store["agg.b"]


def aggregate(sub: EgoSubtree, emb: np.ndarray, row_of: dict[str, int],
              store: ParamStore, cfg: EncoderConfig, train: bool = False,
              rng: np.random.Generator | None = None) -> Tensor:
    """Single-subtree convenience wrapper; returns a (d_in,) feature."""
    return aggregate_batch([sub], emb, row_of, store, cfg, train, rng).reshape(cfg.d_in)


def _decode(x: Tensor, store: ParamStore, side: str, d_box: int) -> tuple[Tensor, Tensor]:
    for layer in ("h1", "h2"):
        p = f"{side}.{layer}"
        hid = (x @ store[f"{p}.wh"] + store[f"{p}.bh"]).relu()
        gate = (x @ store[f"{p}.wt"] + store[f"{p}.bt"]).sigmoid()
        x = gate * hid + (1.0 - gate) * x
    out = x @ store[f"{side}.out.w"] + store[f"{side}.out.b"]
    c = out[:, :d_box]
    half = out[:, d_box:].softplus() * 0.5
    return c - half, c + half


def decode_key(features: Tensor, store: ParamStore, cfg: EncoderConfig) -> tuple[Tensor, Tensor]:
    """Box corners (min, max), each (B, d_box), for aggregated candidate features."""
    if features.shape[-1] != cfg.d_in:
        raise ValueError(f"decode_key: feature dim {features.shape[-1]} != d_in {cfg.d_in}")
    return _decode(_as_matrix(features), store, "key", cfg.d_box)


def decode_query(embedding: Tensor, store: ParamStore, cfg: EncoderConfig) -> tuple[Tensor, Tensor]:
    """Box corners for raw query embeddings (queries have no known children)."""
    if embedding.shape[-1] != cfg.d_in:
        raise ValueError(f"decode_query: feature dim {embedding.shape[-1]} != d_in {cfg.d_in}")
    return _decode(_as_matrix(embedding), store, "qry", cfg.d_box)


def _as_matrix(t: Tensor) -> Tensor:
    return t.reshape(1, t.shape[0]) if t.ndim == 1 else t
