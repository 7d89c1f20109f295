"""Training loop, candidate-box caching, ranking, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import load_arrays, save_arrays
from .config import RunConfig
from .dataset import DatasetBundle
from .embeddings import EmbeddingTable
from .encoder import (EncoderConfig, aggregate_batch, decode_key, decode_query,
                      init_params)
from .errors import DataError, NumericError
from .losses import (LossBreakdown, box_constraint_loss, classification_loss,
                     total_loss)
from .metrics import RankResult, mean_reciprocal_rank, rank_of
from .optim import ParamStore, PlateauScheduler
from .sampling import QueryGroup, ego_subtree, form_dataset
from .scoring import group_scores_t, score_positions
from .taxonomy import ABSENT, Taxonomy

CHECKPOINT_NAME = "model.ckpt"
CONFIG_NAME = "config.txt"
TRAINING_LOG = "training_log.tsv"


@dataclass
class EpochStats:
    epoch: int
    l_cls: float
    l_box: float
    l_rank: float
    total: float
    val_mrr: float
    lr: float


@dataclass
class TrainSummary:
    checkpoint: Path
    best_epoch: int
    best_val_mrr: float
    log: list[EpochStats] = field(default_factory=list)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def build_embedding_matrix(bundle: DatasetBundle, table: EmbeddingTable,
                           dtype) -> tuple[np.ndarray, dict[str, int]]:
    """Embedding rows for every seed node and held-out query, by node id."""
    ids = list(bundle.seed.node_ids) + sorted(bundle.holdout_names)
    names = [bundle.seed.names.get(i) or bundle.holdout_names[i] for i in ids]
    matrix = table.matrix_for(names).astype(dtype)
    return matrix, {node_id: i for i, node_id in enumerate(ids)}


def build_candidate_cache(params, enc_cfg: EncoderConfig, tax: Taxonomy,
                          emb: np.ndarray, row_of: dict[str, int],
                          cache_seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Offline aggregation + key decoding of every candidate position.

    Returns (cand_min, cand_max) of shape (n, 2, d_box) aligned with the
    deterministic candidate enumeration, plus the rows that have a
    child. ABSENT-child rows carry a copy of the parent box in the child
    slot; nothing ever reads it.
    """
    rng = _rng(cache_seed, 9)
    subs = [ego_subtree(tax, n, enc_cfg.max_children, rng) for n in tax.node_ids]
    feats = aggregate_batch(subs, emb, row_of, params, enc_cfg, train=False)
    node_min_t, node_max_t = decode_key(feats, params, enc_cfg)
    node_min, node_max = node_min_t.data, node_max_t.data

    parent_rows, child_rows = tax.candidate_endpoint_rows()
    child_fill = np.where(child_rows >= 0, child_rows, parent_rows)
    cand_min = np.stack([node_min[parent_rows], node_min[child_fill]], axis=1)
    cand_max = np.stack([node_max[parent_rows], node_max[child_fill]], axis=1)
    child_pos = np.flatnonzero(child_rows >= 0)
    return cand_min, cand_max, child_pos


def query_box(vec: np.ndarray, params, enc_cfg: EncoderConfig) -> tuple[np.ndarray, np.ndarray]:
    qmin, qmax = decode_query(Tensor(vec.reshape(1, -1)), params, enc_cfg)
    return qmin.data[0], qmax.data[0]


def rank_queries(queries: list[str], vec_of, bundle: DatasetBundle, params,
                 enc_cfg: EncoderConfig, cand_min, cand_max, child_pos,
                 tau: float) -> tuple[list[RankResult], int]:
    """Rank each query's ground-truth positions; queries without ground
    truth in the seed candidate set are skipped (count returned)."""
    index = bundle.seed.candidate_index()
    results: list[RankResult] = []
    skipped = 0
    for q in queries:
        gt = bundle.gt.get(q, [])
        if not gt:
            skipped += 1
            continue
        qmin, qmax = query_box(vec_of(q), params, enc_cfg)
        scores = score_positions(qmin, qmax, cand_min, cand_max, child_pos, tau)
        try:
            ranks = [rank_of(scores, index[pos]) for pos in gt]
        except KeyError as exc:
            raise DataError(f"ground-truth position {exc} of query {q} is not a "
                            f"seed candidate") from exc
        kind = "attachment" if all(p.child is ABSENT for p in gt) else "insertion"
        results.append(RankResult(query=q, ranks=ranks, kind=kind))
    return results, skipped


class Trainer:
    def __init__(self, cfg: RunConfig, bundle: DatasetBundle, table: EmbeddingTable):
        self.cfg = cfg
        self.bundle = bundle
        self.tax = bundle.seed
        dtype = np.float32 if cfg.precision == "single" else np.float64
        self.dtype = dtype
        self.emb, self.row_of = build_embedding_matrix(bundle, table, dtype)
        self.enc_cfg = EncoderConfig(d_in=self.emb.shape[1], d_box=cfg.d_box,
                                     n_heads=cfg.n_heads, dropout=cfg.dropout,
                                     max_children=cfg.max_children)
        self.store = ParamStore(dtype)
        init_params(self.store, self.enc_cfg, _rng(cfg.seed, 0))
        self._margin_cache: dict[tuple[str, str], float] = {}

    # -- margins ---------------------------------------------------------

    def _margin(self, a: str, b: str) -> float:
        key = (a, b) if a <= b else (b, a)
        m = self._margin_cache.get(key)
        if m is None:
            m = self.tax.dynamic_margin(a, b, self.cfg.alpha)
            self._margin_cache[key] = m
        return m

    # -- one optimization step --------------------------------------------

    def _step_losses(self, chunk: list[QueryGroup],
                     rng: np.random.Generator) -> tuple[Tensor, LossBreakdown]:
        cfg = self.cfg
        tax = self.tax
        samples = [(gi, s) for gi, g in enumerate(chunk) for s in g.samples]
        group_sizes = [len(g.samples) for g in chunk]
        offsets = np.concatenate([[0], np.cumsum(group_sizes)])
        n = len(samples)

        parent_subs = []
        child_subs = []
        child_global: list[int] = []
        for i, (gi, s) in enumerate(samples):
            excl = frozenset((s.query,))
            parent_subs.append(ego_subtree(tax, s.position.parent,
                                           cfg.max_children, rng, excl))
            if s.position.child is not ABSENT:
                child_subs.append(ego_subtree(tax, s.position.child,
                                              cfg.max_children, rng, excl))
                child_global.append(i)
        child_global_arr = np.array(child_global, dtype=np.int64)

        feats = aggregate_batch(parent_subs + child_subs, self.emb, self.row_of,
                                self.store, self.enc_cfg, train=True, rng=rng)
        kmin, kmax = decode_key(feats, self.store, self.enc_cfg)
        pmin, pmax = kmin[:n], kmax[:n]
        cmin, cmax = kmin[n:], kmax[n:]

        q_rows = np.array([self.row_of[g.query] for g in chunk])
        qmin_g, qmax_g = decode_query(Tensor(self.emb[q_rows]), self.store, self.enc_cfg)

        # scores, softmax-grouped per query (or across the whole step)
        if cfg.sim_group == "batch":
            sample_group = np.array([gi for gi, _ in samples])
            scores = group_scores_t(qmin_g[sample_group], qmax_g[sample_group],
                                    pmin, pmax, cmin, cmax, child_global_arr,
                                    cfg.tau_train)
            score_parts = [scores[int(offsets[g]):int(offsets[g + 1])]
                           for g in range(len(chunk))]
        else:
            score_parts = []
            for g in range(len(chunk)):
                lo, hi = int(offsets[g]), int(offsets[g + 1])
                in_grp = (child_global_arr >= lo) & (child_global_arr < hi)
                c_lo = int(np.searchsorted(child_global_arr, lo))
                c_hi = c_lo + int(in_grp.sum())
                local_child = child_global_arr[in_grp] - lo
                score_parts.append(group_scores_t(
                    qmin_g[g:g + 1], qmax_g[g:g + 1],
                    pmin[lo:hi], pmax[lo:hi],
                    cmin[c_lo:c_hi], cmax[c_lo:c_hi],
                    local_child, cfg.tau_train))
            scores = ad.concat(score_parts)

        l_cls = None
        if cfg.use_cls_loss:
            flags = np.array([s.is_positive for _, s in samples])
            l_cls = classification_loss(scores, flags, cfg.effective_pos_weight)

        l_box = None
        if cfg.use_box_loss:
            sample_group = np.array([gi for gi, _ in samples])
            labels = np.array([s.labels for _, s in samples])
            pmarg = np.array([self._margin(s.query, s.position.parent)
                              for _, s in samples])
            cmarg = np.array([self._margin(samples[i][1].query,
                                           samples[i][1].position.child)
                              for i in child_global])
            l_box = box_constraint_loss(
                qmin_g[sample_group], qmax_g[sample_group], pmin, pmax,
                cmin, cmax, child_global_arr, labels, pmarg, cmarg,
                cfg.tau_train)

        l_rank = None
        if cfg.use_rank_loss:
            hinge_parts = []
            for g, grp in enumerate(chunk):
                part = score_parts[g]
                if part.shape[0] < 2:
                    continue
                pos_parent = grp.samples[0].position.parent
                negs = grp.samples[1:]
                if cfg.rank_pairs == "sampled":
                    pick = int(rng.integers(len(negs)))
                    neg_scores = part[pick + 1:pick + 2]
                    margins = np.array([self._margin(pos_parent,
                                                     negs[pick].position.parent)])
                else:
                    neg_scores = part[1:]
                    margins = np.array([self._margin(pos_parent, s.position.parent)
                                        for s in negs])
                m = Tensor(margins.astype(self.dtype))
                hinge_parts.append(m + neg_scores - part[0:1])
            if hinge_parts:
                l_rank = ad.concat(hinge_parts).relu().mean()

        return total_loss(l_cls, l_box, l_rank)

    # -- validation --------------------------------------------------------

    def _validate(self) -> float:
        cache = build_candidate_cache(self.store.frozen_view(), self.enc_cfg,
                                      self.tax, self.emb, self.row_of,
                                      self.cfg.seed)
        queries = self.bundle.queries("valid")
        if not queries:
            return float("nan")
        results, _ = rank_queries(
            queries, lambda q: self.emb[self.row_of[q]], self.bundle,
            self.store.frozen_view(), self.enc_cfg, *cache,
            tau=self.cfg.tau_predict)
        if not results:
            return float("nan")
        return mean_reciprocal_rank(results)

    # -- main loop -----------------------------------------------------------

    def train(self, out_dir) -> TrainSummary:
        cfg = self.cfg
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt_path = out / CHECKPOINT_NAME

        scheduler = PlateauScheduler(cfg.lr, factor=cfg.scheduler_factor,
                                     patience=cfg.scheduler_patience, mode="max")
        log: list[EpochStats] = []
        best_mrr = -np.inf
        best_epoch = -1
        since_best = 0

        for epoch in range(cfg.epochs):
            groups = form_dataset(self.tax, cfg.neg_per_pos,
                                  seed=cfg.seed * 1_000_003 + epoch,
                                  hard_negatives=cfg.hard_negatives)
            rng = _rng(cfg.seed, 1, epoch)
            order = rng.permutation(len(groups))
            sums = np.zeros(4)
            steps = 0
            for start in range(0, len(groups), cfg.batch_queries):
                chunk = [groups[i] for i in order[start:start + cfg.batch_queries]]
                loss, breakdown = self._step_losses(chunk, rng)
                if not np.isfinite(loss.data):
                    raise NumericError(
                        f"non-finite loss at epoch {epoch} step {steps}: "
                        f"cls={breakdown.l_cls} box={breakdown.l_box} "
                        f"rank={breakdown.l_rank}")
                ad.backward(loss)
                self.store.adam_step(scheduler.lr)
                sums += (breakdown.l_cls, breakdown.l_box, breakdown.l_rank,
                         breakdown.total)
                steps += 1

            val_mrr = self._validate()
            monitor = val_mrr if np.isfinite(val_mrr) else -sums[3] / max(steps, 1)
            lr_now = scheduler.step(monitor)
            means = [float(v) for v in sums / max(steps, 1)]
            log.append(EpochStats(epoch, *means, val_mrr=val_mrr, lr=lr_now))

            if monitor > best_mrr:
                best_mrr = monitor
                best_epoch = epoch
                since_best = 0
                self._save_checkpoint(ckpt_path)
            else:
                since_best += 1
                if cfg.early_stop_patience and since_best >= cfg.early_stop_patience:
                    break

        if best_epoch < 0:
            self._save_checkpoint(ckpt_path)
        _write_training_log(out / TRAINING_LOG, log)
        final_val = best_mrr if best_epoch >= 0 else float("nan")
        return TrainSummary(checkpoint=ckpt_path, best_epoch=best_epoch,
                            best_val_mrr=final_val, log=log)

    def _save_checkpoint(self, path: Path) -> None:
        arrays = self.store.state_arrays()
        cand_min, cand_max, _ = build_candidate_cache(
            self.store.frozen_view(), self.enc_cfg, self.tax, self.emb,
            self.row_of, self.cfg.seed)
        arrays["cand_min"] = cand_min.astype(np.float32)
        arrays["cand_max"] = cand_max.astype(np.float32)
        save_arrays(path, arrays)


def _write_training_log(path: Path, log: list[EpochStats]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch\tl_cls\tl_box\tl_rank\ttotal\tval_mrr\tlr\n")
        for row in log:
            fh.write(f"{row.epoch}\t{row.l_cls:.6f}\t{row.l_box:.6f}\t"
                     f"{row.l_rank:.6f}\t{row.total:.6f}\t{row.val_mrr:.6f}\t"
                     f"{row.lr:.6g}\n")


def load_model(cfg: RunConfig, bundle: DatasetBundle, table: EmbeddingTable,
               ckpt_path) -> tuple[Trainer, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Rebuild a trainer shell from a checkpoint; returns it plus the
    cached candidate boxes stored offline in the checkpoint."""
    trainer = Trainer(cfg, bundle, table)
    arrays = load_arrays(ckpt_path)
    for name in ("cand_min", "cand_max"):
        if name not in arrays:
            raise DataError(f"{ckpt_path}: checkpoint lacks {name}")
    cand_min = arrays.pop("cand_min").astype(trainer.dtype)
    cand_max = arrays.pop("cand_max").astype(trainer.dtype)
    n_cand = len(bundle.seed.enumerate_candidates())
    if cand_min.shape[0] != n_cand:
        raise DataError(f"{ckpt_path}: cache rows {cand_min.shape[0]} do not match "
                        f"the {n_cand} enumerated candidates")
    trainer.store.load_arrays(arrays)
    _, child_rows = bundle.seed.candidate_endpoint_rows()
    child_pos = np.flatnonzero(child_rows >= 0)
    return trainer, (cand_min, cand_max, child_pos)
