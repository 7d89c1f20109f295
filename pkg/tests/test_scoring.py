from __future__ import annotations

import numpy as np
import pytest

from gradcheck import check_gradients, leaf

from taxbox.autodiff import Tensor
from taxbox.boxes import Box, Smoothing, cond_prob
from taxbox.errors import DataError
from taxbox.scoring import (ScoreGroup, attachment_score, center_similarity,
                            group_scores_t, insertion_score, score_group,
                            score_positions)

TAU1 = Smoothing(1.0)
PR_HALF_IN = 0.6174452923182127  # ln(1+e) / ln(1+e^2), unit interval in [0,2]


def box1(lo, hi) -> Box:
    return Box(np.array([float(lo)]), np.array([float(hi)]))


def boxn(lo, hi, d) -> Box:
    return Box(np.full(d, float(lo)), np.full(d, float(hi)))


class TestCenterSimilarity:
    def test_singleton_group_is_one(self):
        group = ScoreGroup(box1(0, 2), [(box1(5, 7), box1(5.5, 6.5))])
        sim_p, sim_c = center_similarity(group)
        np.testing.assert_allclose(sim_p, [1.0])
        np.testing.assert_allclose(sim_c, [1.0])

    def test_equal_distances_split_evenly(self):
        group = ScoreGroup(box1(0, 2), [(box1(2, 4), None), (box1(-2, 0), None)])
        sim_p, sim_c = center_similarity(group)
        np.testing.assert_allclose(sim_p, [0.5, 0.5])
        np.testing.assert_allclose(sim_c, [1.0, 1.0])

    def test_reciprocal_distances_frozen_softmax(self):
        # distances 1, 1/2, 1/4 -> reciprocals 1, 2, 4
        q = box1(0, 0)
        group = ScoreGroup(q, [(box1(-1, 3), None),      # center 1
                               (box1(0, 1), None),       # center 1/2
                               (box1(0, 0.5), None)])    # center 1/4
        sim_p, _ = center_similarity(group)
        np.testing.assert_allclose(
            sim_p, [0.04201007, 0.1141952, 0.84379473], rtol=1e-6)

    def test_zero_distance_is_floored(self):
        group = ScoreGroup(box1(0, 2), [(box1(0, 2), None), (box1(9, 11), None)])
        sim_p, _ = center_similarity(group)
        assert np.all(np.isfinite(sim_p))
        assert sim_p[0] > 0.999  # reciprocal of the 1e-9 floor dominates


class TestInsertionScore:
    def test_nested_triple_singleton_is_one(self):
        q, p, c = boxn(-1, 1, 3), boxn(-2, 2, 3), boxn(-0.5, 0.5, 3)
        assert insertion_score(q, p, c, (1.0, 1.0), TAU1) == pytest.approx(1.0)

    def test_far_disjoint_is_tiny(self):
        q = box1(0, 1)
        p = box1(100, 101)
        c = box1(100.2, 100.8)
        score = insertion_score(q, p, c, (1.0, 1.0), Smoothing(10.0))
        assert score < 1e-3

    def test_hand_set_boxes_match_scalar_oracle(self):
        q, p, c = box1(0, 2), box1(-1, 3), box1(0.5, 1.5)
        expected = cond_prob(p, q, TAU1) * cond_prob(q, c, TAU1)
        assert insertion_score(q, p, c, (1.0, 1.0), TAU1) == pytest.approx(
            expected, rel=1e-12)
        # a partially-overlapping triple exercises non-unit factors
        q2, p2, c2 = box1(0, 2), box1(1, 3), box1(-1, 0.5)
        expected2 = cond_prob(p2, q2, TAU1) * cond_prob(q2, c2, TAU1)
        assert expected2 < 1.0
        assert insertion_score(q2, p2, c2, (1.0, 1.0), TAU1) == pytest.approx(
            expected2, rel=1e-12)


class TestAttachmentScore:
    def test_identical_boxes_singleton(self):
        q = boxn(0, 1, 4)
        assert attachment_score(q, q, 1.0, TAU1) == pytest.approx(1.0)

    def test_parent_inside_query_gives_one(self):
        q, p = box1(-2, 2), box1(-1, 1)
        assert attachment_score(q, p, 1.0, TAU1) == pytest.approx(1.0)

    def test_conditioning_direction_as_printed(self):
        q, p = box1(0, 1), box1(0, 2)
        assert attachment_score(q, p, 1.0, TAU1) == pytest.approx(PR_HALF_IN, rel=1e-12)


class TestScoreGroup:
    def toy_group(self, rng, n=6, d=4, with_children=True):
        def rbox():
            lo = rng.uniform(-2, 0, d)
            return Box(lo, lo + rng.uniform(0.2, 2, d))
        cands = []
        for i in range(n):
            child = rbox() if with_children and i % 2 == 0 else None
            cands.append((rbox(), child))
        return ScoreGroup(rbox(), cands)

    def test_scores_in_unit_interval(self):
        rng = np.random.default_rng(0)
        group = self.toy_group(rng)
        scores = score_group(group, Smoothing(10.0))
        assert scores.shape == (6,)
        assert np.all(scores >= 0.0) and np.all(scores <= 1.0)

    def test_matches_per_candidate_scorers(self):
        rng = np.random.default_rng(1)
        group = self.toy_group(rng)
        s = Smoothing(5.0)
        sim_p, sim_c = center_similarity(group)
        scores = score_group(group, s)
        for i, (p, c) in enumerate(group.candidates):
            if c is None:
                expected = attachment_score(group.query, p, sim_p[i], s)
            else:
                expected = insertion_score(group.query, p, c, (sim_p[i], sim_c[i]), s)
            assert scores[i] == pytest.approx(expected, rel=1e-10)

    def test_duplicating_candidates_halves_sims_keeps_order(self):
        rng = np.random.default_rng(2)
        group = self.toy_group(rng, n=5, with_children=False)
        s = Smoothing(5.0)
        base = score_group(group, s)
        doubled = ScoreGroup(group.query, group.candidates * 2)
        twice = score_group(doubled, s)
        np.testing.assert_allclose(twice[:5], base / 2.0, rtol=1e-9)
        assert list(np.argsort(-twice[:5])) == list(np.argsort(-base))

    def test_argmax_invariant_to_dominated_candidates(self):
        rng = np.random.default_rng(3)
        group = self.toy_group(rng, n=4, with_children=False)
        s = Smoothing(5.0)
        best = int(np.argmax(score_group(group, s)))
        # dominated: farther away and disjoint, so both factors shrink
        far = Box(np.full(4, 50.0), np.full(4, 50.5))
        bigger = ScoreGroup(group.query, group.candidates + [(far, None)])
        assert int(np.argmax(score_group(bigger, s))) == best

    def test_extra_child_factor_never_raises_score(self):
        rng = np.random.default_rng(4)
        s = Smoothing(5.0)
        for _ in range(50):
            lo = rng.uniform(-2, 0, 3)
            q = Box(lo, lo + rng.uniform(0.5, 2, 3))
            p = Box(lo - 0.3, lo + rng.uniform(0.5, 2.5, 3))
            c = Box(lo + 0.1, lo + rng.uniform(0.3, 1.5, 3))
            ins = insertion_score(q, p, c, (1.0, 1.0), s)
            parent_only = cond_prob(p, q, s) * 1.0
            assert ins <= parent_only + 1e-12


class TestScorePositions:
    def build_cache(self, rng, n=8, d=3):
        lo = rng.uniform(-2, 0, (n, 2, d))
        hi = lo + rng.uniform(0.2, 2.0, (n, 2, d))
        child_rows = np.flatnonzero(rng.random(n) > 0.4)
        return lo, hi, child_rows

    def test_agrees_with_score_group(self):
        rng = np.random.default_rng(5)
        cand_min, cand_max, child_rows = self.build_cache(rng)
        qlo = rng.uniform(-1, 0, 3)
        q = Box(qlo, qlo + 1.0)
        got = score_positions(q.min_corner, q.max_corner, cand_min, cand_max,
                              child_rows, 5.0)
        cands = []
        for i in range(cand_min.shape[0]):
            parent = Box(cand_min[i, 0], cand_max[i, 0])
            child = Box(cand_min[i, 1], cand_max[i, 1]) if i in child_rows else None
            cands.append((parent, child))
        expected = score_group(ScoreGroup(q, cands), Smoothing(5.0))
        np.testing.assert_allclose(got, expected, rtol=1e-10)

    def test_misaligned_cache_rejected(self):
        rng = np.random.default_rng(6)
        cand_min, cand_max, _ = self.build_cache(rng)
        q = np.zeros(3)
        with pytest.raises(DataError, match="misaligned"):
            score_positions(q, q + 1, cand_min, cand_max, np.array([99]), 5.0)
        with pytest.raises(DataError, match="shape"):
            score_positions(q, q + 1, cand_min[:, 0], cand_max[:, 0],
                            np.array([0]), 5.0)


class TestTapePath:
    def test_matches_numpy_scores(self):
        rng = np.random.default_rng(7)
        n, d = 7, 4
        pmin = rng.uniform(-2, 0, (n, d))
        pmax = pmin + rng.uniform(0.2, 2, (n, d))
        child_rows = np.array([0, 2, 5])
        cmin = rng.uniform(-2, 0, (3, d))
        cmax = cmin + rng.uniform(0.2, 2, (3, d))
        qmin = rng.uniform(-1, 0, (1, d))
        qmax = qmin + rng.uniform(0.5, 1.5, (1, d))

        got = group_scores_t(Tensor(qmin), Tensor(qmax), Tensor(pmin), Tensor(pmax),
                             Tensor(cmin), Tensor(cmax), child_rows, 5.0).data
        expected = score_positions(
            qmin[0], qmax[0],
            np.stack([pmin, _fill_children(pmin, cmin, child_rows)], axis=1),
            np.stack([pmax, _fill_children(pmax, cmax, child_rows)], axis=1),
            child_rows, 5.0)
        np.testing.assert_allclose(got, expected, rtol=1e-9)

    def test_gradients_of_both_scorers(self):
        rng = np.random.default_rng(8)
        child_rows = np.array([1, 3])
        qmin = leaf(rng, 1, 3, lo=-1.0, hi=-0.2)
        qmax = leaf(rng, 1, 3, lo=0.2, hi=1.0)
        pmin = leaf(rng, 4, 3, lo=-1.5, hi=-0.1)
        pmax = leaf(rng, 4, 3, lo=0.1, hi=1.5)
        cmin = leaf(rng, 2, 3, lo=-1.2, hi=-0.1)
        cmax = leaf(rng, 2, 3, lo=0.1, hi=1.2)
        weights = Tensor(rng.normal(size=4))

        def f():
            scores = group_scores_t(qmin, qmax, pmin, pmax, cmin, cmax,
                                    child_rows, 5.0)
            return (scores * weights).sum()

        check_gradients(f, [qmin, qmax, pmin, pmax, cmin, cmax], rel=1e-4)


def _fill_children(parent, child, child_rows):
    out = parent.copy()
    out[child_rows] = child
    return out
