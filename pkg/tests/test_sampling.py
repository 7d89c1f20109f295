from __future__ import annotations

import numpy as np
import pytest

from taxgen import random_dag

from taxbox.errors import DataError
from taxbox.sampling import ego_subtree, form_dataset, positive_positions
from taxbox.taxonomy import ABSENT, CandidatePosition, Taxonomy


def chain3() -> Taxonomy:
    return Taxonomy([("root", "root"), ("a", "a"), ("b", "b")],
                    [("root", "a"), ("a", "b")])


def star(n_children: int) -> Taxonomy:
    kids = [f"c{i:02d}" for i in range(n_children)]
    return Taxonomy([("hub", "hub")] + [(k, k) for k in kids],
                    [("hub", k) for k in kids])


class TestEgoSubtree:
    def test_leaf_gets_self_loop_only(self):
        sub = ego_subtree(chain3(), "b", 30, np.random.default_rng(0))
        assert sub.children == ()
        assert sub.has_self_loop

    def test_small_node_keeps_all_children_plus_self_loop(self):
        sub = ego_subtree(star(2), "hub", 30, np.random.default_rng(0))
        assert sorted(sub.children) == ["c00", "c01"]
        assert sub.has_self_loop

    def test_large_node_samples_exactly_max_without_self_loop(self):
        sub = ego_subtree(star(40), "hub", 30, np.random.default_rng(0))
        assert len(sub.children) == 30
        assert len(set(sub.children)) == 30
        assert not sub.has_self_loop

    def test_sampling_deterministic_under_seed(self):
        a = ego_subtree(star(40), "hub", 30, np.random.default_rng(7))
        b = ego_subtree(star(40), "hub", 30, np.random.default_rng(7))
        assert a == b

    def test_exclusion_removes_query_and_can_trigger_self_loop(self):
        tax = star(30)
        full = ego_subtree(tax, "hub", 30, np.random.default_rng(1))
        assert len(full.children) == 30 and not full.has_self_loop
        excl = ego_subtree(tax, "hub", 30, np.random.default_rng(1),
                           exclude=frozenset({"c00"}))
        assert "c00" not in excl.children
        assert len(excl.children) == 29
        assert excl.has_self_loop  # fewer than max after exclusion
        # exactly max surviving children keeps them all, no loop
        at_max = ego_subtree(star(32), "hub", 30, np.random.default_rng(1),
                             exclude=frozenset({"c00", "c01"}))
        assert len(at_max.children) == 30
        assert not at_max.has_self_loop


class TestPositives:
    def test_internal_node_pairs(self):
        assert positive_positions(chain3(), "a") == [CandidatePosition("root", "b")]

    def test_leaf_attachment(self):
        assert positive_positions(chain3(), "b") == [CandidatePosition("a", ABSENT)]


class TestFormDataset:
    def test_chain_positive_is_forced(self):
        groups = form_dataset(chain3(), neg_per_pos=2, seed=0)
        by_query = {g.query: g for g in groups}
        assert by_query["a"].samples[0].position == CandidatePosition("root", "b")
        assert by_query["b"].samples[0].position == CandidatePosition("a", ABSENT)

    def test_single_node_taxonomy_errors(self):
        with pytest.raises(DataError, match="non-root"):
            form_dataset(Taxonomy([("x", "x")], []), 1, 0)

    def test_group_sizes(self):
        rng = np.random.default_rng(0)
        tax = random_dag(rng, 40)
        groups = form_dataset(tax, neg_per_pos=5, seed=1)
        for g in groups:
            assert len(g.samples) == 6
            assert g.samples[0].is_positive
            assert not any(s.is_positive for s in g.samples[1:])

    def test_same_seed_identical_dataset(self):
        rng = np.random.default_rng(1)
        tax = random_dag(rng, 30)
        a = form_dataset(tax, neg_per_pos=7, seed=42)
        b = form_dataset(tax, neg_per_pos=7, seed=42)
        assert a == b
        c = form_dataset(tax, neg_per_pos=7, seed=43)
        assert a != c

    def test_positive_labels_satisfy_invariant(self):
        rng = np.random.default_rng(2)
        tax = random_dag(rng, 50)
        for g in form_dataset(tax, neg_per_pos=3, seed=0):
            pos = g.samples[0]
            l1, l2, l3, l4 = pos.labels
            assert l1  # parent side always encloses the query
            if pos.position.child is ABSENT:
                assert tax.is_leaf(g.query)
                assert not l2 and not l4
            else:
                assert l2

    def test_negatives_violate_positive_membership(self):
        rng = np.random.default_rng(3)
        tax = random_dag(rng, 50)
        for g in form_dataset(tax, neg_per_pos=10, seed=0):
            parents = set(tax.parent_adj[g.query])
            children = set(tax.child_adj[g.query])
            for s in g.samples[1:]:
                in_parents = s.position.parent in parents
                in_children = (s.position.child in children
                               if s.position.child is not ABSENT
                               else tax.is_leaf(g.query))
                assert not (in_parents and in_children)

    def test_query_never_appears_in_own_candidates(self):
        rng = np.random.default_rng(4)
        tax = random_dag(rng, 50)
        for g in form_dataset(tax, neg_per_pos=20, seed=0):
            for s in g.samples:
                assert s.position.parent != g.query
                assert s.position.child != g.query

    def test_hard_negative_flag_keeps_contract(self):
        rng = np.random.default_rng(5)
        tax = random_dag(rng, 60)
        groups = form_dataset(tax, neg_per_pos=8, seed=0, hard_negatives=True)
        for g in groups:
            assert len(g.samples) == 9
            seen = set()
            for s in g.samples[1:]:
                assert s.position not in seen
                seen.add(s.position)
                assert s.position.parent != g.query

    def test_small_pool_takes_whole_pool(self):
        groups = form_dataset(chain3(), neg_per_pos=63, seed=0)
        by_query = {g.query: g for g in groups}
        # 6 candidates total; query a excludes itself (4 left) minus 1 positive
        positions = {s.position for s in by_query["a"].samples}
        assert len(by_query["a"].samples) == len(positions)
        assert all(p.parent != "a" and p.child != "a" for p in positions)
