from __future__ import annotations

import numpy as np
import pytest

from taxgen import brute_force_candidates, random_dag

from taxbox.errors import DataError
from taxbox.taxonomy import (ABSENT, CandidatePosition, Taxonomy, build_seed,
                             ground_truth_positions, load, surviving_children,
                             surviving_parents)


def chain3() -> Taxonomy:
    return Taxonomy([("root", "root"), ("a", "a"), ("b", "b")],
                    [("root", "a"), ("a", "b")])


class TestLoadAndDepth:
    def test_chain_depths(self):
        tax = chain3()
        assert tax.depth == {"root": 1, "a": 2, "b": 3}

    def test_two_cycle_rejected(self):
        with pytest.raises(DataError, match="cycle"):
            Taxonomy([("a", "a"), ("b", "b")], [("a", "b"), ("b", "a")])

    def test_self_edge_rejected(self):
        with pytest.raises(DataError, match="cycle"):
            Taxonomy([("a", "a")], [("a", "a")])

    def test_dangling_edge_rejected(self):
        with pytest.raises(DataError, match="unknown node"):
            Taxonomy([("a", "a")], [("a", "zzz")])

    def test_multi_parent_depth_is_max_over_parents(self):
        # parents at depths 1 and 2 -> child depth 3
        tax = Taxonomy([(n, n) for n in ("r", "mid", "x")],
                       [("r", "mid"), ("r", "x"), ("mid", "x")])
        assert tax.depth["x"] == 3

    def test_load_from_files(self, tmp_path):
        terms = tmp_path / "terms.tsv"
        edges = tmp_path / "edges.tsv"
        terms.write_text("root\troot concept\na\talpha\nb\tbeta\n", encoding="utf-8")
        edges.write_text("root\ta\na\tb\n", encoding="utf-8")
        tax = load(terms, edges)
        assert tax.names["a"] == "alpha"
        assert tax.depth["b"] == 3

    def test_load_rejects_bad_arity(self, tmp_path):
        terms = tmp_path / "terms.tsv"
        terms.write_text("only_one_field\n", encoding="utf-8")
        edges = tmp_path / "edges.tsv"
        edges.write_text("", encoding="utf-8")
        with pytest.raises(DataError, match="terms.tsv:1"):
            load(terms, edges)


class TestCandidates:
    def test_chain_enumeration(self):
        cands = chain3().enumerate_candidates()
        insertions = [c for c in cands if c.child is not ABSENT]
        attachments = [c for c in cands if c.child is ABSENT]
        assert {(c.parent, c.child) for c in insertions} == {
            ("root", "a"), ("root", "b"), ("a", "b")}
        assert len(attachments) == 3
        assert len(cands) == 6

    def test_single_node(self):
        tax = Taxonomy([("only", "only")], [])
        assert tax.enumerate_candidates() == [CandidatePosition("only", ABSENT)]

    def test_order_is_deterministic_and_absent_last_per_parent(self):
        cands = chain3().enumerate_candidates()
        keys = [(c.parent, c.child if c.child is not None else "￿") for c in cands]
        assert keys == sorted(keys)

    def test_matches_brute_force_on_random_dags(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            tax = random_dag(rng, 60)
            got = [(c.parent, c.child) for c in tax.enumerate_candidates()]
            assert got == brute_force_candidates(tax)

    def test_count_identity(self):
        rng = np.random.default_rng(1)
        tax = random_dag(rng, 80)
        total = sum(len(tax.descendants[p]) for p in tax.node_ids) + len(tax)
        assert len(tax.enumerate_candidates()) == total


class TestLcaAndMargin:
    def test_lca_of_node_with_itself(self):
        tax = chain3()
        assert tax.lca_depth("a", "a") == tax.depth["a"]

    def test_siblings_under_root(self):
        tax = Taxonomy([(n, n) for n in ("r", "s1", "s2")],
                       [("r", "s1"), ("r", "s2")])
        assert tax.lca_depth("s1", "s2") == 1

    def test_chain_ancestor(self):
        assert chain3().lca_depth("a", "b") == 2

    def test_forest_fallback_zero(self):
        tax = Taxonomy([(n, n) for n in ("r1", "r2")], [])
        assert tax.lca_depth("r1", "r2") == 0
        assert tax.dynamic_margin("r1", "r2", 0.5) == 0.0

    def test_margin_of_node_with_itself_is_alpha(self):
        tax = chain3()
        for n in tax.node_ids:
            assert tax.dynamic_margin(n, n, 0.5) == pytest.approx(0.5)

    def test_sibling_margin(self):
        tax = Taxonomy([(n, n) for n in ("r", "s1", "s2")],
                       [("r", "s1"), ("r", "s2")])
        assert tax.dynamic_margin("s1", "s2", 0.5) == pytest.approx(0.25)

    def test_chain_margin(self):
        assert chain3().dynamic_margin("a", "b", 0.5) == pytest.approx(0.4)

    def test_symmetry_and_self_maximum(self):
        rng = np.random.default_rng(2)
        tax = random_dag(rng, 40)
        ids = tax.node_ids
        for _ in range(100):
            a, b = (ids[i] for i in rng.integers(0, len(ids), 2))
            m_ab = tax.dynamic_margin(a, b, 0.5)
            assert m_ab == pytest.approx(tax.dynamic_margin(b, a, 0.5))
            assert 0.0 <= m_ab <= 0.5 + 1e-12
            if m_ab == pytest.approx(0.5) and tax.depth[a] == tax.depth[b]:
                assert a == b or tax.lca_depth(a, b) == tax.depth[a]


class TestHoldout:
    def test_bypass_on_chain(self):
        tax = chain3()
        seed = build_seed(tax, {"a"})
        assert ("root", "b") in seed.edges
        assert set(seed.node_ids) == {"root", "b"}

    def test_bypass_through_adjacent_removed_nodes(self):
        tax = Taxonomy([(n, n) for n in ("r", "x", "y", "leaf")],
                       [("r", "x"), ("x", "y"), ("y", "leaf")])
        seed = build_seed(tax, {"x", "y"})
        assert ("r", "leaf") in seed.edges

    def test_ground_truth_for_leaf_is_attachment(self):
        tax = chain3()
        gt = ground_truth_positions(tax, "b", {"b"})
        assert gt == [CandidatePosition("a", ABSENT)]

    def test_ground_truth_for_internal_is_insertion(self):
        tax = chain3()
        gt = ground_truth_positions(tax, "a", {"a"})
        assert gt == [CandidatePosition("root", "b")]

    def test_surviving_closure_skips_removed(self):
        tax = Taxonomy([(n, n) for n in ("r", "x", "m", "leaf")],
                       [("r", "x"), ("x", "m"), ("m", "leaf")])
        removed = {"x", "m"}
        assert surviving_parents(tax, "m", removed) == ["r"]
        assert surviving_children(tax, "x", removed) == ["leaf"]

    def test_gt_positions_are_seed_candidates(self):
        rng = np.random.default_rng(3)
        tax = random_dag(rng, 50)
        eligible = [n for n in tax.node_ids if tax.parent_adj[n]]
        removed = set(eligible[:8])
        seed = build_seed(tax, removed)
        index = seed.candidate_index()
        for q in removed:
            for pos in ground_truth_positions(tax, q, removed):
                assert pos in index
