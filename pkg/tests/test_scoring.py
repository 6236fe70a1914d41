# SPDX-License-Identifier: GPL-3.0-or-later
"""Bayesian score: leaf marginals, structure prior, forced scoring, split deltas."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from upliftmail.counts import LeafCounts, LeafStats
from upliftmail.data import M0, M1
from upliftmail.errors import ScoringError
from upliftmail.scoring import (
    ScoreParams,
    forced_leaf_log_score,
    leaf_log_marginal,
    split_delta,
    tree_log_score,
)
from upliftmail.tree import Internal, Leaf, SplitKind, SplitRule, Tree, TreeForm, materialize_m_splits, node_stats
from tests.conftest import hand_built_tree, make_schema

LN_KAPPA = math.log(0.001)


def sequential_log_marginal(s1: int, s0: int) -> float:
    """Product of Beta(1, 1)-Bernoulli predictive probabilities, one draw at a time."""
    total = 0.0
    seen1 = seen0 = 0
    for outcome in [1] * s1 + [0] * s0:
        t = seen1 + seen0
        if outcome:
            total += math.log((seen1 + 1) / (t + 2))
            seen1 += 1
        else:
            total += math.log((seen0 + 1) / (t + 2))
            seen0 += 1
    return total


class TestLeafMarginal:
    @pytest.mark.parametrize(
        ("s1", "s0", "expected"),
        [(0, 0, 0.0), (1, 0, math.log(1 / 2)), (2, 1, math.log(1 / 12)), (1, 1, math.log(1 / 6))],
    )
    def test_examples(self, s1: int, s0: int, expected: float) -> None:
        assert leaf_log_marginal(LeafCounts(s1, s0)) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.regression
    def test_matches_sequential_oracle_up_to_fifty(self) -> None:
        for n in range(51):
            for s1 in range(n + 1):
                oracle = sequential_log_marginal(s1, n - s1)
                assert leaf_log_marginal(LeafCounts(s1, n - s1)) == pytest.approx(oracle, rel=1e-9, abs=1e-12)

    @pytest.mark.property
    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 500), st.integers(0, 500))
    def test_symmetric(self, a: int, b: int) -> None:
        assert leaf_log_marginal(LeafCounts(a, b)) == leaf_log_marginal(LeafCounts(b, a))


class TestTreeScore:
    def test_single_leaf_one_success(self) -> None:
        tree = Tree(make_schema(2), Leaf(LeafStats(s1_m1=1)))
        assert tree_log_score(tree) == pytest.approx(-7.600903, abs=1e-6)

    def test_single_empty_leaf(self) -> None:
        tree = Tree(make_schema(2), Leaf(LeafStats()))
        assert tree_log_score(tree) == pytest.approx(LN_KAPPA, abs=1e-12)
        assert tree_log_score(tree) == pytest.approx(-6.907755, abs=1e-6)

    def test_two_leaves(self) -> None:
        root = Internal(
            SplitRule(0, SplitKind.COMPLETE),
            (Leaf(LeafStats(s1_m1=1, s0_m1=1)), Leaf(LeafStats(s1_m0=1, s0_m0=1))),
        )
        tree = Tree(make_schema(2), root)
        assert tree_log_score(tree) == pytest.approx(-17.399029, abs=1e-6)

    def test_smaller_kappa_lowers_score(self) -> None:
        tree = hand_built_tree()
        scores = [tree_log_score(tree, ScoreParams(kappa)) for kappa in (1.0, 0.1, 0.001, 1e-6)]
        assert all(a > b for a, b in zip(scores, scores[1:]))

    @pytest.mark.parametrize("kappa", [0.0, -0.5, 1.5])
    def test_kappa_bounds(self, kappa: float) -> None:
        with pytest.raises(ScoringError):
            ScoreParams(kappa)

    def test_only_uniform_prior(self) -> None:
        with pytest.raises(ScoringError, match="uniform"):
            ScoreParams(prior_count=2)


class TestForcedScore:
    def test_two_singletons(self) -> None:
        stats = LeafStats(s1_m1=1, s0_m0=1)
        assert forced_leaf_log_score(stats) == pytest.approx(-15.201805, abs=1e-6)

    def test_empty_cross_tab(self) -> None:
        assert forced_leaf_log_score(LeafStats()) == pytest.approx(2 * LN_KAPPA, abs=1e-12)

    def test_forced_tree_sums_leaves(self) -> None:
        stats = (LeafStats(3, 1, 0, 2), LeafStats(0, 0, 4, 4))
        root = Internal(SplitRule(0, SplitKind.COMPLETE), tuple(Leaf(s) for s in stats))
        tree = Tree(make_schema(2), root, TreeForm.FORCED)
        assert tree_log_score(tree) == pytest.approx(sum(forced_leaf_log_score(s) for s in stats), abs=1e-12)


def _random_forced_node(rng: np.random.Generator, arities, reachable: dict[int, frozenset[int]], depth: int):
    if depth == 0 or rng.random() < 0.3:
        return Leaf(LeafStats(*(int(v) for v in rng.integers(0, 25, size=4))))
    j = int(rng.integers(len(arities)))
    here = reachable.get(j, frozenset(range(arities[j])))
    if len(here) < 2:
        return Leaf(LeafStats(*(int(v) for v in rng.integers(0, 25, size=4))))
    v = int(rng.choice(sorted(here)))
    parts = (frozenset((v,)), here - {v})
    children = tuple(_random_forced_node(rng, arities, {**reachable, j: part}, depth - 1) for part in parts)
    return Internal(SplitRule(j, SplitKind.BINARY, v), children)


@pytest.mark.property
@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forced_score_equals_materialized_score(seed: int) -> None:
    rng = np.random.default_rng(seed)
    arities = (2, 3, 4)
    forced = Tree(make_schema(*arities), _random_forced_node(rng, arities, {}, depth=4), TreeForm.FORCED)
    materialized = materialize_m_splits(forced)
    assert tree_log_score(forced) == pytest.approx(tree_log_score(materialized), abs=1e-12)


class TestSplitDelta:
    def test_balanced_split_is_penalised(self) -> None:
        delta = split_delta(LeafCounts(2, 2), [LeafCounts(1, 1), LeafCounts(1, 1)])
        assert delta == pytest.approx(math.log(1 / 36) - math.log(1 / 30) + LN_KAPPA, abs=1e-12)
        assert delta == pytest.approx(-7.090077, abs=1e-6)

    def test_empty_child_with_unit_kappa(self) -> None:
        delta = split_delta(LeafCounts(3, 4), [LeafCounts(3, 4), LeafCounts(0, 0)], ScoreParams(1.0))
        assert delta == pytest.approx(0.0, abs=1e-12)

    def test_separating_split_pays_off(self) -> None:
        assert split_delta(LeafCounts(50, 50), [LeafCounts(40, 10), LeafCounts(10, 40)]) > 0

    def test_forced_counts(self) -> None:
        parent = LeafStats(2, 2, 2, 2)
        children = [LeafStats(2, 0, 0, 2), LeafStats(0, 2, 2, 0)]
        expected = sum(forced_leaf_log_score(c) for c in children) - forced_leaf_log_score(parent)
        assert split_delta(parent, children) == pytest.approx(expected, abs=1e-12)

    def test_children_must_sum_to_parent(self) -> None:
        with pytest.raises(ScoringError, match="do not sum"):
            split_delta(LeafCounts(2, 2), [LeafCounts(1, 1), LeafCounts(1, 0)])

    def test_mixed_types(self) -> None:
        with pytest.raises(ScoringError, match="same count type"):
            split_delta(LeafCounts(1, 1), [LeafStats(s1_m1=1, s0_m1=1)])

    def test_matches_change_in_tree_score(self) -> None:
        tree = hand_built_tree()
        path = (0, 1)
        leaf = tree.node_at(path)
        a, b = leaf.stats.only(M0), leaf.stats.only(M1)
        assert a + b == leaf.stats
        m_rule = SplitRule(tree.schema.treatment_index, SplitKind.COMPLETE)
        split = tree.replace(path, Internal(m_rule, (Leaf(a), Leaf(b))))
        expected = split_delta(leaf.stats.pooled(), [a.pooled(), b.pooled()])
        assert tree_log_score(split) - tree_log_score(tree) == pytest.approx(expected, abs=1e-9)
        assert node_stats(split.root) == node_stats(tree.root)
