# SPDX-License-Identifier: GPL-3.0-or-later
"""Shared fixtures and builders for the upliftmail test-suite."""

from __future__ import annotations

import io
import logging
from collections.abc import Iterable, Sequence

import numpy as np
import pytest

from upliftmail.counts import LeafStats
from upliftmail.data import Dataset, Schema, VariableSpec
from upliftmail.synthetic import BehaviorMixture, GeneratorConfig, SegmentSpec
from upliftmail.tree import Internal, Leaf, SplitKind, SplitRule, Tree

M_SPEC = VariableSpec("M", ("0", "1"))
S_SPEC = VariableSpec("S", ("0", "1"))

PERSUADABLE_RICH = BehaviorMixture(0.05, 0.40, 0.0, 0.55)
ALWAYS_BUY_RICH = BehaviorMixture(0.30, 0.0, 0.0, 0.70)
ANTI_PERSUADABLE = BehaviorMixture(0.05, 0.0, 0.15, 0.80)


def make_schema(*arities: int) -> Schema:
    """Predictors X1, X2, ... with value labels "1".."k"."""
    predictors = tuple(
        VariableSpec(f"X{i + 1}", tuple(str(v + 1) for v in range(arity))) for i, arity in enumerate(arities)
    )
    return Schema(predictors, M_SPEC, S_SPEC)


def make_dataset(schema: Schema, rows: Iterable[tuple[Sequence[int], int, int]]) -> Dataset:
    """Build a dataset from ``(predictor indices, m, s)`` triples."""
    rows = list(rows)
    x = np.array([list(r[0]) for r in rows], dtype=np.int64).reshape(len(rows), schema.n_predictors)
    return Dataset(schema, x, [r[1] for r in rows], [r[2] for r in rows])


def repeat_rows(x: Sequence[int], m: int, s: int, count: int) -> list[tuple[tuple[int, ...], int, int]]:
    return [(tuple(x), m, s)] * count


def random_dataset(rng: np.random.Generator, arities: Sequence[int], n: int) -> Dataset:
    schema = make_schema(*arities)
    x = np.column_stack([rng.integers(a, size=n) for a in arities]) if arities else np.empty((n, 0))
    return Dataset(schema, x, rng.integers(2, size=n), rng.integers(2, size=n))


def csv_source(text: str) -> io.BytesIO:
    return io.BytesIO(text.encode("utf-8"))


def hand_built_tree() -> Tree:
    """Small tree with known traversal values.

    Root singles out X2 = "2". In that branch a complete split on X1 leads,
    for X1 = "1", to a split on M with leaves giving p(s1) = 0.2 for m0 and
    0.4 for m1. The rest of X2 ends in an M split with a small lift.
    """
    schema = make_schema(2, 3)
    m_rule = SplitRule(schema.treatment_index, SplitKind.COMPLETE)
    x1_one = Internal(m_rule, (Leaf(LeafStats(s1_m0=1, s0_m0=7)), Leaf(LeafStats(s1_m1=3, s0_m1=5))))
    x1_two = Leaf(LeafStats(s1_m1=2, s0_m1=2, s1_m0=2, s0_m0=2))
    in_branch = Internal(SplitRule(0, SplitKind.COMPLETE), (x1_one, x1_two))
    rest = Internal(m_rule, (Leaf(LeafStats(s1_m0=1, s0_m0=9)), Leaf(LeafStats(s1_m1=2, s0_m1=8))))
    root = Internal(SplitRule(1, SplitKind.BINARY, 1), (in_branch, rest))
    return Tree(schema, root)


def three_segment_config(population_size: int = 50_000, seed: int = 20240611, noise: bool = True) -> GeneratorConfig:
    """Persuadable-rich, always-buy-rich and anti-persuadable segments."""
    predictors = [VariableSpec("segment", ("a", "b", "c"))]
    if noise:
        predictors.append(VariableSpec("device", ("desktop", "mobile")))
    return GeneratorConfig(
        predictors=tuple(predictors),
        segments=(
            SegmentSpec("persuadable", (("segment", "a"),), PERSUADABLE_RICH, 0.34),
            SegmentSpec("always", (("segment", "b"),), ALWAYS_BUY_RICH, 0.33),
            SegmentSpec("anti", (("segment", "c"),), ANTI_PERSUADABLE, 0.33),
        ),
        population_size=population_size,
        seed=seed,
        mail_probability=0.9,
    )


@pytest.fixture
def hand_built() -> Tree:
    return hand_built_tree()


@pytest.fixture
def four_records() -> Dataset:
    """One record per (M, S) combination, no predictors needed beyond X1."""
    schema = make_schema(2)
    return make_dataset(schema, [((0,), 1, 1), ((0,), 1, 0), ((0,), 0, 1), ((0,), 0, 0)])


@pytest.fixture
def segments_config() -> GeneratorConfig:
    return three_segment_config()


@pytest.fixture(autouse=True)
def _reset_package_logger():
    """Undo handler setup done by CLI tests so caplog sees package records."""
    yield
    logger = logging.getLogger("upliftmail")
    logger.handlers.clear()
    logger.setLevel(logging.NOTSET)
    logger.propagate = True
