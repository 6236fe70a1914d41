# SPDX-License-Identifier: GPL-3.0-or-later
"""
Bayesian tree score: uniform Beta(1, 1) marginal likelihood per leaf plus a
``kappa ** K`` structure prior, where K counts free parameters (one per
binary-outcome leaf). Forced trees are scored as if every leaf ended in a
split on M, so each leaf contributes two marginals and two parameters.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Union

from scipy.special import gammaln

from .counts import LeafCounts, LeafStats
from .errors import ScoringError
from .tree import Tree, TreeForm

DEFAULT_KAPPA = 0.001
PRIOR_COUNT = 1


@dataclass(frozen=True)
class ScoreParams:
    """Score hyper-parameters.

    Args:
        structure_prior_kappa: Per-parameter structure prior, in (0, 1].
        prior_count: Dirichlet pseudo-count per outcome value; only the
            uniform prior (1) is supported.
    """

    structure_prior_kappa: float = DEFAULT_KAPPA
    prior_count: int = PRIOR_COUNT

    def __post_init__(self) -> None:
        if not 0.0 < self.structure_prior_kappa <= 1.0:
            raise ScoringError("structure_prior_kappa must lie in (0, 1]")
        if self.prior_count != PRIOR_COUNT:
            raise ScoringError("only the uniform parameter prior (pseudo-count 1) is supported")

    @property
    def log_kappa(self) -> float:
        return math.log(self.structure_prior_kappa)


def leaf_log_marginal(counts: LeafCounts) -> float:
    """log[ n_s1! n_s0! / (n + 1)! ], the Beta(1, 1)-Bernoulli evidence."""
    return float(gammaln(counts.s1 + 1) + gammaln(counts.s0 + 1) - gammaln(counts.n + 2))


def forced_leaf_log_score(stats: LeafStats, params: ScoreParams = ScoreParams()) -> float:
    """Score contribution of a forced-form leaf: two marginals, two parameters."""
    return leaf_log_marginal(stats.cell(1)) + leaf_log_marginal(stats.cell(0)) + 2 * params.log_kappa


def standard_leaf_log_score(counts: LeafCounts, params: ScoreParams = ScoreParams()) -> float:
    return leaf_log_marginal(counts) + params.log_kappa


def tree_log_score(tree: Tree, params: ScoreParams = ScoreParams()) -> float:
    """Total log score of *tree*.

    Standard trees sum the pooled leaf marginals; forced trees sum both
    M-cells of every leaf. The marginals are added with ``math.fsum`` so the
    result does not depend on leaf order, which makes a forced tree score
    exactly the same as its materialized standard counterpart.
    """
    leaves = [leaf for _, leaf in tree.leaves()]
    if tree.form is TreeForm.FORCED:
        terms = [leaf_log_marginal(leaf.stats.cell(m)) for leaf in leaves for m in (0, 1)]
        k = 2 * len(leaves)
    else:
        terms = [leaf_log_marginal(leaf.stats.pooled()) for leaf in leaves]
        k = len(leaves)
    return math.fsum(terms) + k * params.log_kappa


Counts = Union[LeafCounts, LeafStats]


def _leaf_score(counts: Counts, params: ScoreParams) -> float:
    if isinstance(counts, LeafStats):
        return forced_leaf_log_score(counts, params)
    return standard_leaf_log_score(counts, params)


def split_delta(parent: Counts, children: Sequence[Counts], params: ScoreParams = ScoreParams()) -> float:
    """Change in total score from replacing the *parent* leaf by *children*.

    ``LeafStats`` arguments are scored in forced form, ``LeafCounts`` in
    standard form.

    Raises:
        ScoringError: If the children do not add up to the parent, or the
            arguments mix the two count types.
    """
    if not children:
        raise ScoringError("a split needs at least one child")
    kind = type(parent)
    if any(type(child) is not kind for child in children):
        raise ScoringError("parent and children must use the same count type")
    total = children[0]
    for child in children[1:]:
        total = total + child
    if total != parent:
        raise ScoringError("children counts do not sum to the parent counts")
    return math.fsum(_leaf_score(child, params) for child in children) - _leaf_score(parent, params)
