# SPDX-License-Identifier: GPL-3.0-or-later
"""
Greedy Bayesian tree growth.

Three modes share one engine:

* NORMAL grows p(S | M, X) over the predictors and M.
* FORCE grows over the predictors only, scoring every leaf as if it ended
  in a split on M; the result is materialized and then post-processed so
  that only M splits (and predictor splits) that pay for themselves remain.
* SPLIT-FIRST puts a complete M split at the root and grows each branch
  independently with NORMAL growth.

Candidates are one-vs-rest binary splits on values observed at a leaf (and
the complete split on M in NORMAL mode). Each step applies the single best
candidate over all leaves; ties go to the lower variable index, then the
lower value index, then the earlier leaf in pre-order. Growth stops when no
candidate strictly increases the score.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .counts import Estimator, LeafStats
from .data import M0, M1, Dataset, Schema
from .errors import LearnError, TreeStructureError
from .scoring import ScoreParams, split_delta, standard_leaf_log_score, tree_log_score
from .tree import Internal, Leaf, Node, Path, SplitKind, SplitRule, Tree, TreeForm, materialize_m_splits, node_stats

log = logging.getLogger(__name__)


class LearnMode(enum.Enum):
    NORMAL = "normal"
    FORCE = "force"
    SPLIT_FIRST = "split-first"


@dataclass(frozen=True)
class LearnConfig:
    """Growth settings.

    Args:
        mode: Which learner to run.
        params: Score hyper-parameters.
        estimator: Leaf predictive rule stored in the learned tree.
        max_splits: Optional cap on accepted growth steps (per branch in
            SPLIT-FIRST mode); ``None`` grows to a local maximum.
        postprocess: FORCE only; ``False`` returns the materialized tree
            before any M split is removed.
    """

    mode: LearnMode = LearnMode.FORCE
    params: ScoreParams = field(default_factory=ScoreParams)
    estimator: Estimator = Estimator.POSTERIOR_MEAN
    max_splits: int | None = None
    postprocess: bool = True

    def __post_init__(self) -> None:
        if self.max_splits is not None and (isinstance(self.max_splits, bool) or self.max_splits < 0):
            raise ValueError("max_splits must be a non-negative integer or None")


@dataclass(frozen=True)
class CandidateSplit:
    """A possible split of one leaf and its score change."""

    leaf: Path
    rule: SplitRule
    children: tuple[LeafStats, ...]
    delta: float

    def order(self) -> tuple[float, int, int]:
        """Within-leaf ranking key: best delta, then variable, then value."""
        return (-self.delta, self.rule.variable, self.rule.value or 0)


# ---------------------------------------------------------------------------
# Candidates
# ---------------------------------------------------------------------------

def _delta(parent: LeafStats, children: tuple[LeafStats, ...], forced: bool, params: ScoreParams) -> float:
    if forced:
        return split_delta(parent, children, params)
    return split_delta(parent.pooled(), [child.pooled() for child in children], params)


def _candidates(
    schema: Schema,
    x: np.ndarray,
    cells: np.ndarray,
    include_m: bool,
    forced: bool,
    params: ScoreParams,
    leaf: Path,
) -> list[CandidateSplit]:
    if cells.size == 0:
        return []
    total = np.bincount(cells, minlength=4)
    parent = LeafStats.from_vector(total)
    found: list[CandidateSplit] = []
    for j, spec in enumerate(schema.predictors):
        table = np.bincount(x[:, j] * 4 + cells, minlength=spec.arity * 4).reshape(spec.arity, 4)
        observed = np.flatnonzero(table.sum(axis=1))
        if observed.size < 2:
            continue
        # With two observed values both one-vs-rest splits cut the records
        # the same way; keep the lower value.
        singled = observed[:1] if observed.size == 2 else observed
        for v in singled.tolist():
            children = (LeafStats.from_vector(table[v]), LeafStats.from_vector(total - table[v]))
            rule = SplitRule(j, SplitKind.BINARY, v)
            found.append(CandidateSplit(leaf, rule, children, _delta(parent, children, forced, params)))
    if include_m:
        children = (parent.only(M0), parent.only(M1))
        if children[0].n and children[1].n:
            rule = SplitRule(schema.treatment_index, SplitKind.COMPLETE)
            found.append(CandidateSplit(leaf, rule, children, _delta(parent, children, forced, params)))
    return found


def _cells(data: Dataset) -> np.ndarray:
    return 2 * data.treatment.astype(np.int64) + data.outcome.astype(np.int64)


def enumerate_candidate_splits(
    data: Dataset,
    mode: LearnMode,
    params: ScoreParams = ScoreParams(),
    leaf: Path = (),
) -> list[CandidateSplit]:
    """All candidate splits of a leaf holding the records in *data*.

    Only values observed at the leaf are singled out and both children must
    receive records. M is a candidate in NORMAL mode only.
    """
    forced = mode is LearnMode.FORCE
    return _candidates(
        data.schema,
        data.predictors,
        _cells(data),
        include_m=mode is LearnMode.NORMAL,
        forced=forced,
        params=params,
        leaf=leaf,
    )


# ---------------------------------------------------------------------------
# Growth engine
# ---------------------------------------------------------------------------

class _GrowNode:
    __slots__ = ("path", "indices", "rule", "children", "best")

    def __init__(self, path: Path, indices: np.ndarray) -> None:
        self.path = path
        self.indices = indices
        self.rule: SplitRule | None = None
        self.children: list[_GrowNode] = []
        self.best: CandidateSplit | None = None


class _Grower:
    def __init__(self, data: Dataset, include_m: bool, forced: bool, params: ScoreParams) -> None:
        self.schema = data.schema
        self.x = data.predictors
        self.m = data.treatment.astype(np.int64)
        self.cells = _cells(data)
        self.include_m = include_m
        self.forced = forced
        self.params = params

    def _evaluate(self, node: _GrowNode) -> None:
        idx = node.indices
        found = _candidates(
            self.schema, self.x[idx], self.cells[idx], self.include_m, self.forced, self.params, node.path
        )
        positive = [c for c in found if c.delta > 0]
        node.best = min(positive, key=CandidateSplit.order) if positive else None

    def _leaves(self, root: _GrowNode) -> list[_GrowNode]:
        out: list[_GrowNode] = []
        stack = [root]
        while stack:
            node = stack.pop()
            if node.rule is None:
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return out

    def _apply(self, node: _GrowNode, rule: SplitRule) -> None:
        idx = node.indices
        if rule.variable == self.schema.treatment_index:
            column = self.m[idx]
        else:
            column = self.x[idx, rule.variable]
        if rule.kind is SplitKind.COMPLETE:
            branch = column
            count = self.schema.variable(rule.variable).arity
        else:
            branch = (column != rule.value).astype(np.int64)
            count = 2
        node.rule = rule
        node.children = [_GrowNode(node.path + (c,), idx[branch == c]) for c in range(count)]
        node.best = None
        for child in node.children:
            self._evaluate(child)

    def grow(self, indices: np.ndarray, max_splits: int | None, prefix: Path = ()) -> _GrowNode:
        root = _GrowNode(prefix, indices)
        self._evaluate(root)
        steps = 0
        while max_splits is None or steps < max_splits:
            chosen: tuple[tuple[float, int, int, int], _GrowNode] | None = None
            for position, leaf in enumerate(self._leaves(root)):
                if leaf.best is None:
                    continue
                key = leaf.best.order() + (position,)
                if chosen is None or key < chosen[0]:
                    chosen = (key, leaf)
            if chosen is None:
                break
            leaf = chosen[1]
            candidate = leaf.best
            log.debug(
                "Split leaf %s on %s (delta %.6f)",
                leaf.path,
                self.schema.variable(candidate.rule.variable).name,
                candidate.delta,
            )
            self._apply(leaf, candidate.rule)
            steps += 1
        log.debug("Growth finished after %d splits", steps)
        return root

    def freeze(self, node: _GrowNode) -> Node:
        if node.rule is None:
            idx = node.indices
            cells = np.bincount(self.cells[idx], minlength=4)
            return Leaf(LeafStats.from_vector(cells))
        return Internal(node.rule, tuple(self.freeze(child) for child in node.children))


def _require_records(train: Dataset) -> None:
    if len(train) == 0:
        raise LearnError("cannot learn a tree from an empty dataset")


def grow_normal(train: Dataset, config: LearnConfig = LearnConfig(mode=LearnMode.NORMAL)) -> Tree:
    """Unconstrained greedy growth over the predictors and M."""
    _require_records(train)
    grower = _Grower(train, include_m=True, forced=False, params=config.params)
    root = grower.grow(np.arange(len(train)), config.max_splits)
    return Tree(train.schema, grower.freeze(root), TreeForm.STANDARD, config.estimator)


def grow_forced(train: Dataset, config: LearnConfig = LearnConfig()) -> Tree:
    """FORCE growth without materialization: a forced-form tree."""
    _require_records(train)
    grower = _Grower(train, include_m=False, forced=True, params=config.params)
    root = grower.grow(np.arange(len(train)), config.max_splits)
    return Tree(train.schema, grower.freeze(root), TreeForm.FORCED, config.estimator)


def grow_force(train: Dataset, config: LearnConfig = LearnConfig()) -> Tree:
    """FORCE learner: forced growth, explicit M splits, then post-processing."""
    forced = grow_forced(train, config)
    materialized = materialize_m_splits(forced)
    if not config.postprocess:
        return materialized
    return postprocess(materialized, config.params).tree


def grow_split_first(train: Dataset, config: LearnConfig = LearnConfig(mode=LearnMode.SPLIT_FIRST)) -> Tree:
    """Root split on M, then independent NORMAL growth in each branch."""
    _require_records(train)
    branches = [np.flatnonzero(train.treatment == m) for m in (M0, M1)]
    if any(b.size == 0 for b in branches):
        raise LearnError("split-first growth needs both mailed and unmailed records")
    grower = _Grower(train, include_m=False, forced=False, params=config.params)
    children = tuple(
        grower.freeze(grower.grow(idx, config.max_splits, prefix=(m,))) for m, idx in zip((M0, M1), branches)
    )
    root = Internal(SplitRule(train.schema.treatment_index, SplitKind.COMPLETE), children)
    return Tree(train.schema, root, TreeForm.STANDARD, config.estimator)


def learn(train: Dataset, config: LearnConfig) -> Tree:
    """Run the learner selected by ``config.mode``."""
    match config.mode:
        case LearnMode.NORMAL:
            return grow_normal(train, config)
        case LearnMode.FORCE:
            return grow_force(train, config)
        case LearnMode.SPLIT_FIRST:
            return grow_split_first(train, config)
    raise LearnError(f"unknown learning mode {config.mode!r}")


# ---------------------------------------------------------------------------
# FORCE post-processing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PostprocessEdit:
    """One applied edit: ``remove-m-split``, ``merge-split`` or ``add-m-split``."""

    kind: str
    path: Path
    delta: float


@dataclass(frozen=True)
class PostprocessResult:
    tree: Tree
    edits: tuple[PostprocessEdit, ...]


def _merge_delta(node: Internal, params: ScoreParams) -> float:
    """Score change from collapsing a last split into one leaf."""
    children = [child.stats.pooled() for child in node.children]
    merged = node_stats(node).pooled()
    return standard_leaf_log_score(merged, params) - sum(
        standard_leaf_log_score(child, params) for child in children
    )


def _add_m_delta(leaf: Leaf, params: ScoreParams) -> float:
    """Score change from splitting a leaf on M."""
    split = standard_leaf_log_score(leaf.stats.cell(M0), params) + standard_leaf_log_score(
        leaf.stats.cell(M1), params
    )
    return split - standard_leaf_log_score(leaf.stats.pooled(), params)


def _is_last_split(node: Node) -> bool:
    return isinstance(node, Internal) and all(isinstance(child, Leaf) for child in node.children)


def _m_split(tree: Tree, stats: LeafStats) -> Internal:
    rule = SplitRule(tree.schema.treatment_index, SplitKind.COMPLETE)
    return Internal(rule, (Leaf(stats.only(M0)), Leaf(stats.only(M1))))


def _splits_on_m_above(tree: Tree, path: Path) -> bool:
    m_index = tree.schema.treatment_index
    node = tree.root
    for child in path:
        if node.rule.variable == m_index:
            return True
        node = node.children[child]
    return False


def postprocess(tree: Tree, params: ScoreParams = ScoreParams()) -> PostprocessResult:
    """Prune a materialized FORCE tree.

    First every last split on M is collapsed when that strictly increases
    the score or when one of its cells holds no records. Then, until
    nothing changes: collapse each last split on a predictor when that
    strictly increases the score, and give each leaf
    whose parent is not an M split its own M split when that strictly
    increases the score.

    Raises:
        TreeStructureError: If *tree* is not standard or some leaf's parent
            is not a split on M.
    """
    if tree.form is not TreeForm.STANDARD:
        raise TreeStructureError("postprocess expects a standard-form tree")
    m_index = tree.schema.treatment_index
    for path, _ in tree.leaves():
        if not path or tree.node_at(path[:-1]).rule.variable != m_index:
            raise TreeStructureError("postprocess expects every leaf to sit under a split on M")

    start = tree_log_score(tree, params)
    edits: list[PostprocessEdit] = []

    for path, node in list(tree.iter_nodes()):
        if _is_last_split(node) and node.rule.variable == m_index:
            delta = _merge_delta(node, params)
            if delta > 0 or any(child.stats.n == 0 for child in node.children):
                tree = tree.replace(path, Leaf(node_stats(node)))
                edits.append(PostprocessEdit("remove-m-split", path, delta))

    changed = True
    while changed:
        changed = False
        for path, node in list(tree.iter_nodes()):
            if _is_last_split(node) and node.rule.variable != m_index:
                current = tree.node_at(path)
                if current is not node:
                    continue
                delta = _merge_delta(node, params)
                if delta > 0:
                    tree = tree.replace(path, Leaf(node_stats(node)))
                    edits.append(PostprocessEdit("merge-split", path, delta))
                    changed = True
        for path, leaf in tree.leaves():
            if path and tree.node_at(path[:-1]).rule.variable == m_index:
                continue
            if _splits_on_m_above(tree, path):
                continue
            delta = _add_m_delta(leaf, params)
            if delta > 0:
                tree = tree.replace(path, _m_split(tree, leaf.stats))
                edits.append(PostprocessEdit("add-m-split", path, delta))
                changed = True

    log.info(
        "Post-processing applied %d edits, score %.4f -> %.4f",
        len(edits),
        start,
        tree_log_score(tree, params),
    )
    return PostprocessResult(tree, tuple(edits))


# ---------------------------------------------------------------------------
# Summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainingSummary:
    mode: LearnMode
    score: float
    leaves: int
    splits: int
    m_splits: int
    records: int


def summarize(tree: Tree, mode: LearnMode, params: ScoreParams = ScoreParams()) -> TrainingSummary:
    internal = [node for _, node in tree.iter_nodes() if isinstance(node, Internal)]
    m_index = tree.schema.treatment_index
    return TrainingSummary(
        mode=mode,
        score=tree_log_score(tree, params),
        leaves=tree.leaf_count,
        splits=len(internal),
        m_splits=sum(1 for node in internal if node.rule.variable == m_index),
        records=node_stats(tree.root).n,
    )
