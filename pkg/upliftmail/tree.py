# SPDX-License-Identifier: GPL-3.0-or-later
"""
Decision trees for p(S | M, X).

Internal nodes split on a predictor or on the mailing indicator ``M``;
leaves hold outcome counts cross-tabulated by ``M``. A tree is either in
*standard* form, where a leaf predicts from its pooled counts and any
dependence on ``M`` comes from explicit ``M`` splits, or in *forced* form,
where ``M`` never appears as a split and every leaf is read as if it ended
in one (the ``M = m`` cell of its cross-tab).
"""

from __future__ import annotations

import enum
import json
import logging
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from .counts import Estimator, LeafStats
from .data import M0, M1, Schema
from .errors import SchemaError, SchemaMismatchError, TreeFormatError, TreeStructureError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1

Path = tuple[int, ...]


class SplitKind(enum.Enum):
    COMPLETE = "complete"
    BINARY = "binary"


class TreeForm(enum.Enum):
    STANDARD = "standard"
    FORCED = "forced"


@dataclass(frozen=True)
class SplitRule:
    """How an internal node routes records to its children.

    A complete split has one child per value of the variable. A binary split
    sends ``value`` to child 0 and every other value to child 1.
    """

    variable: int
    kind: SplitKind
    value: int | None = None

    def __post_init__(self) -> None:
        if self.kind is SplitKind.BINARY:
            if self.value is None or self.value < 0:
                raise TreeStructureError("binary split needs a singled-out value index")
        elif self.value is not None:
            raise TreeStructureError("complete split takes no singled-out value")

    def child_count(self, arity: int) -> int:
        return arity if self.kind is SplitKind.COMPLETE else 2

    def child_for(self, value: int) -> int:
        if self.kind is SplitKind.COMPLETE:
            return value
        return 0 if value == self.value else 1

    def child_values(self, arity: int) -> list[frozenset[int]]:
        """Value partition, one set per child."""
        if self.kind is SplitKind.COMPLETE:
            return [frozenset((v,)) for v in range(arity)]
        return [frozenset((self.value,)), frozenset(range(arity)) - {self.value}]


@dataclass(frozen=True)
class Leaf:
    stats: LeafStats


@dataclass(frozen=True)
class Internal:
    rule: SplitRule
    children: tuple[Node, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))


Node = Union[Leaf, Internal]


def node_stats(node: Node) -> LeafStats:
    """Counts implied by a subtree (the sum over its leaves)."""
    if isinstance(node, Leaf):
        return node.stats
    total = LeafStats()
    for child in node.children:
        total = total + node_stats(child)
    return total


def branch_label(schema: Schema, rule: SplitRule, child: int) -> str:
    """Human-readable test on the edge into *child*."""
    spec = schema.variable(rule.variable)
    if rule.kind is SplitKind.COMPLETE:
        return f"{spec.name} = {spec.values[child]}"
    op = "=" if child == 0 else "!="
    return f"{spec.name} {op} {spec.values[rule.value]}"


@dataclass(frozen=True)
class Tree:
    """An immutable tree over *schema*; validated on construction."""

    schema: Schema
    root: Node
    form: TreeForm = TreeForm.STANDARD
    estimator: Estimator = Estimator.POSTERIOR_MEAN

    def __post_init__(self) -> None:
        self._validate(self.root, {})

    def _validate(self, node: Node, reachable: dict[int, frozenset[int]]) -> None:
        if isinstance(node, Leaf):
            if not isinstance(node.stats, LeafStats):
                raise TreeStructureError("leaf must hold LeafStats")
            return
        if not isinstance(node, Internal):
            raise TreeStructureError(f"unknown node type {type(node).__name__}")
        rule = node.rule
        m_index = self.schema.treatment_index
        if not 0 <= rule.variable <= m_index:
            raise TreeStructureError(f"split variable index {rule.variable} outside schema")
        if rule.variable == m_index:
            if self.form is TreeForm.FORCED:
                raise TreeStructureError("forced trees never split on M explicitly")
            if rule.kind is not SplitKind.COMPLETE:
                raise TreeStructureError("splits on M must be complete")
        spec = self.schema.variable(rule.variable)
        if len(node.children) != rule.child_count(spec.arity):
            raise TreeStructureError(
                f"split on {spec.name!r} has {len(node.children)} children, "
                f"expected {rule.child_count(spec.arity)}"
            )
        here = reachable.get(rule.variable, frozenset(range(spec.arity)))
        if rule.kind is SplitKind.BINARY:
            if rule.value >= spec.arity:
                raise TreeStructureError(f"split value index {rule.value} outside {spec.name!r}")
            if rule.value not in here or len(here) < 2:
                raise TreeStructureError(f"vacuous or contradictory split on {spec.name!r}")
        elif len(here) < 2:
            raise TreeStructureError(f"vacuous split on {spec.name!r}")
        for child, values in zip(node.children, rule.child_values(spec.arity)):
            self._validate(child, {**reachable, rule.variable: here & values})

    # ------------------------------------------------------------------
    # Navigation
    # ------------------------------------------------------------------

    def _check_assignment(self, x: Sequence[int], m: int) -> None:
        if len(x) != self.schema.n_predictors:
            raise SchemaError(f"expected {self.schema.n_predictors} predictor values, got {len(x)}")
        for spec, value in zip(self.schema.predictors, x):
            if not 0 <= value < spec.arity:
                raise SchemaError(f"value {value} outside arity of {spec.name!r}")
        if m not in (M0, M1):
            raise SchemaError(f"treatment value {m} outside arity of {self.schema.treatment.name!r}")

    def traverse(self, x: Sequence[int], m: int) -> Leaf:
        """Follow the splits for predictor values *x* and mailing *m*."""
        self._check_assignment(x, m)
        node = self.root
        m_index = self.schema.treatment_index
        while isinstance(node, Internal):
            rule = node.rule
            value = m if rule.variable == m_index else x[rule.variable]
            node = node.children[rule.child_for(value)]
        return node

    def predict(self, x: Sequence[int], m: int) -> float:
        """p(S = s1 | x, M = m)."""
        leaf = self.traverse(x, m)
        return leaf.stats.distribution(m, self.form is TreeForm.FORCED, self.estimator)[1]

    def route(self, predictors: np.ndarray, treatment: np.ndarray) -> Iterator[tuple[Path, Leaf, np.ndarray]]:
        """Partition record indices by the leaf they reach.

        Yields:
            ``(leaf path, leaf, record indices)`` for every leaf reached.
        """
        m_index = self.schema.treatment_index
        stack: list[tuple[Path, Node, np.ndarray]] = [((), self.root, np.arange(len(treatment)))]
        while stack:
            path, node, idx = stack.pop()
            if isinstance(node, Leaf):
                if idx.size:
                    yield path, node, idx
                continue
            rule = node.rule
            column = treatment[idx] if rule.variable == m_index else predictors[idx, rule.variable]
            if rule.kind is SplitKind.COMPLETE:
                branch = column
            else:
                branch = (column != rule.value).astype(np.int64)
            for child in reversed(range(len(node.children))):
                stack.append((path + (child,), node.children[child], idx[branch == child]))

    def predict_many(self, predictors: np.ndarray, m: int) -> np.ndarray:
        """Vectorised :meth:`predict` with the same *m* for every row."""
        predictors = np.asarray(predictors, dtype=np.int64)
        n = predictors.shape[0]
        for j, spec in enumerate(self.schema.predictors):
            column = predictors[:, j]
            if column.size and (column.min() < 0 or column.max() >= spec.arity):
                raise SchemaError(f"value outside arity of {spec.name!r}")
        out = np.empty(n, dtype=np.float64)
        conditional = self.form is TreeForm.FORCED
        for _, leaf, idx in self.route(predictors, np.full(n, m, dtype=np.int64)):
            out[idx] = leaf.stats.distribution(m, conditional, self.estimator)[1]
        return out

    def iter_nodes(self) -> Iterator[tuple[Path, Node]]:
        """Pre-order walk yielding ``(path, node)``."""
        stack: list[tuple[Path, Node]] = [((), self.root)]
        while stack:
            path, node = stack.pop()
            yield path, node
            if isinstance(node, Internal):
                for child in reversed(range(len(node.children))):
                    stack.append((path + (child,), node.children[child]))

    def leaves(self) -> list[tuple[Path, Leaf]]:
        return [(path, node) for path, node in self.iter_nodes() if isinstance(node, Leaf)]

    @property
    def leaf_count(self) -> int:
        return sum(1 for _, node in self.iter_nodes() if isinstance(node, Leaf))

    def node_at(self, path: Path) -> Node:
        node = self.root
        for child in path:
            if not isinstance(node, Internal):
                raise TreeStructureError(f"path {path} runs past a leaf")
            node = node.children[child]
        return node

    def replace(self, path: Path, new: Node) -> Tree:
        """Return a copy with the subtree at *path* replaced by *new*."""

        def rebuild(node: Node, rest: Path) -> Node:
            if not rest:
                return new
            if not isinstance(node, Internal):
                raise TreeStructureError(f"path {path} runs past a leaf")
            children = list(node.children)
            children[rest[0]] = rebuild(children[rest[0]], rest[1:])
            return Internal(node.rule, tuple(children))

        return Tree(self.schema, rebuild(self.root, path), self.form, self.estimator)

    def describe(self) -> str:
        """Indented text rendering, one line per edge or leaf."""
        lines: list[str] = []

        def walk(node: Node, depth: int) -> None:
            pad = "  " * depth
            if isinstance(node, Leaf):
                s = node.stats
                lines.append(
                    f"{pad}leaf n={s.n} m1=({s.s1_m1}/{s.s1_m1 + s.s0_m1}) m0=({s.s1_m0}/{s.s1_m0 + s.s0_m0})"
                )
                return
            for i, child in enumerate(node.children):
                lines.append(f"{pad}{branch_label(self.schema, node.rule, i)}:")
                walk(child, depth + 1)

        walk(self.root, 0)
        return "\n".join(lines)


def traverse(tree: Tree, x: Sequence[int], m: int) -> Leaf:
    return tree.traverse(x, m)


def predict(tree: Tree, x: Sequence[int], m: int) -> float:
    return tree.predict(x, m)


def materialize_m_splits(tree: Tree) -> Tree:
    """Turn a forced tree into the equivalent standard tree.

    Every leaf becomes a complete split on ``M`` whose two leaves hold the
    m0 and m1 cells of the original cross-tab.

    Raises:
        TreeStructureError: If *tree* is already in standard form.
    """
    if tree.form is not TreeForm.FORCED:
        raise TreeStructureError("tree is already in standard form")
    m_rule = SplitRule(tree.schema.treatment_index, SplitKind.COMPLETE)

    def expand(node: Node) -> Node:
        if isinstance(node, Leaf):
            return Internal(m_rule, (Leaf(node.stats.only(M0)), Leaf(node.stats.only(M1))))
        return Internal(node.rule, tuple(expand(child) for child in node.children))

    return Tree(tree.schema, expand(tree.root), TreeForm.STANDARD, tree.estimator)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _node_to_json(schema: Schema, node: Node) -> dict[str, Any]:
    if isinstance(node, Leaf):
        return {"counts": node.stats.to_dict()}
    spec = schema.variable(node.rule.variable)
    split: dict[str, Any] = {"variable": spec.name, "kind": node.rule.kind.value}
    if node.rule.kind is SplitKind.BINARY:
        split["value"] = spec.values[node.rule.value]
    return {"split": split, "children": [_node_to_json(schema, child) for child in node.children]}


def _node_from_json(schema: Schema, raw: Any) -> Node:
    if not isinstance(raw, dict):
        raise TreeFormatError("tree node must be a JSON object")
    if "counts" in raw:
        try:
            return Leaf(LeafStats.from_dict(raw["counts"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise TreeFormatError(f"malformed leaf counts: {exc}") from exc
    if "split" in raw:
        split = raw["split"]
        children = raw.get("children")
        if not isinstance(split, dict) or not isinstance(children, list):
            raise TreeFormatError("internal node needs a split object and a children list")
        try:
            variable = schema.variable_index(split["variable"])
            kind = SplitKind(split["kind"])
            value = None
            if kind is SplitKind.BINARY:
                value = schema.variable(variable).index_of(split["value"])
            rule = SplitRule(variable, kind, value)
        except (KeyError, TypeError, ValueError) as exc:
            raise TreeFormatError(f"malformed split: {exc}") from exc
        return Internal(rule, tuple(_node_from_json(schema, child) for child in children))
    raise TreeFormatError(f"unknown node kind with keys {sorted(raw)}")


def serialize(tree: Tree, metadata: Mapping[str, Any] | None = None) -> bytes:
    """Encode *tree* as the JSON model file.

    Only counts are stored; predictive distributions are recomputed on load.
    """
    document: dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "schema_fingerprint": tree.schema.fingerprint(),
        "schema": tree.schema.to_dict(),
        "form": tree.form.value,
        "estimator": tree.estimator.value,
    }
    if metadata:
        document["metadata"] = dict(metadata)
    document["root"] = _node_to_json(tree.schema, tree.root)
    return (json.dumps(document, indent=2) + "\n").encode("utf-8")


def _load_document(data: bytes) -> dict[str, Any]:
    try:
        document = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise TreeFormatError(f"tree file is not valid JSON: {exc}") from exc
    if not isinstance(document, dict):
        raise TreeFormatError("tree file root must be a JSON object")
    if document.get("format_version") != FORMAT_VERSION:
        raise TreeFormatError(f"unsupported tree format version {document.get('format_version')!r}")
    return document


def deserialize(data: bytes, expected_schema: Schema | None = None) -> Tree:
    """Decode a model file written by :func:`serialize`.

    Args:
        data: File contents.
        expected_schema: Schema the caller works with; required when the
            file does not embed its schema.

    Raises:
        TreeFormatError: Malformed document or unknown node kind.
        SchemaMismatchError: The file's schema fingerprint differs from
            *expected_schema*.
    """
    document = _load_document(data)
    fingerprint = document.get("schema_fingerprint")
    if not isinstance(fingerprint, str):
        raise TreeFormatError("tree file lacks a schema fingerprint")
    if expected_schema is not None and expected_schema.fingerprint() != fingerprint:
        raise SchemaMismatchError("schema fingerprint mismatch: the tree was learned on a different schema")
    if "schema" in document:
        try:
            schema = Schema.from_dict(document["schema"])
        except ValueError as exc:
            raise TreeFormatError(str(exc)) from exc
        if schema.fingerprint() != fingerprint:
            raise TreeFormatError("embedded schema does not match its fingerprint")
    elif expected_schema is not None:
        schema = expected_schema
    else:
        raise TreeFormatError("tree file embeds no schema and none was supplied")
    try:
        form = TreeForm(document.get("form"))
        estimator = Estimator(document.get("estimator", Estimator.POSTERIOR_MEAN.value))
    except ValueError as exc:
        raise TreeFormatError(str(exc)) from exc
    root = _node_from_json(schema, document.get("root"))
    try:
        return Tree(schema, root, form, estimator)
    except TreeStructureError as exc:
        raise TreeFormatError(f"tree file describes an invalid tree: {exc}") from exc


def read_metadata(data: bytes) -> dict[str, Any]:
    """Return the provenance metadata stored alongside a tree."""
    metadata = _load_document(data).get("metadata", {})
    return metadata if isinstance(metadata, dict) else {}
