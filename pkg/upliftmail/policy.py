# SPDX-License-Identifier: GPL-3.0-or-later
"""
Mailing decisions from a tree: expected lift in profit (ELP) and the
segment report describing who gets mailed.

ELP = r_s * p(s1 | m1) - r_u * p(s1 | m0) - c, and a person is mailed
exactly when ELP > 0.
"""

from __future__ import annotations

import csv
import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .data import M0, M1, Dataset
from .tree import Internal, Leaf, Node, Tree, TreeForm


class Action(enum.Enum):
    MAIL = "mail"
    NO_MAIL = "no_mail"


@dataclass(frozen=True)
class CostBenefit:
    """Mailing cost and the revenue of solicited and unsolicited subscriptions."""

    c: float
    r_s: float
    r_u: float

    def __post_init__(self) -> None:
        for name in ("c", "r_s", "r_u"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be a finite non-negative number, got {value!r}")


def _check_probability(name: str, p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must be a probability, got {p!r}")


def elp(p1: float, p0: float, cb: CostBenefit) -> float:
    """Expected lift in profit from mailing one person."""
    _check_probability("p1", p1)
    _check_probability("p0", p0)
    return cb.r_s * p1 - cb.r_u * p0 - cb.c


@dataclass(frozen=True)
class Decision:
    action: Action
    elp: float
    p1: float
    p0: float


def decide(tree: Tree, x: Sequence[int], cb: CostBenefit) -> Decision:
    """Mail iff the ELP at predictor values *x* is strictly positive."""
    p1 = tree.predict(x, M1)
    p0 = tree.predict(x, M0)
    value = elp(p1, p0, cb)
    return Decision(Action.MAIL if value > 0 else Action.NO_MAIL, value, p1, p0)


def decide_many(tree: Tree, predictors: np.ndarray, cb: CostBenefit) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`decide`.

    Returns:
        ``(mail mask, elp values)``, one entry per row of *predictors*.
    """
    p1 = tree.predict_many(predictors, M1)
    p0 = tree.predict_many(predictors, M0)
    values = cb.r_s * p1 - cb.r_u * p0 - cb.c
    return values > 0, values


# ---------------------------------------------------------------------------
# Segment report
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SegmentRow:
    """One region of predictor space with a single mailing decision.

    ``region`` holds, per predictor, the value indices the region admits.
    """

    path: str
    region: tuple[frozenset[int], ...]
    p1: float
    p0: float
    elp: float
    action: Action
    support: int

    def contains(self, x: Sequence[int]) -> bool:
        return all(value in allowed for value, allowed in zip(x, self.region))


def _describe_region(tree: Tree, region: list[frozenset[int]], order: list[int]) -> str:
    terms = []
    for j in order:
        spec = tree.schema.predictors[j]
        values = sorted(region[j])
        if len(values) == spec.arity:
            continue
        if len(values) == 1:
            terms.append(f"{spec.name} = {spec.values[values[0]]}")
        else:
            terms.append(f"{spec.name} in {{{','.join(spec.values[v] for v in values)}}}")
    return " & ".join(terms) if terms else "*"


def segment_report(tree: Tree, cb: CostBenefit, data: Dataset | None = None) -> list[SegmentRow]:
    """Partition predictor space into regions with one decision each.

    A region is a maximal path from the root to a split on M (or to a leaf
    when no M split ends the path); p1 and p0 are read from the leaves the
    m1 and m0 records reach. When the m1 and m0 branches below an M split
    keep splitting on predictors, their regions are intersected.

    Support is the number of records of *data* in the region; without
    *data* it is read from the leaf counts (the m1 cell of the m1 leaf plus
    the m0 cell of the m0 leaf), which is exact unless the branches below
    an M split are refined differently.
    """
    schema = tree.schema
    m_index = schema.treatment_index
    conditional = tree.form is TreeForm.FORCED
    rows: list[SegmentRow] = []

    def emit(leaf1: Leaf, leaf0: Leaf, region: list[frozenset[int]], order: list[int]) -> None:
        p1 = leaf1.stats.distribution(M1, conditional, tree.estimator)[1]
        p0 = leaf0.stats.distribution(M0, conditional, tree.estimator)[1]
        value = elp(p1, p0, cb)
        support = leaf1.stats.cell(M1).n + leaf0.stats.cell(M0).n
        rows.append(
            SegmentRow(
                path=_describe_region(tree, region, order),
                region=tuple(region),
                p1=p1,
                p0=p0,
                elp=value,
                action=Action.MAIL if value > 0 else Action.NO_MAIL,
                support=support,
            )
        )

    def walk(n1: Node, n0: Node, region: list[frozenset[int]], order: list[int]) -> None:
        for node in (n1, n0):
            if isinstance(node, Internal) and node.rule.variable != m_index:
                var = node.rule.variable
                parts = node.rule.child_values(schema.predictors[var].arity)
                next_order = order if var in order else order + [var]
                for child, values in enumerate(parts):
                    narrowed = region[var] & values
                    if not narrowed:
                        continue
                    sub = list(region)
                    sub[var] = narrowed
                    walk(
                        node.children[child] if n1 is node else n1,
                        node.children[child] if n0 is node else n0,
                        sub,
                        next_order,
                    )
                return
        if isinstance(n1, Internal) or isinstance(n0, Internal):
            walk(
                n1.children[M1] if isinstance(n1, Internal) else n1,
                n0.children[M0] if isinstance(n0, Internal) else n0,
                region,
                order,
            )
            return
        emit(n1, n0, region, order)

    full = [frozenset(range(spec.arity)) for spec in schema.predictors]
    walk(tree.root, tree.root, full, [])

    if data is not None:
        counted = []
        for row in rows:
            mask = np.ones(len(data), dtype=bool)
            for j, allowed in enumerate(row.region):
                if len(allowed) < schema.predictors[j].arity:
                    mask &= np.isin(data.predictors[:, j], sorted(allowed))
            counted.append(
                SegmentRow(row.path, row.region, row.p1, row.p0, row.elp, row.action, int(mask.sum()))
            )
        rows = counted
    return rows


def write_segment_csv(rows: Sequence[SegmentRow], sink: TextIO, fingerprint: str | None = None) -> None:
    """Write ``path,support,p1,p0,elp,action`` rows."""
    if fingerprint:
        sink.write(f"# config_fingerprint={fingerprint}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["path", "support", "p1", "p0", "elp", "action"])
    for row in rows:
        writer.writerow(
            [row.path, row.support, f"{row.p1:.6f}", f"{row.p0:.6f}", f"{row.elp:.6f}", row.action.value]
        )
