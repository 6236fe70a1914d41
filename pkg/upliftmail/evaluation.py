# SPDX-License-Identifier: GPL-3.0-or-later
"""
Offline evaluation of mailing policies on held-out experiment records.

Only records whose logged random assignment agrees with the policy's
recommendation are scored:

* matched and mailed:   r_s - c if the person subscribed, else -c
* matched, not mailed:  r_u if the person subscribed, else 0

Per-person revenue is the total divided by the number of matched records.
The baseline mails everyone and is scored on the mailed records only.
"""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass
from typing import Any, TextIO, Union

import numpy as np

from .data import M0, M1, S1, Dataset
from .errors import DatasetError, NoMailedRecordsError, NoMatchedRecordsError, SchemaMismatchError
from .policy import CostBenefit, decide_many
from .tree import Tree

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationReport:
    matched_mail: int
    matched_nomail: int
    skipped: int
    total_revenue: float
    per_person_revenue: float
    baseline_per_person: float
    improvement: float

    @property
    def matched(self) -> int:
        return self.matched_mail + self.matched_nomail

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _mailed_values(outcome: np.ndarray, cb: CostBenefit) -> np.ndarray:
    return np.where(outcome == S1, cb.r_s - cb.c, -cb.c)


def _unmailed_values(outcome: np.ndarray, cb: CostBenefit) -> np.ndarray:
    return np.where(outcome == S1, cb.r_u, 0.0)


def mail_to_all_revenue(test: Dataset, cb: CostBenefit) -> float:
    """Per-person revenue of mailing everyone, over the mailed records.

    Raises:
        NoMailedRecordsError: If no test record was mailed.
    """
    mailed = test.treatment == M1
    if not mailed.any():
        raise NoMailedRecordsError("mail-to-all baseline needs at least one mailed record")
    values = _mailed_values(test.outcome[mailed], cb)
    return math.fsum(values.tolist()) / int(mailed.sum())


def improvement(policy_revenue: float, baseline_revenue: float) -> float:
    return policy_revenue - baseline_revenue


def evaluate_decisions(mail: np.ndarray, test: Dataset, cb: CostBenefit) -> EvaluationReport:
    """Score an arbitrary per-record decision vector with the matched protocol.

    Args:
        mail: Boolean mask, True where the policy mails the record.
        test: Held-out records with their logged M and S.
        cb: Cost/benefit scenario.

    Raises:
        NoMatchedRecordsError: If no decision agrees with the logged mailing.
        NoMailedRecordsError: If the baseline is undefined.
    """
    mail = np.asarray(mail, dtype=bool)
    if mail.shape != (len(test),):
        raise DatasetError(f"expected {len(test)} decisions, got {mail.shape}")
    hit_mail = mail & (test.treatment == M1)
    hit_nomail = ~mail & (test.treatment == M0)
    matched_mail = int(hit_mail.sum())
    matched_nomail = int(hit_nomail.sum())
    matched = matched_mail + matched_nomail
    if matched == 0:
        raise NoMatchedRecordsError("no matched records: no recommendation agreed with the logged mailing")
    values = np.concatenate(
        [_mailed_values(test.outcome[hit_mail], cb), _unmailed_values(test.outcome[hit_nomail], cb)]
    )
    total = math.fsum(values.tolist())
    per_person = total / matched
    baseline = mail_to_all_revenue(test, cb)
    return EvaluationReport(
        matched_mail=matched_mail,
        matched_nomail=matched_nomail,
        skipped=len(test) - matched,
        total_revenue=total,
        per_person_revenue=per_person,
        baseline_per_person=baseline,
        improvement=improvement(per_person, baseline),
    )


def _check_schema(tree: Tree, test: Dataset) -> None:
    if tree.schema.fingerprint() != test.schema.fingerprint():
        raise SchemaMismatchError("test data and tree were built on different schemas")


def evaluate_policy(tree: Tree, test: Dataset, cb: CostBenefit) -> EvaluationReport:
    """Matched-record revenue of the tree's policy on *test*.

    Decisions see only the predictors; the logged M and S are used solely
    for matching and scoring.
    """
    _check_schema(tree, test)
    mail, _ = decide_many(tree, test.predictors, cb)
    report = evaluate_decisions(mail, test, cb)
    log.debug(
        "Matched %d mailed + %d unmailed of %d records; %.4f per person",
        report.matched_mail,
        report.matched_nomail,
        len(test),
        report.per_person_revenue,
    )
    return report


def decision_agreement(first: Tree, second: Tree, data: Dataset, cb: CostBenefit) -> float:
    """Share of records on which two trees make the same mailing decision."""
    if len(data) == 0:
        raise DatasetError("decision agreement needs at least one record")
    _check_schema(first, data)
    _check_schema(second, data)
    a, _ = decide_many(first, data.predictors, cb)
    b, _ = decide_many(second, data.predictors, cb)
    return float((a == b).mean())


# ---------------------------------------------------------------------------
# Cost/benefit sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    """Results for one benefit level with ``r_s = r_u = r``."""

    r: float
    baseline: float
    revenues: dict[str, float]
    improvements: dict[str, float]


TreeSet = Union[Mapping[str, Tree], Sequence[tuple[str, Tree]]]


def sweep(trees: TreeSet, test: Dataset, c: float, r_values: Sequence[float]) -> list[SweepRow]:
    """Evaluate every tree at each benefit level in *r_values*.

    Decisions are recomputed per level, so a policy may switch segments on
    as the benefit grows.
    """
    named = list(trees.items()) if isinstance(trees, Mapping) else list(trees)
    if not named:
        raise ValueError("sweep needs at least one tree")
    if not r_values:
        raise ValueError("sweep needs at least one benefit level")
    names = [name for name, _ in named]
    if len(set(names)) != len(names):
        raise ValueError("tree names must be unique")
    rows: list[SweepRow] = []
    for r in r_values:
        cb = CostBenefit(c=c, r_s=r, r_u=r)
        baseline = mail_to_all_revenue(test, cb)
        revenues: dict[str, float] = {}
        improvements: dict[str, float] = {}
        for name, tree in named:
            report = evaluate_policy(tree, test, cb)
            revenues[name] = report.per_person_revenue
            improvements[name] = improvement(report.per_person_revenue, baseline)
        rows.append(SweepRow(r=r, baseline=baseline, revenues=revenues, improvements=improvements))
        log.info("r=%g baseline=%.4f %s", r, baseline, " ".join(f"{n}={v:+.4f}" for n, v in improvements.items()))
    return rows


def _fmt(value: float) -> str:
    return "nan" if math.isnan(value) else f"{value:.6f}"


def write_sweep_csv(rows: Sequence[SweepRow], sink: TextIO, fingerprint: str | None = None) -> None:
    """Write ``r,baseline,<name>_revenue,<name>_improvement,...`` rows."""
    if fingerprint:
        sink.write(f"# config_fingerprint={fingerprint}\n")
    writer = csv.writer(sink, lineterminator="\n")
    names = list(rows[0].revenues) if rows else []
    header = ["r", "baseline"]
    for name in names:
        header += [f"{name}_revenue", f"{name}_improvement"]
    writer.writerow(header)
    for row in rows:
        line = [f"{row.r:g}", _fmt(row.baseline)]
        for name in names:
            line += [_fmt(row.revenues[name]), _fmt(row.improvements[name])]
        writer.writerow(line)
