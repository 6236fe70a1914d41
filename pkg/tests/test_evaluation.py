# SPDX-License-Identifier: GPL-3.0-or-later
"""Matched-record evaluation, the mail-to-all baseline and the sweep."""

from __future__ import annotations

import io
import logging

import numpy as np
import pytest

from upliftmail.counts import LeafStats
from upliftmail.data import Dataset
from upliftmail.errors import DatasetError, NoMailedRecordsError, NoMatchedRecordsError, SchemaMismatchError
from upliftmail.evaluation import (
    decision_agreement,
    evaluate_decisions,
    evaluate_policy,
    mail_to_all_revenue,
    sweep,
    write_sweep_csv,
)
from upliftmail.policy import CostBenefit
from upliftmail.tree import Internal, Leaf, SplitKind, SplitRule, Tree
from tests.conftest import make_dataset, make_schema, repeat_rows

CB = CostBenefit(c=0.5, r_s=10.0, r_u=10.0)


def eager_tree(schema) -> Tree:
    """Mails everyone for any positive benefit above a small cost."""
    rule = SplitRule(schema.treatment_index, SplitKind.COMPLETE)
    return Tree(schema, Internal(rule, (Leaf(LeafStats(s0_m0=10)), Leaf(LeafStats(s1_m1=10)))))


def shy_tree(schema) -> Tree:
    """Never mails: no lift at all."""
    return Tree(schema, Leaf(LeafStats(s1_m1=1, s0_m1=9, s1_m0=1, s0_m0=9)))


class TestEvaluateDecisions:
    def test_mail_everyone(self, four_records: Dataset) -> None:
        report = evaluate_decisions(np.ones(4, dtype=bool), four_records, CB)
        assert (report.matched_mail, report.matched_nomail, report.skipped) == (2, 0, 2)
        assert report.total_revenue == 9.0
        assert report.per_person_revenue == 4.5
        assert report.baseline_per_person == 4.5
        assert report.improvement == 0.0

    def test_mail_nobody_counts_unsolicited_revenue(self, four_records: Dataset) -> None:
        report = evaluate_decisions(np.zeros(4, dtype=bool), four_records, CB)
        assert report.matched == 2
        assert report.per_person_revenue == 5.0
        assert report.improvement == pytest.approx(0.5)

    def test_no_agreement(self, four_records: Dataset) -> None:
        with pytest.raises(NoMatchedRecordsError, match="no matched records"):
            evaluate_decisions(np.array([False, False, True, True]), four_records, CB)

    def test_mail_everyone_without_mailed_records(self) -> None:
        data = make_dataset(make_schema(2), [((0,), 0, 1), ((1,), 0, 0)])
        with pytest.raises(NoMatchedRecordsError):
            evaluate_decisions(np.ones(2, dtype=bool), data, CB)

    def test_baseline_undefined_without_mailed_records(self) -> None:
        data = make_dataset(make_schema(2), [((0,), 0, 1), ((1,), 0, 0)])
        with pytest.raises(NoMailedRecordsError):
            evaluate_decisions(np.zeros(2, dtype=bool), data, CB)

    def test_wrong_length(self, four_records: Dataset) -> None:
        with pytest.raises(DatasetError, match="expected 4 decisions"):
            evaluate_decisions(np.ones(3, dtype=bool), four_records, CB)

    def test_to_dict(self, four_records: Dataset) -> None:
        raw = evaluate_decisions(np.ones(4, dtype=bool), four_records, CB).to_dict()
        assert raw["matched_mail"] == 2
        assert set(raw) >= {"per_person_revenue", "baseline_per_person", "improvement"}


class TestBaseline:
    def test_one_subscriber_in_three(self) -> None:
        data = make_dataset(make_schema(2), [((0,), 1, 1), ((0,), 1, 0), ((1,), 1, 0), ((1,), 0, 1)])
        assert mail_to_all_revenue(data, CB) == pytest.approx(8.5 / 3)

    def test_policy_mailing_everyone_equals_baseline_exactly(self) -> None:
        rng = np.random.default_rng(4)
        data = Dataset(make_schema(2), rng.integers(2, size=(999, 1)), rng.integers(2, size=999), rng.integers(2, size=999))
        for cb in (CB, CostBenefit(0.42, 3.0, 7.0), CostBenefit(0.1, 0.3, 0.0)):
            report = evaluate_policy(eager_tree(data.schema), data, cb)
            assert report.matched_nomail == 0
            assert report.per_person_revenue == mail_to_all_revenue(data, cb)
            assert report.improvement == 0.0


class TestEvaluatePolicy:
    def test_schema_mismatch(self, four_records: Dataset) -> None:
        with pytest.raises(SchemaMismatchError):
            evaluate_policy(shy_tree(make_schema(3)), four_records, CB)

    def test_shy_policy(self, four_records: Dataset) -> None:
        report = evaluate_policy(shy_tree(four_records.schema), four_records, CB)
        assert report.matched_mail == 0
        assert report.per_person_revenue == 5.0

    def test_agreement(self, four_records: Dataset) -> None:
        eager, shy = eager_tree(four_records.schema), shy_tree(four_records.schema)
        assert decision_agreement(eager, eager, four_records, CB) == 1.0
        assert decision_agreement(eager, shy, four_records, CB) == 0.0

    def test_agreement_needs_records(self) -> None:
        empty = make_dataset(make_schema(2), [])
        with pytest.raises(DatasetError):
            decision_agreement(shy_tree(empty.schema), shy_tree(empty.schema), empty, CB)


class TestSweep:
    def test_rows(self, four_records: Dataset) -> None:
        trees = {"eager": eager_tree(four_records.schema), "shy": shy_tree(four_records.schema)}
        rows = sweep(trees, four_records, 0.5, [1.0, 2.0])
        assert [row.r for row in rows] == [1.0, 2.0]
        assert [row.baseline for row in rows] == [0.0, 0.5]
        assert rows[0].improvements["eager"] == 0.0
        assert rows[1].revenues["shy"] == 1.0
        assert rows[1].improvements["shy"] == pytest.approx(0.5)

    def test_negative_improvement_is_logged_with_its_sign(self, caplog) -> None:
        schema = make_schema(2)
        data = make_dataset(schema, repeat_rows((0,), 1, 1, 2) + repeat_rows((0,), 0, 0, 2))
        with caplog.at_level(logging.INFO, logger="upliftmail"):
            rows = sweep({"shy": shy_tree(schema)}, data, 0.5, [1.0])
        assert rows[0].improvements["shy"] == pytest.approx(-0.5)
        assert "shy=-0.5000" in caplog.text
        assert "+-" not in caplog.text

    def test_decisions_follow_the_benefit(self, four_records: Dataset) -> None:
        # p1 - p0 = 10/12 for the eager tree: mailing pays only once r * 10/12 > c.
        rows = sweep([("eager", eager_tree(four_records.schema))], four_records, 1.0, [1.0, 2.0])
        assert rows[0].revenues["eager"] == pytest.approx(0.5)
        assert rows[1].revenues["eager"] == rows[1].baseline

    @pytest.mark.parametrize(
        "trees,r_values,message",
        [({}, [1.0], "at least one tree"), ({"x": None}, [], "benefit level")],
    )
    def test_rejects_empty_inputs(self, four_records: Dataset, trees, r_values, message: str) -> None:
        with pytest.raises(ValueError, match=message):
            sweep(trees, four_records, 0.5, r_values)

    def test_rejects_duplicate_names(self, four_records: Dataset) -> None:
        tree = shy_tree(four_records.schema)
        with pytest.raises(ValueError, match="unique"):
            sweep([("a", tree), ("a", tree)], four_records, 0.5, [1.0])

    def test_csv(self, four_records: Dataset) -> None:
        rows = sweep({"eager": eager_tree(four_records.schema)}, four_records, 0.5, [1.0, 2.5])
        sink = io.StringIO()
        write_sweep_csv(rows, sink, fingerprint="f00")
        assert sink.getvalue().splitlines() == [
            "# config_fingerprint=f00",
            "r,baseline,eager_revenue,eager_improvement",
            "1,0.000000,0.000000,0.000000",
            "2.5,0.750000,0.750000,0.000000",
        ]
