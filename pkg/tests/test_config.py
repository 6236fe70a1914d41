# SPDX-License-Identifier: GPL-3.0-or-later
"""Config file parsing, override precedence and fingerprints."""

from __future__ import annotations

from pathlib import Path

import pytest

from upliftmail.config import DEFAULTS, RunConfig, parse_config_text, parse_sweep_range
from upliftmail.counts import Estimator
from upliftmail.errors import ConfigError, GeneratorConfigError
from upliftmail.learn import LearnMode
from upliftmail.synthetic import BehaviorMixture


class TestParsing:
    def test_comments_blank_lines_and_spacing(self) -> None:
        parsed = parse_config_text("# layout\n\n  treatment_column =  mailed \nmode=NORMAL\n")
        assert parsed == {"treatment_column": "mailed", "mode": "normal"}

    def test_numbers_are_normalised(self) -> None:
        parsed = parse_config_text("cost = 0.420\nseed = 007\nkappa = 1e-3")
        assert parsed == {"cost": "0.42", "seed": "7", "kappa": "0.001"}

    @pytest.mark.parametrize(
        "text,message",
        [
            ("mode force", r"<config>:1: expected 'key = value'"),
            ("colour = red", "unknown config key"),
            ("cost = 1\ncost = 2", r"<config>:2: duplicate key 'cost'"),
            ("cost = -1", "cost: value must be >= 0"),
            ("kappa = 0", "kappa: value must be > 0"),
            ("kappa = 2", "kappa: value must be <= 1"),
            ("mode = bushy", "expected one of normal, force, split-first"),
            ("seed = 1.5", "value must be an integer"),
            ("population_size = 0", "value must be >= 1"),
            ("cost = nan", "value must be finite"),
            ("segment.a.mixture = 0.5,0.5", "four shares"),
            ("segment.a.when = region", "name=value"),
            ("predictor.region = north,,south", "empty value label"),
        ],
    )
    def test_errors(self, text: str, message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            parse_config_text(text)

    def test_file_errors_name_the_file(self, tmp_path: Path) -> None:
        path = tmp_path / "run.conf"
        path.write_text("seed = 1\nbogus = 2\n", encoding="utf-8")
        with pytest.raises(ConfigError, match=r"run\.conf:2: unknown config key"):
            RunConfig.build(path)


class TestSweepRange:
    @pytest.mark.parametrize(
        "raw,expected",
        [
            ("1:3", [1.0, 2.0, 3.0]),
            ("0:1:0.25", [0.0, 0.25, 0.5, 0.75, 1.0]),
            ("5:5", [5.0]),
            ("1:2:5", [1.0]),
        ],
    )
    def test_expansion(self, raw: str, expected: list[float]) -> None:
        assert parse_sweep_range(raw) == pytest.approx(expected)

    def test_default_covers_one_to_fifteen(self) -> None:
        assert RunConfig.build().sweep_values == [float(r) for r in range(1, 16)]

    @pytest.mark.parametrize("raw", ["1", "3:1", "1:2:0", "a:b", "1:2:3:4", "-1:2"])
    def test_rejects(self, raw: str) -> None:
        with pytest.raises(ConfigError):
            parse_sweep_range(raw)

    def test_spellings_share_one_setting(self) -> None:
        assert parse_config_text("sweep_r = 1:15") == parse_config_text("sweep_r = 1.0:15:1")


class TestRunConfig:
    def test_defaults(self) -> None:
        run = RunConfig.build()
        assert run.settings == DEFAULTS
        assert run.learn_config().mode is LearnMode.FORCE
        assert run.learn_config().params.structure_prior_kappa == 0.001
        assert run.learn_config().estimator is Estimator.POSTERIOR_MEAN
        assert run.cost_benefit().c == 0.42
        assert (run.seed, run.workers, run.train_fraction) == (0, 1, 0.7)

    def test_precedence(self, tmp_path: Path) -> None:
        path = tmp_path / "run.conf"
        path.write_text("cost = 0.5\nmode = normal\n", encoding="utf-8")
        run = RunConfig.build(path, {"cost": 0.9, "mode": None})
        assert run.get("cost") == "0.9"
        assert run.get("mode") == "normal"

    def test_override_errors(self) -> None:
        with pytest.raises(ConfigError, match="train_fraction"):
            RunConfig.build(overrides={"train_fraction": 0})

    def test_max_splits(self) -> None:
        assert RunConfig.build().learn_config().max_splits is None
        assert RunConfig.build(overrides={"max_splits": 3}).learn_config().max_splits == 3

    def test_schema_config(self) -> None:
        run = RunConfig.build(overrides={"treatment_column": "mailed", "treatment_m0": "no", "treatment_m1": "yes"})
        config = run.schema_config()
        assert config.treatment_column == "mailed"
        assert config.treatment_labels == ("no", "yes")

    def test_schema_config_error(self) -> None:
        run = RunConfig.build(overrides={"treatment_m0": "x", "treatment_m1": "x"})
        with pytest.raises(ConfigError):
            run.schema_config()

    def test_direct_construction_fills_defaults(self) -> None:
        run = RunConfig(parse_config_text("cost = 0.5\n"))
        assert run.cost_benefit().c == 0.5
        assert run.schema_config().treatment_column == DEFAULTS["treatment_column"]
        assert RunConfig({}).settings == DEFAULTS


class TestFingerprint:
    def test_equal_for_equivalent_spellings(self) -> None:
        a = RunConfig.build(overrides={"cost": "0.420", "sweep_r": "1:15"})
        assert a.fingerprint() == RunConfig.build().fingerprint()

    def test_workers_do_not_count(self) -> None:
        assert RunConfig.build(overrides={"workers": 8}).fingerprint() == RunConfig.build().fingerprint()

    def test_paths_do_not_count(self, tmp_path: Path) -> None:
        run = RunConfig.build(paths={"out": tmp_path, "data": None})
        assert run.paths == {"out": tmp_path}
        assert run.fingerprint() == RunConfig.build().fingerprint()

    @pytest.mark.parametrize("key,value", [("seed", 1), ("cost", 0.5), ("mode", "normal"), ("kappa", 0.01)])
    def test_changes_with_settings(self, key: str, value: object) -> None:
        assert RunConfig.build(overrides={key: value}).fingerprint() != RunConfig.build().fingerprint()

    def test_is_hex_sha256(self) -> None:
        digest = RunConfig.build().fingerprint()
        assert len(digest) == 64
        int(digest, 16)


class TestPopulation:
    def test_default_population(self) -> None:
        config = RunConfig.build().with_default_population().generator_config()
        assert [p.name for p in config.predictors] == ["region", "plan", "device"]
        assert [s.segment_id for s in config.segments] == ["persuadable", "always", "anti"]
        assert config.segments[0].predicate == (("region", "north"),)
        assert config.segments[0].mixture == BehaviorMixture(0.05, 0.40, 0.0, 0.55)
        assert config.population_size == 10_000
        assert config.mail_probability == 0.9

    def test_configured_population_wins(self) -> None:
        text = (
            "predictor.tier = gold,silver\n"
            "segment.all.mixture = 0,1,0,0\n"
            "segment.all.weight = 1\n"
        )
        run = RunConfig(parse_config_text(text)).with_default_population()
        config = run.generator_config()
        assert [p.name for p in config.predictors] == ["tier"]
        assert config.segments[0].predicate == ()

    def test_custom_labels_reach_the_generator(self) -> None:
        run = RunConfig.build(overrides={"outcome_s0": "no", "outcome_s1": "yes"}).with_default_population()
        assert run.generator_config().outcome.values == ("no", "yes")

    @pytest.mark.parametrize(
        "text,message",
        [
            ("segment.a.mixture = 0,1,0,0\nsegment.a.weight = 1", "no predictor"),
            ("predictor.t = x,y", "no segment"),
            ("predictor.t = x,y\nsegment.a.weight = 1", "lacks mixture"),
        ],
    )
    def test_incomplete(self, text: str, message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            RunConfig(parse_config_text(text)).generator_config()

    def test_invalid_population_reported_by_generator(self) -> None:
        text = "predictor.t = x,y\nsegment.a.when = t=x\nsegment.a.mixture = 0,1,0,0\nsegment.a.weight = 1"
        with pytest.raises(GeneratorConfigError):
            RunConfig(parse_config_text(text)).generator_config()
