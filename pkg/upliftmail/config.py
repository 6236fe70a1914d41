# SPDX-License-Identifier: GPL-3.0-or-later
"""
Run configuration: a flat ``key = value`` file merged with command-line
overrides.

Example::

    # column layout
    treatment_column = mailed
    treatment_m0 = no
    treatment_m1 = yes
    mode = force
    cost = 0.42
    sweep_r = 1:15

    predictor.region = north,south,west
    segment.pers.when = region=north
    segment.pers.mixture = 0.05,0.40,0,0.55
    segment.pers.weight = 0.5

Values are normalised when read, so ``cost = 0.42`` and ``--cost 0.420``
produce the same fingerprint.
"""

from __future__ import annotations

import hashlib
import logging
import math
import re
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .counts import Estimator
from .data import SchemaConfig, VariableSpec
from .errors import ConfigError
from .learn import LearnConfig, LearnMode
from .policy import CostBenefit
from .scoring import ScoreParams
from .synthetic import BehaviorMixture, GeneratorConfig, SegmentSpec

log = logging.getLogger(__name__)

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_\-]*$")
_PREDICTOR_KEY = re.compile(r"^predictor\.(?P<name>[^.\s]+)$")
_SEGMENT_KEY = re.compile(r"^segment\.(?P<id>[^.\s]+)\.(?P<field>when|mixture|weight)$")

# Settings that do not change any output; left out of the fingerprint.
_UNHASHED = frozenset({"workers"})


# ----------------------------
# Value normalisers
# ----------------------------

def _text(raw: str) -> str:
    value = raw.strip()
    if not value:
        raise ValueError("value must be non-empty")
    return value


def _number(raw: str, *, low: float | None = None, high: float | None = None, open_low: bool = False) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise ValueError("value must be a number") from exc
    if not math.isfinite(value):
        raise ValueError("value must be finite")
    if low is not None and (value < low or (open_low and value == low)):
        raise ValueError(f"value must be {'>' if open_low else '>='} {low:g}")
    if high is not None and value > high:
        raise ValueError(f"value must be <= {high:g}")
    return value


def _integer(raw: str, *, low: int = 0) -> int:
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError("value must be an integer") from exc
    if value < low:
        raise ValueError(f"value must be >= {low}")
    return value


def _amount(raw: str) -> str:
    return repr(_number(raw, low=0.0))


def parse_sweep_range(raw: str) -> list[float]:
    """Expand ``lo:hi[:step]`` into the inclusive list of benefit levels.

    >>> parse_sweep_range("1:3")
    [1.0, 2.0, 3.0]
    """
    parts = raw.strip().split(":")
    if len(parts) not in (2, 3):
        raise ConfigError(f"sweep range must look like lo:hi[:step], got {raw!r}")
    try:
        lo = _number(parts[0], low=0.0)
        hi = _number(parts[1], low=0.0)
        step = _number(parts[2], low=0.0, open_low=True) if len(parts) == 3 else 1.0
    except ValueError as exc:
        raise ConfigError(f"sweep range {raw!r}: {exc}") from exc
    if hi < lo:
        raise ConfigError(f"sweep range {raw!r}: upper bound is below lower bound")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [lo + i * step for i in range(count)]


def _sweep(raw: str) -> str:
    values = parse_sweep_range(raw)
    parts = raw.strip().split(":")
    step = float(parts[2]) if len(parts) == 3 else 1.0
    return f"{values[0]!r}:{values[-1]!r}:{step!r}"


def _choice(enum_cls: Any) -> Callable[[str], str]:
    def normalise(raw: str) -> str:
        try:
            return enum_cls(raw.strip().lower()).value
        except ValueError as exc:
            allowed = ", ".join(member.value for member in enum_cls)
            raise ValueError(f"expected one of {allowed}") from exc
    return normalise


_SCALARS: dict[str, Callable[[str], str]] = {
    "treatment_column": _text,
    "treatment_m0": _text,
    "treatment_m1": _text,
    "outcome_column": _text,
    "outcome_s0": _text,
    "outcome_s1": _text,
    "mode": _choice(LearnMode),
    "kappa": lambda raw: repr(_number(raw, low=0.0, high=1.0, open_low=True)),
    "estimator": _choice(Estimator),
    "max_splits": lambda raw: str(_integer(raw)),
    "cost": _amount,
    "revenue_solicited": _amount,
    "revenue_unsolicited": _amount,
    "sweep_r": _sweep,
    "seed": lambda raw: str(_integer(raw)),
    "train_fraction": lambda raw: repr(_number(raw, low=0.0, high=1.0, open_low=True)),
    "population_size": lambda raw: str(_integer(raw, low=1)),
    "mail_probability": lambda raw: repr(_number(raw, low=0.0, high=1.0)),
    "workers": lambda raw: str(_integer(raw, low=1)),
}

DEFAULTS: dict[str, str] = {
    "treatment_column": "M",
    "treatment_m0": "0",
    "treatment_m1": "1",
    "outcome_column": "S",
    "outcome_s0": "0",
    "outcome_s1": "1",
    "mode": "force",
    "kappa": "0.001",
    "estimator": "posterior",
    "cost": "0.42",
    "revenue_solicited": "10.0",
    "revenue_unsolicited": "10.0",
    "sweep_r": "1.0:15.0:1.0",
    "seed": "0",
    "train_fraction": "0.7",
    "population_size": "10000",
    "mail_probability": "0.9",
    "workers": "1",
}

# Three segments: persuadable-rich, always-buy-rich, anti-persuadable; two
# noise predictors. Used by ``generate`` when no population is configured.
DEFAULT_POPULATION = """
predictor.region = north,south,west
predictor.plan = basic,plus
predictor.device = desktop,mobile
segment.persuadable.when = region=north
segment.persuadable.mixture = 0.05,0.40,0,0.55
segment.persuadable.weight = 0.34
segment.always.when = region=south
segment.always.mixture = 0.30,0,0,0.70
segment.always.weight = 0.33
segment.anti.when = region=west
segment.anti.mixture = 0.05,0,0.15,0.80
segment.anti.weight = 0.33
"""


def _normalise(key: str, raw: str) -> str:
    if key in _SCALARS:
        normaliser = _SCALARS[key]
    elif _PREDICTOR_KEY.match(key):
        normaliser = _labels
    elif match := _SEGMENT_KEY.match(key):
        normaliser = {"when": _predicate, "mixture": _mixture, "weight": _weight}[match["field"]]
    else:
        raise ConfigError(f"unknown config key: {key!r}")
    try:
        return normaliser(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _labels(raw: str) -> str:
    labels = [part.strip() for part in raw.split(",")]
    if any(not label for label in labels):
        raise ValueError("empty value label")
    return ",".join(labels)


def _predicate(raw: str) -> str:
    text = raw.strip()
    if text == "*":
        return text
    terms = []
    for term in text.split("&"):
        name, sep, label = term.partition("=")
        if not sep or not name.strip() or not label.strip():
            raise ValueError(f"expected name=value terms joined by '&', got {raw!r}")
        terms.append(f"{name.strip()}={label.strip()}")
    return " & ".join(terms)


def _mixture(raw: str) -> str:
    parts = raw.split(",")
    if len(parts) != 4:
        raise ValueError("mixture needs four shares: always,persuadable,anti,never")
    return ",".join(repr(_number(part, low=0.0, high=1.0)) for part in parts)


def _weight(raw: str) -> str:
    return repr(_number(raw, low=0.0, high=1.0))


# ----------------------------
# File parsing
# ----------------------------

def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line.

    Raises:
        ConfigError: Malformed line, unknown key, bad value or a repeated key.
    """
    settings: dict[str, str] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        if key in settings:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        try:
            settings[key] = _normalise(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{number}: {exc}") from exc
    return settings


def load_config_file(path: Path) -> dict[str, str]:
    log.debug("Reading config %s", path)
    return parse_config_text(path.read_text(encoding="utf-8"), source=str(path))


# ----------------------------
# Effective configuration
# ----------------------------

@dataclass(frozen=True)
class RunConfig:
    """Effective settings of one command plus the files it touches.

    ``settings`` holds normalised values after applying defaults, the
    config file and command-line overrides, in that order of precedence.
    """

    settings: dict[str, str]
    paths: dict[str, Path] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "settings", {**DEFAULTS, **self.settings})

    @classmethod
    def build(
        cls,
        config_path: Path | None = None,
        overrides: Mapping[str, Any] | None = None,
        paths: Mapping[str, Path | None] | None = None,
    ) -> RunConfig:
        settings = dict(DEFAULTS)
        if config_path is not None:
            settings.update(load_config_file(config_path))
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            settings[key] = _normalise(key, str(value))
        return cls(settings, {k: v for k, v in (paths or {}).items() if v is not None})

    def get(self, key: str) -> str | None:
        return self.settings.get(key)

    def fingerprint(self) -> str:
        """SHA-256 of the sorted ``key=value`` listing of settings that shape outputs."""
        listing = "\n".join(f"{k}={v}" for k, v in sorted(self.settings.items()) if k not in _UNHASHED)
        return hashlib.sha256(listing.encode("utf-8")).hexdigest()

    @property
    def seed(self) -> int:
        return int(self.settings["seed"])

    @property
    def workers(self) -> int:
        return int(self.settings["workers"])

    @property
    def train_fraction(self) -> float:
        return float(self.settings["train_fraction"])

    @property
    def sweep_values(self) -> list[float]:
        return parse_sweep_range(self.settings["sweep_r"])

    def schema_config(self) -> SchemaConfig:
        s = self.settings
        try:
            return SchemaConfig(
                treatment_column=s["treatment_column"],
                treatment_labels=(s["treatment_m0"], s["treatment_m1"]),
                outcome_column=s["outcome_column"],
                outcome_labels=(s["outcome_s0"], s["outcome_s1"]),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def learn_config(self) -> LearnConfig:
        s = self.settings
        return LearnConfig(
            mode=LearnMode(s["mode"]),
            params=ScoreParams(structure_prior_kappa=float(s["kappa"])),
            estimator=Estimator(s["estimator"]),
            max_splits=int(s["max_splits"]) if "max_splits" in s else None,
        )

    def cost_benefit(self) -> CostBenefit:
        s = self.settings
        return CostBenefit(
            c=float(s["cost"]),
            r_s=float(s["revenue_solicited"]),
            r_u=float(s["revenue_unsolicited"]),
        )

    def with_default_population(self) -> RunConfig:
        """Fill in the built-in three-segment population when none is configured."""
        if any(_PREDICTOR_KEY.match(k) or _SEGMENT_KEY.match(k) for k in self.settings):
            return self
        merged = dict(self.settings)
        merged.update(parse_config_text(DEFAULT_POPULATION, source="<default population>"))
        return RunConfig(merged, dict(self.paths))

    def generator_config(self) -> GeneratorConfig:
        """Build the synthetic population described by ``predictor.*`` and ``segment.*`` keys.

        Predictors and segments keep the order in which they were first
        given.

        Raises:
            ConfigError: No predictors or segments, or an incomplete segment.
        """
        predictors: list[VariableSpec] = []
        segments: dict[str, dict[str, str]] = {}
        for key, value in self.settings.items():
            if match := _PREDICTOR_KEY.match(key):
                predictors.append(VariableSpec(match["name"], tuple(value.split(","))))
            elif match := _SEGMENT_KEY.match(key):
                segments.setdefault(match["id"], {})[match["field"]] = value
        if not predictors:
            raise ConfigError("no predictor.<name> keys configured")
        if not segments:
            raise ConfigError("no segment.<id>.* keys configured")

        specs = []
        for segment_id, fields in segments.items():
            missing = sorted({"mixture", "weight"} - fields.keys())
            if missing:
                raise ConfigError(f"segment {segment_id!r} lacks {', '.join(missing)}")
            when = fields.get("when", "*")
            predicate = () if when == "*" else tuple(
                tuple(term.split("=", 1)) for term in when.split(" & ")
            )
            shares = tuple(float(part) for part in fields["mixture"].split(","))
            specs.append(
                SegmentSpec(
                    segment_id=segment_id,
                    predicate=predicate,
                    mixture=BehaviorMixture(*shares),
                    weight=float(fields["weight"]),
                )
            )
        schema_config = self.schema_config()
        return GeneratorConfig(
            predictors=tuple(predictors),
            segments=tuple(specs),
            population_size=int(self.settings["population_size"]),
            seed=self.seed,
            mail_probability=float(self.settings["mail_probability"]),
            treatment=schema_config.treatment_spec(),
            outcome=schema_config.outcome_spec(),
        )
