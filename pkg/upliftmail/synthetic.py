# SPDX-License-Identifier: GPL-3.0-or-later
"""
Synthetic randomized mailing experiments with known ground truth.

A population is a weighted set of segments. Each segment fixes some
predictor values and carries a mixture of the four latent response
behaviours; the observable response ``S`` follows from the behaviour and
the random mailing ``M``. Because the mixtures are known, the mailing
probabilities and the revenue a policy should earn can be computed exactly
and used as test oracles.
"""

from __future__ import annotations

import csv
import enum
import itertools
import logging
import math
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TextIO

import numpy as np

from .data import M0, M1, S0, S1, Dataset, Schema, VariableSpec
from .errors import GeneratorConfigError, NoMatchedRecordsError
from .policy import CostBenefit, elp

log = logging.getLogger(__name__)

CHUNK_SIZE = 8192
_MIXTURE_TOLERANCE = 1e-12
_WEIGHT_TOLERANCE = 1e-9


class Behavior(enum.Enum):
    ALWAYS_BUY = "always-buy"
    PERSUADABLE = "persuadable"
    ANTI_PERSUADABLE = "anti-persuadable"
    NEVER_BUY = "never-buy"


# Mixture component order.
BEHAVIORS: tuple[Behavior, ...] = tuple(Behavior)


def behavior_response(behavior: Behavior, mailed: int) -> int:
    """Return the outcome (S0 or S1) a behaviour produces under *mailed*."""
    if mailed not in (M0, M1):
        raise ValueError(f"mailed must be M0 or M1, got {mailed!r}")
    match behavior:
        case Behavior.ALWAYS_BUY:
            return S1
        case Behavior.PERSUADABLE:
            return S1 if mailed == M1 else S0
        case Behavior.ANTI_PERSUADABLE:
            return S1 if mailed == M0 else S0
        case Behavior.NEVER_BUY:
            return S0
    raise ValueError(f"unknown behavior {behavior!r}")


_RESPONSE_TABLE = np.array(
    [[behavior_response(b, m) for m in (M0, M1)] for b in BEHAVIORS],
    dtype=np.int8,
)


@dataclass(frozen=True)
class BehaviorMixture:
    """Population shares of the four response behaviours."""

    pi_alw: float
    pi_pers: float
    pi_anti: float
    pi_nev: float

    def __post_init__(self) -> None:
        shares = self.as_tuple()
        for name, value in zip(("pi_alw", "pi_pers", "pi_anti", "pi_nev"), shares):
            if not math.isfinite(value) or not 0.0 <= value <= 1.0:
                raise GeneratorConfigError(f"{name} must lie in [0, 1], got {value!r}")
        if abs(math.fsum(shares) - 1.0) > _MIXTURE_TOLERANCE:
            raise GeneratorConfigError(f"behavior shares must sum to 1, got {math.fsum(shares)!r}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.pi_alw, self.pi_pers, self.pi_anti, self.pi_nev)


def true_probabilities(mixture: BehaviorMixture) -> tuple[float, float]:
    """Return ``(p(s1 | m1), p(s1 | m0))`` implied by *mixture*."""
    return mixture.pi_alw + mixture.pi_pers, mixture.pi_alw + mixture.pi_anti


@dataclass(frozen=True)
class SegmentSpec:
    """A slice of the predictor space with its own behaviour mixture.

    Args:
        segment_id: Label written to the ground-truth sidecar.
        predicate: Conjunction of ``(variable name, value label)`` tests;
            empty means the whole predictor space.
        mixture: Behaviour shares inside the segment.
        weight: Share of the population drawn from this segment.
    """

    segment_id: str
    predicate: tuple[tuple[str, str], ...]
    mixture: BehaviorMixture
    weight: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "predicate", tuple(tuple(term) for term in self.predicate))
        if not self.segment_id:
            raise GeneratorConfigError("segment id must be non-empty")
        if not math.isfinite(self.weight) or not 0.0 <= self.weight <= 1.0:
            raise GeneratorConfigError(f"segment {self.segment_id!r}: weight must lie in [0, 1]")
        names = [name for name, _ in self.predicate]
        if len(set(names)) != len(names):
            raise GeneratorConfigError(f"segment {self.segment_id!r} tests a variable twice")


@dataclass(frozen=True)
class GeneratorConfig:
    """Everything needed to draw a synthetic experiment deterministically."""

    predictors: tuple[VariableSpec, ...]
    segments: tuple[SegmentSpec, ...]
    population_size: int
    seed: int
    mail_probability: float = 0.9
    treatment: VariableSpec = field(default=VariableSpec("M", ("0", "1")))
    outcome: VariableSpec = field(default=VariableSpec("S", ("0", "1")))

    def __post_init__(self) -> None:
        object.__setattr__(self, "predictors", tuple(self.predictors))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not 0.0 <= self.mail_probability <= 1.0:
            raise GeneratorConfigError("mail_probability must lie in [0, 1]")
        if isinstance(self.population_size, bool) or not isinstance(self.population_size, int) \
                or self.population_size < 1:
            raise GeneratorConfigError("population_size must be a positive integer")
        if not 0 <= self.seed < 2**64:
            raise GeneratorConfigError("seed must be a non-negative 64-bit integer")
        if not self.segments:
            raise GeneratorConfigError("at least one segment is required")
        ids = [s.segment_id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise GeneratorConfigError("segment ids must be unique")
        total = math.fsum(s.weight for s in self.segments)
        if abs(total - 1.0) > _WEIGHT_TOLERANCE:
            raise GeneratorConfigError(f"segment weights must sum to 1, got {total!r}")
        try:
            schema = self.schema
        except ValueError as exc:
            raise GeneratorConfigError(str(exc)) from exc
        fixed = self.fixed_values()
        for segment in self.segments:
            for name, label in segment.predicate:
                try:
                    spec = schema.predictors[schema.variable_index(name)]
                    spec.index_of(label)
                except (ValueError, IndexError):
                    raise GeneratorConfigError(
                        f"segment {segment.segment_id!r}: unknown predictor test {name}={label}"
                    ) from None
        _check_partition(schema, self.segments, fixed)

    @property
    def schema(self) -> Schema:
        return Schema(self.predictors, self.treatment, self.outcome)

    def fixed_values(self) -> np.ndarray:
        """``(segments, predictors)`` table of fixed value indices, -1 where free."""
        table = np.full((len(self.segments), len(self.predictors)), -1, dtype=np.int64)
        names = [v.name for v in self.predictors]
        for k, segment in enumerate(self.segments):
            for name, label in segment.predicate:
                if name in names:
                    j = names.index(name)
                    if label in self.predictors[j].values:
                        table[k, j] = self.predictors[j].values.index(label)
        return table


def _check_partition(schema: Schema, segments: Sequence[SegmentSpec], fixed: np.ndarray) -> None:
    """Require the segment predicates to tile the predictor space.

    Two conjunctions are disjoint iff some variable is fixed to different
    values in both; given pairwise disjointness, coverage holds iff the
    segment sizes add up to the size of the space.
    """
    for a, b in itertools.combinations(range(len(segments)), 2):
        both = (fixed[a] >= 0) & (fixed[b] >= 0)
        if not (fixed[a][both] != fixed[b][both]).any():
            raise GeneratorConfigError(
                f"segments {segments[a].segment_id!r} and {segments[b].segment_id!r} overlap"
            )
    arities = [v.arity for v in schema.predictors]
    covered = sum(
        math.prod(arity for arity, value in zip(arities, row) if value < 0)
        for row in fixed.tolist()
    )
    if covered != schema.space_size():
        raise GeneratorConfigError("segment predicates do not cover every predictor assignment")


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruth:
    """Hidden per-record labels, kept out of the learner's dataset."""

    segment_ids: tuple[str, ...]
    segment: np.ndarray
    behavior: np.ndarray

    def behaviors(self) -> list[Behavior]:
        return [BEHAVIORS[b] for b in self.behavior.tolist()]


def _generate_chunk(
    config: GeneratorConfig,
    fixed: np.ndarray,
    chunk_index: int,
    size: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    # Stream depends only on (seed, chunk index), not on worker scheduling.
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(chunk_index,)))
    weights = np.array([s.weight for s in config.segments], dtype=np.float64)
    segment = rng.choice(len(config.segments), size=size, p=weights / weights.sum())

    x = np.empty((size, len(config.predictors)), dtype=np.int64)
    for j, spec in enumerate(config.predictors):
        draw = rng.integers(spec.arity, size=size)
        pinned = fixed[segment, j]
        x[:, j] = np.where(pinned >= 0, pinned, draw)

    cumulative = np.cumsum([s.mixture.as_tuple() for s in config.segments], axis=1)
    u = rng.random(size)
    behavior = (u[:, None] >= cumulative[segment, :3]).sum(axis=1).astype(np.int8)

    m = (rng.random(size) < config.mail_probability).astype(np.int8)
    s = _RESPONSE_TABLE[behavior, m]
    return x, m, s, segment.astype(np.int64), behavior


def generate(config: GeneratorConfig, workers: int = 1) -> tuple[Dataset, GroundTruth]:
    """Draw a synthetic experiment.

    Records are produced in fixed-size chunks, each with its own random
    stream derived from ``(seed, chunk index)``, so the output is identical
    for any *workers* count.

    Returns:
        The observable dataset and its ground-truth sidecar.
    """
    if workers < 1:
        raise GeneratorConfigError("workers must be at least 1")
    fixed = config.fixed_values()
    n = config.population_size
    sizes = [min(CHUNK_SIZE, n - start) for start in range(0, n, CHUNK_SIZE)]

    def run(job: tuple[int, int]):
        return _generate_chunk(config, fixed, job[0], job[1])

    jobs = list(enumerate(sizes))
    if workers == 1 or len(jobs) == 1:
        parts = [run(job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, jobs))

    x, m, s, segment, behavior = (np.concatenate(column) for column in zip(*parts))
    log.info("Generated %d records in %d chunks (%d mailed)", n, len(jobs), int(m.sum()))
    segment.setflags(write=False)
    behavior.setflags(write=False)
    truth = GroundTruth(tuple(seg.segment_id for seg in config.segments), segment, behavior)
    return Dataset(config.schema, x, m, s), truth


def write_truth_csv(truth: GroundTruth, sink: TextIO, fingerprint: str | None = None) -> None:
    """Write the ``row_index,segment_id,behavior`` sidecar."""
    if fingerprint:
        sink.write(f"# config_fingerprint={fingerprint}\n")
    writer = csv.writer(sink, lineterminator="\n")
    writer.writerow(["row_index", "segment_id", "behavior"])
    for index, (k, b) in enumerate(zip(truth.segment.tolist(), truth.behavior.tolist())):
        writer.writerow([index, truth.segment_ids[k], BEHAVIORS[b].value])


# ---------------------------------------------------------------------------
# Analytic oracles
# ---------------------------------------------------------------------------

def segment_of(config: GeneratorConfig, x: Sequence[int]) -> int:
    """Index of the segment whose predicate *x* satisfies."""
    fixed = config.fixed_values()
    row = np.asarray(x, dtype=np.int64)
    for k in range(len(config.segments)):
        pinned = fixed[k] >= 0
        if (fixed[k][pinned] == row[pinned]).all():
            return k
    raise GeneratorConfigError(f"assignment {tuple(x)} matches no segment")


def optimal_segment_decisions(config: GeneratorConfig, cb: CostBenefit) -> list[tuple[str, float, bool]]:
    """Return ``(segment_id, ELP, mail?)`` from the true mixtures."""
    rows = []
    for segment in config.segments:
        p1, p0 = true_probabilities(segment.mixture)
        value = elp(p1, p0, cb)
        rows.append((segment.segment_id, value, value > 0))
    return rows


def expected_matched_revenue(
    config: GeneratorConfig,
    mails: Callable[[tuple[int, ...]], bool],
    cb: CostBenefit,
) -> float:
    """Expected per-person revenue of the matched-record estimator.

    Enumerates every predictor assignment (so only for small schemas): a
    person in segment k at assignment x contributes with probability
    ``q`` when the policy mails and ``1 - q`` otherwise, where ``q`` is the
    mailing probability of the experiment.

    Args:
        config: Population description.
        mails: Policy decision for a tuple of predictor value indices.
        cb: Cost/benefit scenario.

    Returns:
        Ratio of expected matched revenue to expected matched count.

    Raises:
        NoMatchedRecordsError: If no record can ever match the policy.
    """
    q = config.mail_probability
    fixed = config.fixed_values()
    numerator: list[float] = []
    denominator: list[float] = []
    for k, segment in enumerate(config.segments):
        if segment.weight == 0.0:
            continue
        p1, p0 = true_probabilities(segment.mixture)
        ranges = [
            (int(fixed[k, j]),) if fixed[k, j] >= 0 else range(spec.arity)
            for j, spec in enumerate(config.predictors)
        ]
        cells = math.prod(len(r) for r in ranges)
        for x in itertools.product(*ranges):
            share = segment.weight / cells
            if mails(tuple(x)):
                numerator.append(share * q * (cb.r_s * p1 - cb.c))
                denominator.append(share * q)
            else:
                numerator.append(share * (1.0 - q) * cb.r_u * p0)
                denominator.append(share * (1.0 - q))
    total = math.fsum(denominator)
    if total == 0.0:
        raise NoMatchedRecordsError("no matched records: the policy never agrees with the mailing")
    return math.fsum(numerator) / total


def expected_mail_to_all_revenue(config: GeneratorConfig, cb: CostBenefit) -> float:
    """Expected per-person revenue of mailing everyone."""
    p1 = math.fsum(s.weight * true_probabilities(s.mixture)[0] for s in config.segments)
    return cb.r_s * p1 - cb.c
