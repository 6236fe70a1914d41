# SPDX-License-Identifier: GPL-3.0-or-later
"""Outcome counts held at tree leaves and the predictive rules read from them."""

from __future__ import annotations

import enum
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np

from .data import M0, M1


class Estimator(enum.Enum):
    """How a leaf turns counts into p(S = s1)."""

    POSTERIOR_MEAN = "posterior"
    MLE = "mle"


def _check_count(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class LeafCounts:
    """Outcome counts ``(n_s1, n_s0)`` for one group of records."""

    s1: int = 0
    s0: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "s1", _check_count("s1", self.s1))
        object.__setattr__(self, "s0", _check_count("s0", self.s0))

    @property
    def n(self) -> int:
        return self.s1 + self.s0

    def __add__(self, other: LeafCounts) -> LeafCounts:
        return LeafCounts(self.s1 + other.s1, self.s0 + other.s0)

    def p_s1(self, estimator: Estimator = Estimator.POSTERIOR_MEAN) -> float:
        """Predictive probability of s1.

        The posterior mean under the uniform Beta(1, 1) prior is
        ``(n_s1 + 1) / (n + 2)``. The MLE is ``n_s1 / n`` and falls back
        to 0.5 when there are no records.
        """
        if estimator is Estimator.MLE:
            return self.s1 / self.n if self.n else 0.5
        return (self.s1 + 1) / (self.n + 2)


@dataclass(frozen=True)
class LeafStats:
    """Outcome counts cross-tabulated by the mailing indicator."""

    s1_m1: int = 0
    s0_m1: int = 0
    s1_m0: int = 0
    s0_m0: int = 0

    def __post_init__(self) -> None:
        for name in ("s1_m1", "s0_m1", "s1_m0", "s0_m0"):
            object.__setattr__(self, name, _check_count(name, getattr(self, name)))

    @classmethod
    def from_vector(cls, cells: Any) -> LeafStats:
        """Build from a length-4 vector indexed by ``2 * m + s``."""
        s0_m0, s1_m0, s0_m1, s1_m1 = (int(v) for v in cells)
        return cls(s1_m1=s1_m1, s0_m1=s0_m1, s1_m0=s1_m0, s0_m0=s0_m0)

    @classmethod
    def from_arrays(cls, treatment: np.ndarray, outcome: np.ndarray) -> LeafStats:
        cells = np.bincount(2 * treatment.astype(np.int64) + outcome, minlength=4)
        return cls.from_vector(cells)

    def as_vector(self) -> np.ndarray:
        return np.array([self.s0_m0, self.s1_m0, self.s0_m1, self.s1_m1], dtype=np.int64)

    @property
    def n(self) -> int:
        return self.s1_m1 + self.s0_m1 + self.s1_m0 + self.s0_m0

    def cell(self, m: int) -> LeafCounts:
        """Counts of the records with ``M = m``."""
        if m == M1:
            return LeafCounts(self.s1_m1, self.s0_m1)
        if m == M0:
            return LeafCounts(self.s1_m0, self.s0_m0)
        raise ValueError(f"m must be M0 or M1, got {m!r}")

    def pooled(self) -> LeafCounts:
        return LeafCounts(self.s1_m1 + self.s1_m0, self.s0_m1 + self.s0_m0)

    def only(self, m: int) -> LeafStats:
        """The same records restricted to ``M = m``."""
        if m == M1:
            return LeafStats(s1_m1=self.s1_m1, s0_m1=self.s0_m1)
        if m == M0:
            return LeafStats(s1_m0=self.s1_m0, s0_m0=self.s0_m0)
        raise ValueError(f"m must be M0 or M1, got {m!r}")

    def __add__(self, other: LeafStats) -> LeafStats:
        return LeafStats(
            self.s1_m1 + other.s1_m1,
            self.s0_m1 + other.s0_m1,
            self.s1_m0 + other.s1_m0,
            self.s0_m0 + other.s0_m0,
        )

    def distribution(
        self,
        m: int,
        conditional: bool,
        estimator: Estimator = Estimator.POSTERIOR_MEAN,
    ) -> tuple[float, float]:
        """Predictive ``(p(s0), p(s1))`` for records with ``M = m``.

        With *conditional* the ``m`` cell is read on its own; otherwise the
        leaf does not distinguish ``M`` and the pooled counts are used.
        """
        counts = self.cell(m) if conditional else self.pooled()
        p1 = counts.p_s1(estimator)
        return 1.0 - p1, p1

    def to_dict(self) -> dict[str, int]:
        return {"s1m1": self.s1_m1, "s0m1": self.s0_m1, "s1m0": self.s1_m0, "s0m0": self.s0_m0}

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> LeafStats:
        return cls(s1_m1=raw["s1m1"], s0_m1=raw["s0m1"], s1_m0=raw["s1m0"], s0_m0=raw["s0m0"])
