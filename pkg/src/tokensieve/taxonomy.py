"""Two-axis token taxonomy.

Tokens are split into four quadrants by thresholding the normalized
entropy and normalized divergence axes:

    Q1  high entropy, high divergence   (uncertain and corrected)
    Q2  high entropy, low divergence    (uncertain but agreeing)
    Q3  low entropy, high divergence    (overconfident)
    Q4  low entropy, low divergence     (solved)

A value equal to a threshold counts as "high".  Thresholds are either
fixed by the caller or derived from the batch medians of the two axes;
there is no canonical cutoff, so both modes are exposed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, EmptyInputError, InvalidInputError
from .scoring import TokenMetrics


class Quadrant(enum.Enum):
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"
    Q4 = "Q4"


MODE_FIXED = "fixed"
MODE_BATCH_MEDIAN = "batch-median"


@dataclass(frozen=True)
class QuadrantThresholds:
    """Cutoffs on the normalized entropy and divergence axes.

    ``fixed`` thresholds carry explicit tau values; ``batch-median``
    thresholds are resolved against a batch before classification.
    """

    mode: str
    tau_h: float | None = None
    tau_d: float | None = None

    def __post_init__(self):
        if self.mode not in (MODE_FIXED, MODE_BATCH_MEDIAN):
            raise InvalidInputError(f"unknown threshold mode {self.mode!r}")
        if self.mode == MODE_FIXED:
            for name, v in (("tau_h", self.tau_h), ("tau_d", self.tau_d)):
                if v is None or not np.isfinite(v) or not 0.0 <= v <= 1.0:
                    raise InvalidInputError(f"{name} must lie in [0, 1], got {v!r}")

    @classmethod
    def fixed(cls, tau_h: float, tau_d: float) -> "QuadrantThresholds":
        return cls(mode=MODE_FIXED, tau_h=tau_h, tau_d=tau_d)

    @classmethod
    def batch_median(cls) -> "QuadrantThresholds":
        return cls(mode=MODE_BATCH_MEDIAN)

    @property
    def resolved(self) -> bool:
        return self.tau_h is not None and self.tau_d is not None

    def resolve(self, metrics: list[TokenMetrics]) -> "QuadrantThresholds":
        """Return fixed thresholds for this batch.

        In batch-median mode the taus are the medians of the batch's
        normalized entropy and divergence values (numpy median: the
        middle value for odd counts, the midpoint of the two middle
        values for even counts).  Fixed thresholds resolve to themselves.
        """
        if self.mode == MODE_FIXED:
            return self
        if not metrics:
            raise EmptyInputError("cannot resolve batch-median thresholds on an empty batch")
        tau_h = float(np.median([m.h_hat for m in metrics]))
        tau_d = float(np.median([m.delta_hat for m in metrics]))
        return QuadrantThresholds(mode=MODE_FIXED, tau_h=tau_h, tau_d=tau_d)


def classify(m: TokenMetrics, th: QuadrantThresholds) -> Quadrant:
    """Assign the quadrant label for one token under resolved thresholds."""
    if not th.resolved:
        raise ConfigurationError(
            "thresholds must be resolved against a batch before per-token "
            "classification; call resolve() or use quadrant_histogram"
        )
    high_h = m.h_hat >= th.tau_h
    high_d = m.delta_hat >= th.tau_d
    if high_h:
        return Quadrant.Q1 if high_d else Quadrant.Q2
    return Quadrant.Q3 if high_d else Quadrant.Q4


@dataclass(frozen=True)
class QuadrantHistogram:
    counts: dict[Quadrant, int]
    fractions: dict[Quadrant, float]
    thresholds: QuadrantThresholds

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def quadrant_histogram(
    metrics: list[TokenMetrics], th: QuadrantThresholds
) -> QuadrantHistogram:
    """Quadrant occupancy of a batch: raw counts plus fractions summing to 1."""
    if not metrics:
        raise EmptyInputError("quadrant_histogram needs a non-empty batch")
    resolved = th.resolve(metrics)
    counts = {q: 0 for q in Quadrant}
    for m in metrics:
        counts[classify(m, resolved)] += 1
    n = len(metrics)
    fractions = {q: counts[q] / n for q in Quadrant}
    return QuadrantHistogram(counts=counts, fractions=fractions, thresholds=resolved)


def attach_quadrants(
    metrics: list[TokenMetrics], th: QuadrantThresholds
) -> list[TokenMetrics]:
    """Return a copy of the batch with each token's quadrant label filled in."""
    if not metrics:
        raise EmptyInputError("attach_quadrants needs a non-empty batch")
    resolved = th.resolve(metrics)
    return [m.with_quadrant(classify(m, resolved).value) for m in metrics]
