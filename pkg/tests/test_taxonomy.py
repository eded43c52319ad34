import math

import numpy as np
import pytest

from tokensieve import Quadrant, QuadrantThresholds, classify, quadrant_histogram
from tokensieve.errors import ConfigurationError, EmptyInputError, InvalidInputError
from tokensieve.taxonomy import attach_quadrants

from conftest import (
    PROBE_BACKGROUND,
    PROBE_PAIRS,
    metrics_from_axis_values,
    probe_batch_metrics,
)


def _metric(h_hat, delta_hat):
    [m] = metrics_from_axis_values([(0.0, 0.0)])
    return type(m)(
        position=0,
        h=h_hat,
        delta_rev=delta_hat,
        delta_fwd=delta_hat,
        h_hat=h_hat,
        delta_hat=delta_hat,
        conf=1.0 - h_hat,
        softor=h_hat + delta_hat - h_hat * delta_hat,
        q3_score=delta_hat * (1.0 - h_hat),
    )


class TestClassify:
    def test_definitional_corners(self):
        th = QuadrantThresholds.fixed(0.5, 0.5)
        assert classify(_metric(0.9, 0.9), th) is Quadrant.Q1
        assert classify(_metric(0.9, 0.1), th) is Quadrant.Q2
        assert classify(_metric(0.02, 0.8), th) is Quadrant.Q3
        assert classify(_metric(0.1, 0.1), th) is Quadrant.Q4

    def test_boundary_counts_as_high(self):
        th = QuadrantThresholds.fixed(0.5, 0.5)
        assert classify(_metric(0.5, 0.5), th) is Quadrant.Q1

    def test_unresolved_batch_median_rejected(self):
        with pytest.raises(ConfigurationError):
            classify(_metric(0.5, 0.5), QuadrantThresholds.batch_median())

    def test_threshold_validation(self):
        with pytest.raises(InvalidInputError):
            QuadrantThresholds.fixed(1.5, 0.5)
        with pytest.raises(InvalidInputError):
            QuadrantThresholds(mode="nonsense")

    def test_monotone_consistency_raising_tau_d(self, rng):
        # Raising the divergence cutoff can only demote divergence labels:
        # Q1 -> Q2 and Q3 -> Q4, never Q2 -> Q1 or Q4 -> Q3.
        for _ in range(500):
            m = _metric(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
            t1, t2 = sorted(rng.uniform(0, 1, 2))
            before = classify(m, QuadrantThresholds.fixed(0.5, float(t1)))
            after = classify(m, QuadrantThresholds.fixed(0.5, float(t2)))
            assert (before, after) not in [
                (Quadrant.Q2, Quadrant.Q1),
                (Quadrant.Q4, Quadrant.Q3),
            ]


class TestHistogram:
    def test_empty(self):
        with pytest.raises(EmptyInputError):
            quadrant_histogram([], QuadrantThresholds.fixed(0.5, 0.5))

    def test_all_zero_tokens_are_q4(self):
        metrics = metrics_from_axis_values([(0.0, 0.0)] * 5)
        hist = quadrant_histogram(metrics, QuadrantThresholds.fixed(0.5, 0.5))
        assert hist.fractions[Quadrant.Q4] == 1.0

    def test_one_token_per_quadrant(self):
        metrics = [
            _metric(0.9, 0.9),
            _metric(0.9, 0.1),
            _metric(0.1, 0.9),
            _metric(0.1, 0.1),
        ]
        hist = quadrant_histogram(metrics, QuadrantThresholds.fixed(0.5, 0.5))
        assert all(f == 0.25 for f in hist.fractions.values())

    def test_fractions_sum_to_one(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 40))
            metrics = [
                _metric(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)))
                for _ in range(n)
            ]
            hist = quadrant_histogram(metrics, QuadrantThresholds.batch_median())
            assert abs(sum(hist.fractions.values()) - 1.0) <= 1e-12
            assert sum(hist.counts.values()) == n

    def test_batch_median_half_sizes(self, rng):
        # Counting oracle: with distinct values, the entropy halves have
        # sizes ceil(m/2) and floor(m/2); the boundary element goes high
        # for odd m.
        for m in (3, 4, 5, 8, 9, 12, 17):
            h_values = rng.permutation(np.linspace(0.05, 0.95, m))
            metrics = [_metric(float(h), 0.0) for h in h_values]
            hist = quadrant_histogram(metrics, QuadrantThresholds.batch_median())
            high = hist.counts[Quadrant.Q1] + hist.counts[Quadrant.Q2]
            low = hist.counts[Quadrant.Q3] + hist.counts[Quadrant.Q4]
            assert {high, low} == {math.ceil(m / 2), math.floor(m / 2)}
            if m % 2 == 1:
                assert high == math.ceil(m / 2)


class TestProbeBatch:
    """The five reference probe tokens, classified inside their
    background batch under batch-median thresholds."""

    def test_probe_labels(self):
        metrics = probe_batch_metrics()
        labeled = attach_quadrants(metrics, QuadrantThresholds.batch_median())
        expected = [q for _, _, q in PROBE_PAIRS]
        assert [m.quadrant for m in labeled[:5]] == expected

    def test_background_labels(self):
        metrics = probe_batch_metrics()
        labeled = attach_quadrants(metrics, QuadrantThresholds.batch_median())
        expected = [q for _, _, q in PROBE_BACKGROUND]
        assert [m.quadrant for m in labeled[5:]] == expected

    def test_lowest_entropy_probe_is_overconfident(self):
        # The sharpest probe (entropy 0.02 nats, divergence 5.27 nats)
        # lands in the overconfident quadrant.
        metrics = probe_batch_metrics()
        resolved = QuadrantThresholds.batch_median().resolve(metrics)
        assert classify(metrics[0], resolved) is Quadrant.Q3
