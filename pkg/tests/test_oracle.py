import numpy as np
import pytest

from tokensieve import (
    OracleInstance,
    blind_spot_demo,
    descent_bound,
    oracle_descent,
    oracle_weight,
    quadrant_ordering_demo,
)
from tokensieve.errors import ConfigurationError, DimensionError, InvalidInputError
from tokensieve.oracle import (
    DEFAULT_ARCHETYPES,
    ENTROPY_ONLY_RULES,
    stationarity_residual,
)

from conftest import metrics_from_axis_values


def random_instance(rng, n=None):
    n = n or int(rng.integers(2, 10))
    return OracleInstance(
        align=rng.uniform(-2.0, 2.0, n),
        sq_norm=rng.uniform(0.5, 3.0, n),
        step_size=float(rng.uniform(0.8, 1.5)),
        smoothness=float(rng.uniform(0.8, 1.5)),
    )


def grid_search_minimum(inst, index, grid):
    """Independent per-coordinate minimiser of the one-token bound term."""
    eta, beta = inst.step_size, inst.smoothness
    a, m = inst.align[index], inst.sq_norm[index]
    values = -eta * grid * a + 0.5 * eta**2 * beta * grid**2 * m
    return float(grid[np.argmin(values)])


class TestOracleInstance:
    def test_rejects_nonpositive_sq_norm(self):
        with pytest.raises(InvalidInputError):
            OracleInstance(np.array([1.0]), np.array([0.0]), 1.0, 1.0)

    def test_rejects_length_mismatch(self):
        with pytest.raises(DimensionError):
            OracleInstance(np.array([1.0, 2.0]), np.array([1.0]), 1.0, 1.0)

    def test_rejects_nonpositive_step(self):
        with pytest.raises(InvalidInputError):
            OracleInstance(np.array([1.0]), np.array([1.0]), 0.0, 1.0)


class TestDescentBound:
    def test_zero_weights_zero_bound(self, rng):
        inst = random_instance(rng)
        assert descent_bound(inst, np.zeros(inst.num_tokens)) == 0.0

    def test_single_token_plugin(self):
        inst = OracleInstance(np.array([1.0]), np.array([1.0]), 1.0, 1.0)
        assert descent_bound(inst, np.array([1.0])) == pytest.approx(-0.5, abs=1e-15)

    def test_matches_termwise_summation(self, rng):
        for _ in range(100):
            inst = random_instance(rng)
            w = rng.normal(0, 2, inst.num_tokens)
            expected = sum(
                -inst.step_size * w[t] * inst.align[t]
                + 0.5 * inst.step_size**2 * inst.smoothness * w[t] ** 2 * inst.sq_norm[t]
                for t in range(inst.num_tokens)
            )
            assert descent_bound(inst, w) == pytest.approx(expected, abs=1e-10)

    def test_separability(self, rng):
        for _ in range(50):
            inst = random_instance(rng)
            w = rng.normal(0, 2, inst.num_tokens)
            total = descent_bound(inst, w)
            per_token = sum(
                descent_bound(
                    OracleInstance(
                        inst.align[t : t + 1],
                        inst.sq_norm[t : t + 1],
                        inst.step_size,
                        inst.smoothness,
                    ),
                    w[t : t + 1],
                )
                for t in range(inst.num_tokens)
            )
            assert total == pytest.approx(per_token, abs=1e-12)

    def test_length_mismatch(self, rng):
        inst = random_instance(rng, n=4)
        with pytest.raises(DimensionError):
            descent_bound(inst, np.zeros(5))


class TestOracleWeight:
    def test_unit_plugin(self):
        inst = OracleInstance(np.array([1.0]), np.array([1.0]), 1.0, 1.0)
        np.testing.assert_allclose(oracle_weight(inst), [1.0])

    def test_zero_alignment_gives_zero_weight(self):
        inst = OracleInstance(np.array([0.0, 1.0]), np.array([1.0, 1.0]), 1.0, 1.0)
        assert oracle_weight(inst)[0] == 0.0

    def test_matches_grid_search(self, rng):
        grid = np.linspace(-10.0, 10.0, 10_000)
        step = grid[1] - grid[0]
        for _ in range(100):
            inst = random_instance(rng)
            w_star = oracle_weight(inst)
            assert np.all(np.abs(w_star) < 10.0)
            for t in range(inst.num_tokens):
                assert abs(w_star[t] - grid_search_minimum(inst, t, grid)) <= step + 1e-12

    def test_stationarity(self, rng):
        for _ in range(200):
            inst = random_instance(rng)
            residual = stationarity_residual(inst, oracle_weight(inst))
            assert np.max(np.abs(residual)) < 1e-10


class TestOracleDescent:
    def test_plugin(self):
        inst = OracleInstance(np.array([1.0]), np.array([1.0]), 1.0, 1.0)
        np.testing.assert_allclose(oracle_descent(inst), [-0.5])

    def test_zero_alignment(self):
        inst = OracleInstance(np.array([0.0, 2.0]), np.array([1.0, 1.0]), 1.0, 1.0)
        assert oracle_descent(inst)[0] == 0.0

    def test_never_positive(self, rng):
        for _ in range(100):
            inst = random_instance(rng)
            assert np.all(oracle_descent(inst) <= 0.0)

    def test_bound_at_optimum_equals_descent_sum(self, rng):
        for _ in range(100):
            inst = random_instance(rng)
            at_optimum = descent_bound(inst, oracle_weight(inst))
            assert at_optimum == pytest.approx(float(oracle_descent(inst).sum()), abs=1e-10)


class TestQuadrantOrdering:
    def test_default_archetypes(self):
        report = quadrant_ordering_demo()
        assert report.order == ("Q1", "Q2", "Q3", "Q4")
        assert report.q4_to_q3_ratio <= 0.1

    def test_exact_zero_alignment_q4(self):
        archetypes = dict(DEFAULT_ARCHETYPES)
        archetypes["Q4"] = (0.0, 0.4)
        report = quadrant_ordering_demo(archetypes)
        assert report.weights["Q4"] == 0.0

    def test_scaling_sq_norm_preserves_order(self):
        for c in (0.25, 4.0):
            scaled = {q: (a, m * c) for q, (a, m) in DEFAULT_ARCHETYPES.items()}
            base = quadrant_ordering_demo()
            report = quadrant_ordering_demo(scaled)
            assert report.order == base.order
            for q in report.weights:
                assert report.weights[q] == pytest.approx(base.weights[q] / c, rel=1e-12)

    def test_bad_structure_rejected(self):
        archetypes = dict(DEFAULT_ARCHETYPES)
        archetypes["Q2"] = (3.0, 1.0)  # out of order
        with pytest.raises(ConfigurationError):
            quadrant_ordering_demo(archetypes)

    def test_missing_quadrant_rejected(self):
        with pytest.raises(ConfigurationError):
            quadrant_ordering_demo({"Q1": (1.0, 1.0)})


def planted_blind_spot_metrics(rng=None, n=12, d_hot=0.9, d_cold=0.01):
    """Batch with one confidently-wrong and one solved token planted."""
    pairs = [(0.01, d_hot), (0.01, d_cold)]
    if rng is not None:
        pairs += [
            (float(rng.uniform(0.1, 1.0)), float(rng.uniform(0.1, 1.0)))
            for _ in range(n - 2)
        ]
    else:
        pairs += [(0.5, 0.5)] * (n - 2)
    # Axis values here are already normalized scores in [0, 1]; keep them
    # fixed under min-max by pinning the endpoints.
    pairs += [(0.0, 0.0), (1.0, 1.0)]
    return metrics_from_axis_values(pairs)


class TestBlindSpot:
    def test_analytic_pair(self):
        metrics = planted_blind_spot_metrics()
        report = blind_spot_demo(metrics)
        # softor(0.01, 0.9) = 0.9009..., softor(0.01, 0.01) = 0.0199
        assert report.softor_overconfident_min == pytest.approx(0.9009, abs=1e-3)
        assert report.softor_solved_max <= 0.0975
        for name, (oc, sv) in report.entropy_scores.items():
            assert oc < 0.05 and sv < 0.05

    def test_step_rules_score_zero(self):
        metrics = planted_blind_spot_metrics()
        report = blind_spot_demo(metrics)
        for name, (oc, sv) in report.entropy_scores.items():
            if name.startswith("step-"):
                assert oc == 0.0 and sv == 0.0

    def test_separation_bound_over_seeds(self, rng):
        # Separation always at least the planted divergence minus the
        # solved ceiling 0.0975.
        for _ in range(100):
            d_hot = float(rng.uniform(0.55, 1.0))
            metrics = planted_blind_spot_metrics(rng, d_hot=d_hot)
            report = blind_spot_demo(metrics)
            assert report.separation >= d_hot - 0.0975 - 1e-12

    def test_rules_family_is_valid(self):
        # Non-decreasing with f(0) = 0 for every shipped rule.
        grid = np.linspace(0, 1, 101)
        for name, rule in ENTROPY_ONLY_RULES:
            assert rule(0.0) == 0.0
            values = [rule(float(x)) for x in grid]
            assert all(b >= a for a, b in zip(values, values[1:]))

    def test_missing_planted_tokens_rejected(self):
        metrics = metrics_from_axis_values([(0.5, 0.5), (0.0, 0.0), (1.0, 1.0)])
        with pytest.raises(ConfigurationError):
            blind_spot_demo(metrics)
