"""Executable form of the descent-bound theory.

A one-step surrogate for the expected loss change of a weighted gradient
step decomposes per token as ``-eta*w*align + (eta^2*smoothness/2) * w^2
* sq_norm``, where ``align`` is the inner product between the full
gradient and the token's mean gradient and ``sq_norm`` is the token's
expected squared gradient norm.  The surrogate drops cross-token
covariance terms, so it is separable and each coordinate minimises
independently; the closed-form minimiser and its attained value are
exposed here together with demos that check the qualitative story
(quadrant ordering of the optimal weights, and the structural blind spot
of entropy-only scores).

These are oracle quantities: nothing here estimates ``align`` or
``sq_norm`` from real model gradients.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, InvalidInputError
from .scoring import TokenMetrics

_STATIONARITY_TOL = 1e-10


@dataclass(frozen=True)
class OracleInstance:
    """Per-token moments of the gradient, plus step size and smoothness.

    ``align[t]`` may be negative (a token whose mean gradient points
    against descent); ``sq_norm[t]`` must be strictly positive.
    ``mean_norm`` optionally documents the norm of the mean per-token
    gradient and plays no role in the computations.
    """

    align: np.ndarray
    sq_norm: np.ndarray
    step_size: float
    smoothness: float
    mean_norm: np.ndarray | None = None

    def __post_init__(self):
        align = np.asarray(self.align, dtype=np.float64).copy()
        sq_norm = np.asarray(self.sq_norm, dtype=np.float64).copy()
        if align.ndim != 1 or sq_norm.ndim != 1 or align.size == 0:
            raise InvalidInputError("align and sq_norm must be non-empty vectors")
        if align.size != sq_norm.size:
            raise DimensionError(f"align has {align.size} entries, sq_norm {sq_norm.size}")
        if not np.all(np.isfinite(align)):
            raise InvalidInputError("align entries must be finite")
        if not np.all(np.isfinite(sq_norm)) or np.any(sq_norm <= 0.0):
            raise InvalidInputError("sq_norm entries must be finite and > 0")
        for name, v in (("step_size", self.step_size), ("smoothness", self.smoothness)):
            if not np.isfinite(v) or v <= 0.0:
                raise InvalidInputError(f"{name} must be a positive real, got {v!r}")
        align.flags.writeable = False
        sq_norm.flags.writeable = False
        object.__setattr__(self, "align", align)
        object.__setattr__(self, "sq_norm", sq_norm)
        if self.mean_norm is not None:
            mn = np.asarray(self.mean_norm, dtype=np.float64).copy()
            if mn.shape != align.shape:
                raise DimensionError("mean_norm must match align in length")
            mn.flags.writeable = False
            object.__setattr__(self, "mean_norm", mn)

    @property
    def num_tokens(self) -> int:
        return int(self.align.size)


def descent_bound(inst: OracleInstance, weights) -> float:
    """Value of the separable one-step surrogate for a weight vector."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != inst.align.shape:
        raise DimensionError(f"weights shape {w.shape} != instance shape {inst.align.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidInputError("weights must be finite")
    eta, beta = inst.step_size, inst.smoothness
    terms = -eta * w * inst.align + 0.5 * eta**2 * beta * w**2 * inst.sq_norm
    return float(terms.sum())


def oracle_weight(inst: OracleInstance) -> np.ndarray:
    """Per-token weights minimising the surrogate: align / (eta*beta*sq_norm).

    Negative where a token's mean gradient opposes descent.
    """
    return inst.align / (inst.step_size * inst.smoothness * inst.sq_norm)


def oracle_descent(inst: OracleInstance) -> np.ndarray:
    """Per-token surrogate value at the optimal weights:
    -align^2 / (2*smoothness*sq_norm).  Never positive."""
    return -(inst.align**2) / (2.0 * inst.smoothness * inst.sq_norm)


def stationarity_residual(inst: OracleInstance, weights) -> np.ndarray:
    """Per-coordinate gradient of the surrogate at the given weights;
    zero (to tolerance) exactly at the optimum."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != inst.align.shape:
        raise DimensionError(f"weights shape {w.shape} != instance shape {inst.align.shape}")
    eta, beta = inst.step_size, inst.smoothness
    return -eta * inst.align + eta**2 * beta * w * inst.sq_norm


# Synthetic single-token archetypes for the ordering demo.  Only the
# qualitative structure is given (strong correction for Q1, mild for Q2,
# small-but-positive for Q3, near-zero for Q4); these numbers are our
# own configuration, not measured data.
DEFAULT_ARCHETYPES: dict[str, tuple[float, float]] = {
    "Q1": (2.0, 1.0),  # large alignment, moderate gradient energy
    "Q2": (0.8, 1.0),  # moderate alignment
    "Q3": (0.15, 0.5),  # small positive alignment, small energy
    "Q4": (0.005, 0.4),  # near-zero alignment
}

_QUADRANT_ORDER = ("Q1", "Q2", "Q3", "Q4")

# "Much greater" margin asserted between Q3 and Q4 optimal weights.
Q4_SUPPRESSION_FACTOR = 10.0


@dataclass(frozen=True)
class OrderingReport:
    weights: dict[str, float]
    order: tuple[str, ...]
    q4_to_q3_ratio: float


def quadrant_ordering_demo(
    archetypes: dict[str, tuple[float, float]] | None = None,
    *,
    step_size: float = 1.0,
    smoothness: float = 1.0,
) -> OrderingReport:
    """Evaluate the optimal weights on one archetype token per quadrant
    and verify the ordering Q1 > Q2 > Q3 > Q4, with the Q4 weight at most
    a tenth of Q3's.

    Archetypes map quadrant label to (align, sq_norm) and must follow the
    qualitative structure: strictly decreasing alignment from Q1 to Q4,
    non-negative alignment, positive gradient energy.
    """
    params = dict(DEFAULT_ARCHETYPES if archetypes is None else archetypes)
    if set(params) != set(_QUADRANT_ORDER):
        raise ConfigurationError(f"archetypes must cover exactly {_QUADRANT_ORDER}")
    aligns = [params[q][0] for q in _QUADRANT_ORDER]
    sq_norms = [params[q][1] for q in _QUADRANT_ORDER]
    if any(a < 0 for a in aligns) or any(m <= 0 for m in sq_norms):
        raise ConfigurationError("archetypes need non-negative align and positive sq_norm")
    if not all(aligns[i] > aligns[i + 1] for i in range(3)):
        raise ConfigurationError("archetype alignments must strictly decrease Q1 > Q2 > Q3 > Q4")
    inst = OracleInstance(
        align=np.array(aligns),
        sq_norm=np.array(sq_norms),
        step_size=step_size,
        smoothness=smoothness,
    )
    w = oracle_weight(inst)
    weights = dict(zip(_QUADRANT_ORDER, (float(x) for x in w)))
    order = tuple(sorted(weights, key=lambda q: -weights[q]))
    ratio = weights["Q4"] / weights["Q3"] if weights["Q3"] > 0 else np.inf
    if order != _QUADRANT_ORDER:
        raise ConfigurationError(f"archetypes produce ordering {order}, expected {_QUADRANT_ORDER}")
    if ratio > 1.0 / Q4_SUPPRESSION_FACTOR:
        raise ConfigurationError(
            f"Q4 weight is {ratio:.3f} of Q3's; expected at most {1.0 / Q4_SUPPRESSION_FACTOR}"
        )
    return OrderingReport(weights=weights, order=order, q4_to_q3_ratio=ratio)


def _step_rule(tau: float) -> Callable[[float], float]:
    return lambda h: 1.0 if h >= tau else 0.0


# Shipped family of entropy-only scores: non-decreasing with f(0) = 0.
ENTROPY_ONLY_RULES: tuple[tuple[str, Callable[[float], float]], ...] = (
    ("identity", lambda h: h),
    ("step-0.1", _step_rule(0.1)),
    ("step-0.3", _step_rule(0.3)),
    ("step-0.5", _step_rule(0.5)),
)

# Demo batch requirements on the normalized axes.
_LOW_ENTROPY = 0.05
_HIGH_DIVERGENCE = 0.5
_LOW_DIVERGENCE = 0.05
_MIN_SEPARATION = 0.45


@dataclass(frozen=True)
class BlindSpotReport:
    """Outcome of the blind-spot demonstration on one batch.

    ``entropy_scores`` maps each rule name to the (overconfident, solved)
    score pair, both below the low-entropy cutoff by construction, while
    softor separates the two token classes by at least ``separation``.
    """

    entropy_scores: dict[str, tuple[float, float]]
    softor_overconfident_min: float
    softor_solved_max: float
    separation: float
    overconfident_positions: tuple[int, ...]
    solved_positions: tuple[int, ...]


def blind_spot_demo(metrics: Sequence[TokenMetrics]) -> BlindSpotReport:
    """Show that every entropy-only rule scores a confidently-wrong token
    like a solved one, while the soft-OR score separates them.

    The batch must contain at least one token with h_hat < 0.05 and
    delta_hat > 0.5 (confidently wrong) and one with h_hat < 0.05 and
    delta_hat < 0.05 (solved).  Plant the wrong token's delta_hat
    comfortably above 0.55 so the demonstrated separation clears 0.45
    (the provable bound is delta_hat - 0.0975).
    """
    overconfident = [
        i
        for i, m in enumerate(metrics)
        if m.h_hat < _LOW_ENTROPY and m.delta_hat > _HIGH_DIVERGENCE
    ]
    solved = [
        i
        for i, m in enumerate(metrics)
        if m.h_hat < _LOW_ENTROPY and m.delta_hat < _LOW_DIVERGENCE
    ]
    if not overconfident or not solved:
        raise ConfigurationError(
            "demo batch must plant at least one (h_hat<0.05, delta_hat>0.5) token "
            "and one (h_hat<0.05, delta_hat<0.05) token"
        )
    entropy_scores: dict[str, tuple[float, float]] = {}
    for name, rule in ENTROPY_ONLY_RULES:
        oc = max(rule(metrics[i].h_hat) for i in overconfident)
        sv = max(rule(metrics[i].h_hat) for i in solved)
        if oc >= _LOW_ENTROPY or sv >= _LOW_ENTROPY:
            raise ConfigurationError(
                f"entropy-only rule {name!r} scored a planted token above "
                f"{_LOW_ENTROPY}; the batch does not meet the demo preconditions"
            )
        entropy_scores[name] = (oc, sv)
    softor_oc = min(metrics[i].softor for i in overconfident)
    softor_sv = max(metrics[i].softor for i in solved)
    separation = softor_oc - softor_sv
    if separation < _MIN_SEPARATION:
        raise ConfigurationError(
            f"softor separation {separation:.4f} below the demonstration margin "
            f"{_MIN_SEPARATION}; plant the overconfident token's delta_hat higher"
        )
    return BlindSpotReport(
        entropy_scores=entropy_scores,
        softor_overconfident_min=softor_oc,
        softor_solved_max=softor_sv,
        separation=separation,
        overconfident_positions=tuple(overconfident),
        solved_positions=tuple(solved),
    )
