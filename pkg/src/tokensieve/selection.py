"""Token-selection strategies, the masked loss, and the
importance-weighted estimator.

Positions refer to batch order: index ``i`` is the ``i``-th token of the
scored batch.  Two sampling semantics coexist deliberately and are never
mixed: the selection strategies return a fixed budget of ``floor(rho*m)``
positions (what a training mask needs), while the importance-weighted
estimator assumes independent Bernoulli inclusion per position (the
model under which its closed-form variance holds).

All strategies are deterministic: the top-k/bottom-k variants are pure
functions of the scores with ties broken by lower position, and
``entropy_sample`` is a pure function of (batch, rho, seed) via the
package generator with one uniform per token in position order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BiasedEstimatorError,
    DimensionError,
    EmptyInputError,
    EmptySelectionError,
    InvalidInputError,
)
from .rng import make_rng
from .scoring import TokenMetrics

STRATEGY_ENTROPY_SAMPLE = "entropy-sample"
STRATEGY_SOFTOR_TOPK = "softor-topk"
STRATEGY_Q3_TOPK = "q3-topk"
STRATEGY_DIV_TOPK = "div-topk"
STRATEGY_SOFTOR_BOTTOMK = "softor-bottomk"
STRATEGY_ALL = "all"

STRATEGIES = (
    STRATEGY_ENTROPY_SAMPLE,
    STRATEGY_SOFTOR_TOPK,
    STRATEGY_Q3_TOPK,
    STRATEGY_DIV_TOPK,
    STRATEGY_SOFTOR_BOTTOMK,
    STRATEGY_ALL,
)

# Guards against decimal retention ratios whose float product lands just
# under an integer (e.g. 0.3 * 10 == 2.999...96).
_BUDGET_EPS = 1e-9


def retention_budget(rho: float, total: int) -> int:
    """Number of positions a strategy must retain: floor(rho*m), floored at 1."""
    if not np.isfinite(rho) or not 0.0 < rho <= 1.0:
        raise InvalidInputError(f"rho must lie in (0, 1], got {rho!r}")
    if total < 1:
        raise EmptyInputError("cannot select from an empty batch")
    return max(1, int(math.floor(rho * total + _BUDGET_EPS)))


@dataclass(frozen=True)
class SelectionMask:
    """Ordered set of retained batch positions plus the provenance that
    produced it (strategy, retention ratio, seed for stochastic strategies)."""

    retained: tuple[int, ...]
    total: int
    rho: float
    strategy: str
    seed: int | None = None

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.total < 1:
            raise InvalidInputError("total must be >= 1")
        retained = tuple(int(p) for p in self.retained)
        object.__setattr__(self, "retained", retained)
        if len(set(retained)) != len(retained):
            raise InvalidInputError("retained positions must be unique")
        if any(not 0 <= p < self.total for p in retained):
            raise InvalidInputError("retained positions must lie in [0, total)")
        if list(retained) != sorted(retained):
            raise InvalidInputError("retained positions must be sorted ascending")
        if self.strategy == STRATEGY_ALL:
            if len(retained) != self.total:
                raise InvalidInputError("strategy 'all' must retain every position")
        else:
            expected = retention_budget(self.rho, self.total)
            if len(retained) != expected:
                raise InvalidInputError(
                    f"strategy {self.strategy!r} must retain exactly {expected} "
                    f"positions, got {len(retained)}"
                )


def full_mask(total: int) -> SelectionMask:
    """Mask retaining every position (the unmasked baseline)."""
    if total < 1:
        raise EmptyInputError("cannot build a mask over an empty batch")
    return SelectionMask(
        retained=tuple(range(total)), total=total, rho=1.0, strategy=STRATEGY_ALL
    )


def _validated_scores(scores) -> list[float]:
    values = list(scores)
    if not values:
        raise EmptyInputError("cannot select from empty scores")
    for v in values:
        if not np.isfinite(v):
            raise InvalidInputError(f"scores must be finite, got {v!r}")
    return values


def topk_by_score(scores, rho: float, *, strategy: str = STRATEGY_SOFTOR_TOPK) -> SelectionMask:
    """Retain the floor(rho*m) highest-scoring positions.

    Ties break toward the lower position index (stable sort on the
    negated score), so the result is reproducible across runs.
    """
    values = _validated_scores(scores)
    k = retention_budget(rho, len(values))
    order = sorted(range(len(values)), key=lambda i: -values[i])
    return SelectionMask(
        retained=tuple(sorted(order[:k])),
        total=len(values),
        rho=rho,
        strategy=strategy,
    )


def bottomk_by_score(
    scores, rho: float, *, strategy: str = STRATEGY_SOFTOR_BOTTOMK
) -> SelectionMask:
    """Retain the floor(rho*m) lowest-scoring positions; ties to lower index."""
    values = _validated_scores(scores)
    k = retention_budget(rho, len(values))
    order = sorted(range(len(values)), key=lambda i: values[i])
    return SelectionMask(
        retained=tuple(sorted(order[:k])),
        total=len(values),
        rho=rho,
        strategy=strategy,
    )


def softor_topk(metrics: Sequence[TokenMetrics], rho: float) -> SelectionMask:
    return topk_by_score([m.softor for m in metrics], rho, strategy=STRATEGY_SOFTOR_TOPK)


def q3_topk(metrics: Sequence[TokenMetrics], rho: float) -> SelectionMask:
    return topk_by_score([m.q3_score for m in metrics], rho, strategy=STRATEGY_Q3_TOPK)


def div_topk(metrics: Sequence[TokenMetrics], rho: float) -> SelectionMask:
    return topk_by_score([m.delta_rev for m in metrics], rho, strategy=STRATEGY_DIV_TOPK)


def softor_bottomk(metrics: Sequence[TokenMetrics], rho: float) -> SelectionMask:
    return bottomk_by_score(
        [m.softor for m in metrics], rho, strategy=STRATEGY_SOFTOR_BOTTOMK
    )


def weighted_sample_without_replacement(
    weights, rho: float, seed: int, *, strategy: str = STRATEGY_ENTROPY_SAMPLE
) -> SelectionMask:
    """Draw floor(rho*m) positions without replacement, tendency ~ weights.

    Uses the weighted-key method: each position draws one uniform u_i (in
    position order) and receives the key u_i^(1/w_i); the k largest keys
    win.  Keys are compared as log(u_i)/w_i, a monotone transform that
    avoids underflow for tiny weights.  Zero-weight positions rank below
    every positive-weight position and fill remaining slots by position
    order; an all-zero weight vector falls back to uniform weights.
    """
    w = np.asarray(list(weights), dtype=np.float64)
    if w.size == 0:
        raise EmptyInputError("cannot sample from an empty batch")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise InvalidInputError("weights must be finite and non-negative")
    k = retention_budget(rho, int(w.size))
    if not w.any():
        w = np.ones_like(w)
    rng = make_rng(seed)
    u = rng.random(w.size)
    with np.errstate(divide="ignore"):
        log_u = np.log(u)
        keys = np.where(w > 0.0, log_u / np.where(w > 0.0, w, 1.0), -np.inf)
    order = sorted(range(w.size), key=lambda i: -keys[i])
    return SelectionMask(
        retained=tuple(sorted(order[:k])),
        total=int(w.size),
        rho=rho,
        strategy=strategy,
        seed=int(seed),
    )


def entropy_sample(metrics: Sequence[TokenMetrics], rho: float, seed: int) -> SelectionMask:
    """Budgeted sampling with inclusion tendency proportional to the
    token's normalized student entropy."""
    return weighted_sample_without_replacement(
        [m.h for m in metrics], rho, seed, strategy=STRATEGY_ENTROPY_SAMPLE
    )


def build_mask(
    metrics: Sequence[TokenMetrics], strategy: str, rho: float, seed: int | None = None
) -> SelectionMask:
    """Dispatch to the named strategy.  ``seed`` is required by
    entropy-sample and ignored by the deterministic strategies."""
    if strategy == STRATEGY_ALL:
        return full_mask(len(metrics))
    if strategy == STRATEGY_SOFTOR_TOPK:
        return softor_topk(metrics, rho)
    if strategy == STRATEGY_Q3_TOPK:
        return q3_topk(metrics, rho)
    if strategy == STRATEGY_DIV_TOPK:
        return div_topk(metrics, rho)
    if strategy == STRATEGY_SOFTOR_BOTTOMK:
        return softor_bottomk(metrics, rho)
    if strategy == STRATEGY_ENTROPY_SAMPLE:
        if seed is None:
            raise InvalidInputError("entropy-sample requires a seed")
        return entropy_sample(metrics, rho, seed)
    raise InvalidInputError(f"unknown strategy {strategy!r}")


def masked_loss(metrics: Sequence[TokenMetrics], mask: SelectionMask) -> float:
    """Mean reverse KL over the retained positions (the training loss).

    With a full mask this equals the plain all-token mean.
    """
    if mask.total != len(metrics):
        raise DimensionError(
            f"mask covers {mask.total} positions but batch has {len(metrics)}"
        )
    if not mask.retained:
        raise EmptySelectionError("masked_loss over an empty selection is undefined")
    return float(np.mean([metrics[p].delta_rev for p in mask.retained]))


@dataclass(frozen=True)
class ISWeights:
    """Per-position inclusion probabilities for Bernoulli subsampling.

    ``inclusion_probs[t]`` is the probability position t enters the
    sample; the importance weight of a retained position is its
    reciprocal.  Unbiasedness requires p_t > 0 wherever the estimated
    values are nonzero; zero entries are admitted here and checked at
    estimation time.
    """

    inclusion_probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.inclusion_probs, dtype=np.float64).copy()
        if p.ndim != 1 or p.size == 0:
            raise InvalidInputError("inclusion_probs must be a non-empty vector")
        if not np.all(np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidInputError("inclusion probabilities must lie in [0, 1]")
        p.flags.writeable = False
        object.__setattr__(self, "inclusion_probs", p)

    @property
    def weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.where(self.inclusion_probs > 0.0, 1.0 / self.inclusion_probs, np.inf)


def bernoulli_sample(probs: ISWeights, seed: int) -> tuple[int, ...]:
    """Independent Bernoulli(p_t) inclusion draw, one uniform per position
    in position order.  This is the sampling model assumed by
    :func:`is_estimate` and :func:`is_variance`."""
    rng = make_rng(seed)
    u = rng.random(probs.inclusion_probs.size)
    return tuple(int(i) for i in np.nonzero(u < probs.inclusion_probs)[0])


def is_estimate(
    per_token_values, sample: SelectionMask | Sequence[int], probs: ISWeights
) -> float:
    """Importance-weighted mean (1/m) * sum over sampled t of v_t / p_t.

    Unbiased for the full mean under Bernoulli(p_t) inclusion whenever
    every position with a nonzero value has p_t > 0.
    """
    v = np.asarray(list(per_token_values), dtype=np.float64)
    if v.size == 0:
        raise EmptyInputError("per_token_values must be non-empty")
    p = probs.inclusion_probs
    if v.size != p.size:
        raise DimensionError(f"{v.size} values vs {p.size} inclusion probabilities")
    if np.any((p == 0.0) & (v != 0.0)):
        raise BiasedEstimatorError(
            "a position with nonzero value has zero inclusion probability; "
            "the estimator would be biased"
        )
    positions = sample.retained if isinstance(sample, SelectionMask) else tuple(sample)
    total = 0.0
    for t in positions:
        t = int(t)
        if not 0 <= t < v.size:
            raise InvalidInputError(f"sampled position {t} out of range")
        if v[t] != 0.0:
            total += v[t] / p[t]
    return total / v.size


def is_variance(per_token_sq_norms, probs: ISWeights) -> float:
    """Closed-form variance of the importance-weighted estimator:
    (1/m^2) * sum of (1 - p_t)/p_t * E||g_t||^2 under Bernoulli inclusion."""
    g2 = np.asarray(list(per_token_sq_norms), dtype=np.float64)
    if g2.size == 0:
        raise EmptyInputError("per_token_sq_norms must be non-empty")
    if not np.all(np.isfinite(g2)) or np.any(g2 < 0.0):
        raise InvalidInputError("squared norms must be finite and non-negative")
    p = probs.inclusion_probs
    if g2.size != p.size:
        raise DimensionError(f"{g2.size} values vs {p.size} inclusion probabilities")
    if np.any(p <= 0.0):
        raise InvalidInputError("is_variance requires every p_t > 0")
    return float(((1.0 - p) / p * g2).sum() / (g2.size**2))
