"""Batch-level normalisation and the combined per-token scores.

Per-token quantities (entropy, divergences) are pure; the batch step is
a min/max reduction over the analysis batch followed by a map, so the
output is deterministic regardless of how callers parallelise.  The
normalisation scope is exactly the list passed to :func:`score_batch`:
callers decide whether a batch is one rollout or many.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dist import TokenRecord, forward_kl, normalized_entropy, reverse_kl
from .errors import DimensionError, EmptyInputError, InvalidInputError, TokenSieveError

# Two floats computed by the same formula must agree to this tolerance.
_IDENTITY_TOL = 1e-12

# Below this spread, an axis is considered constant and normalises to 0.
_DEGENERATE_SPAN = 1e-12


def minmax_normalize(values) -> np.ndarray:
    """Map values affinely onto [0, 1] via (v - min) / (max - min).

    A constant vector (span <= 1e-12) and a singleton both map to all
    zeros: an axis with no spread carries no ranking information, and
    zeros let the combined score fall back to the other axis.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"expected a one-dimensional vector, got shape {arr.shape}")
    if arr.size == 0:
        raise EmptyInputError("cannot normalize an empty vector")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("values must be finite")
    lo = float(arr.min())
    span = float(arr.max()) - lo
    if arr.size == 1 or span <= _DEGENERATE_SPAN:
        return np.zeros(arr.size)
    return (arr - lo) / span


def softor(h_hat: float, delta_hat: float) -> float:
    """Probabilistic-OR combination of two normalized scores.

    Equals ``h + d - h*d`` and equivalently ``1 - (1-h)(1-d)``: nonzero
    whenever either input is nonzero, 1 whenever either input is 1, and
    non-decreasing in each argument.  Parameter-free by design.
    """
    for name, v in (("h_hat", h_hat), ("delta_hat", delta_hat)):
        if not np.isfinite(v) or not 0.0 <= v <= 1.0:
            raise InvalidInputError(f"{name} must lie in [0, 1], got {v!r}")
    return h_hat + delta_hat - h_hat * delta_hat


def q3_score(delta_fwd: float, h_hat: float) -> float:
    """Confidence-weighted divergence: raw forward KL times (1 - h_hat).

    Large exactly when the student is confident (low normalized entropy)
    while the teacher disagrees, which is the overconfident regime that
    entropy-only scores cannot see.
    """
    if not np.isfinite(delta_fwd) or delta_fwd < 0.0:
        raise InvalidInputError(f"delta_fwd must be a finite non-negative real, got {delta_fwd!r}")
    if not np.isfinite(h_hat) or not 0.0 <= h_hat <= 1.0:
        raise InvalidInputError(f"h_hat must lie in [0, 1], got {h_hat!r}")
    return delta_fwd * (1.0 - h_hat)


@dataclass(frozen=True)
class TokenMetrics:
    """Complete per-token metric bundle.

    ``h``, ``delta_rev`` and ``delta_fwd`` are batch-independent;
    ``h_hat`` and ``delta_hat`` are min-max normalized over the analysis
    batch (``delta_hat`` normalizes the reverse KL).  ``quadrant`` is
    attached by the taxonomy module and optional at construction.
    """

    position: int
    h: float
    delta_rev: float
    delta_fwd: float
    h_hat: float
    delta_hat: float
    conf: float
    softor: float
    q3_score: float
    quadrant: str | None = None

    def __post_init__(self):
        for name in ("h", "h_hat", "delta_hat", "conf", "softor"):
            v = getattr(self, name)
            if not np.isfinite(v) or not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1], got {v!r}")
        for name in ("delta_rev", "delta_fwd", "q3_score"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise InvalidInputError(f"{name} must be non-negative, got {v!r}")
        if abs(self.conf - (1.0 - self.h_hat)) > _IDENTITY_TOL:
            raise InvalidInputError("conf must equal 1 - h_hat")
        expected_softor = self.h_hat + self.delta_hat - self.h_hat * self.delta_hat
        if abs(self.softor - expected_softor) > _IDENTITY_TOL:
            raise InvalidInputError("softor must equal h_hat + delta_hat - h_hat*delta_hat")
        if abs(self.q3_score - self.delta_fwd * self.conf) > _IDENTITY_TOL:
            raise InvalidInputError("q3_score must equal delta_fwd * conf")

    def with_quadrant(self, label: str) -> "TokenMetrics":
        return replace(self, quadrant=label)


def score_batch(batch: list[TokenRecord]) -> list[TokenMetrics]:
    """Compute the full metric bundle for every token of an analysis batch.

    Output order matches input order, and permuting the batch permutes
    the output identically (the normalisation statistics are
    permutation-invariant).
    """
    if not batch:
        raise EmptyInputError("score_batch needs a non-empty batch")
    vocab = batch[0].vocab_size
    h = np.empty(len(batch))
    d_rev = np.empty(len(batch))
    d_fwd = np.empty(len(batch))
    for i, rec in enumerate(batch):
        if rec.vocab_size != vocab:
            raise DimensionError(
                f"batch position {i}: vocab size {rec.vocab_size} differs from {vocab}"
            )
        try:
            h[i] = normalized_entropy(rec.student)
            d_rev[i] = reverse_kl(rec.student, rec.teacher)
            d_fwd[i] = forward_kl(rec.student, rec.teacher)
        except TokenSieveError as exc:
            raise type(exc)(f"batch position {i}: {exc}") from exc
    h_hat = minmax_normalize(h)
    delta_hat = minmax_normalize(d_rev)
    out = []
    for i, rec in enumerate(batch):
        conf = 1.0 - h_hat[i]
        out.append(
            TokenMetrics(
                position=rec.position,
                h=float(h[i]),
                delta_rev=float(d_rev[i]),
                delta_fwd=float(d_fwd[i]),
                h_hat=float(h_hat[i]),
                delta_hat=float(delta_hat[i]),
                conf=float(conf),
                softor=float(h_hat[i] + delta_hat[i] - h_hat[i] * delta_hat[i]),
                q3_score=float(d_fwd[i] * conf),
            )
        )
    return out
