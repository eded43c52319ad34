"""Probability-vector primitives and per-token information measures.

Everything in this module is a pure function of immutable inputs, so
values can be shared and evaluated in parallel across tokens.  All
entropies and divergences are in nats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, EmptyInputError, InvalidInputError

# Floor applied to the denominator distribution inside a KL ratio.  Keeps
# the divergence finite when the numerator puts mass where the other
# distribution has (numerically) none.
KL_EPS = 1e-12

# Floating error can push an analytically zero KL slightly negative;
# values in [KL_NEGATIVE_FLOOR, 0) are clamped to 0, anything below is
# treated as a sign of inconsistent inputs.
KL_NEGATIVE_FLOOR = -1e-9

# Admission tolerance on probability sums.
PROB_SUM_TOL = 1e-6


def _as_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise InvalidInputError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class ProbDist:
    """Probability vector over a finite vocabulary.

    The vector is validated at construction (length >= 2, entries in
    [0, 1], sum within ``PROB_SUM_TOL`` of 1) and frozen read-only.
    Dense vectors only: sparse or truncated top-k distributions are
    rejected here rather than approximated.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_vector(self.probs, "probs").copy()
        if arr.size < 2:
            raise InvalidInputError(f"vocabulary must have at least 2 entries, got {arr.size}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("probabilities must be finite")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise InvalidInputError("probabilities must lie in [0, 1]")
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise InvalidInputError(
                f"probabilities sum to {total!r}, expected 1 within {PROB_SUM_TOL}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "probs", arr)

    @property
    def vocab_size(self) -> int:
        return int(self.probs.size)


@dataclass(frozen=True)
class TokenRecord:
    """One rollout position: the student and teacher next-token
    distributions plus the token the student actually sampled there."""

    position: int
    student: ProbDist
    teacher: ProbDist
    sampled_token: int
    rollout_id: str | None = None

    def __post_init__(self):
        if self.position < 0:
            raise InvalidInputError(f"position must be >= 0, got {self.position}")
        if self.student.vocab_size != self.teacher.vocab_size:
            raise DimensionError(
                f"student vocab {self.student.vocab_size} != teacher vocab "
                f"{self.teacher.vocab_size}"
            )
        if not 0 <= self.sampled_token < self.student.vocab_size:
            raise InvalidInputError(
                f"sampled_token {self.sampled_token} outside vocabulary of size "
                f"{self.student.vocab_size}"
            )

    @property
    def vocab_size(self) -> int:
        return self.student.vocab_size


def softmax(logits) -> ProbDist:
    """Convert raw scores to a probability vector.

    Max-subtracted exponentiation keeps the computation stable for large
    logits; adding a constant to every logit leaves the output unchanged.
    """
    z = _as_vector(logits, "logits")
    if z.size < 2:
        raise InvalidInputError(f"need at least 2 logits, got {z.size}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("logits must be finite")
    e = np.exp(z - z.max())
    return ProbDist(e / e.sum())


def entropy_nats(p: ProbDist) -> float:
    """Shannon entropy H(p) in nats, with 0*ln(0) taken as 0.

    The result is clamped into the mathematical range [0, ln|V|], which
    floating error can otherwise exceed by an ulp near the uniform and
    one-hot extremes.
    """
    probs = p.probs[p.probs > 0.0]
    raw = float(-(probs * np.log(probs)).sum())
    if raw <= 0.0:
        return 0.0
    return min(raw, math.log(p.vocab_size))


def normalized_entropy(p: ProbDist) -> float:
    """Entropy divided by its maximum ln|V|, in [0, 1].

    |V| is the declared vocabulary size of the vector, not its support
    size.
    """
    return entropy_nats(p) / math.log(p.vocab_size)


def _clamped_kl(value: float) -> float:
    if value < 0.0:
        if value < KL_NEGATIVE_FLOOR:
            raise InvalidInputError(
                f"KL divergence {value!r} fell below the numerical floor "
                f"{KL_NEGATIVE_FLOOR}; inputs are likely unnormalized"
            )
        return 0.0
    return value


def reverse_kl(student: ProbDist, teacher: ProbDist) -> float:
    """KL(student || teacher) in nats.

    Student-side zeros contribute nothing; teacher mass is floored at
    ``KL_EPS`` so the value stays finite when the student puts mass where
    the teacher has none.
    """
    if student.vocab_size != teacher.vocab_size:
        raise DimensionError(
            f"vocab mismatch: {student.vocab_size} vs {teacher.vocab_size}"
        )
    s = student.probs
    t = np.maximum(teacher.probs, KL_EPS)
    mask = s > 0.0
    value = float((s[mask] * np.log(s[mask] / t[mask])).sum())
    return _clamped_kl(value)


def forward_kl(student: ProbDist, teacher: ProbDist) -> float:
    """KL(teacher || student) in nats; heavily penalises student missing mass."""
    if student.vocab_size != teacher.vocab_size:
        raise DimensionError(
            f"vocab mismatch: {student.vocab_size} vs {teacher.vocab_size}"
        )
    t = teacher.probs
    s = np.maximum(student.probs, KL_EPS)
    mask = t > 0.0
    value = float((t[mask] * np.log(t[mask] / s[mask])).sum())
    return _clamped_kl(value)


def teacher_entropy_stats(batch: list[TokenRecord]) -> tuple[float, float]:
    """Mean and population standard deviation of the normalized teacher
    entropy over a batch.

    A near-zero mean and std indicate the teacher is confident almost
    everywhere, i.e. its entropy carries no selection signal.
    """
    if not batch:
        raise EmptyInputError("teacher_entropy_stats needs a non-empty batch")
    values = np.array([normalized_entropy(rec.teacher) for rec in batch])
    return float(values.mean()), float(values.std())
