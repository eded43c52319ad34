"""Desk-scale on-policy distillation over bigram softmax models.

A model is a |V| x |V| logit table: row c is the next-token distribution
after token c.  The student samples its own rollouts, the frozen teacher
scores every visited position, and a training step applies one plain
gradient-descent update of the masked mean reverse KL, with the mask
produced by any of the selection strategies.  Bigram models are the
smallest family where "context" exists, so the loop is genuinely
on-policy without any neural-network machinery; plain gradient descent
(no momentum or weight decay) keeps the directional comparisons free of
optimizer confounds.

The planted scenario builds a student that is confidently wrong on a
designated subset of contexts, agrees confidently elsewhere, and is
diffuse on a few rows; it is a synthetic analogue of the overconfident
token regime, not a reproduction of any real training run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import KL_EPS, ProbDist, TokenRecord, reverse_kl, softmax
from .errors import ConfigurationError, DimensionError, EmptyInputError, InvalidInputError
from .rng import make_rng
from .scoring import TokenMetrics, score_batch
from .selection import (
    STRATEGIES,
    STRATEGY_ALL,
    STRATEGY_ENTROPY_SAMPLE,
    build_mask,
    masked_loss,
)
from .taxonomy import Quadrant, QuadrantHistogram, QuadrantThresholds, quadrant_histogram

MIN_VOCAB = 4
MAX_VOCAB = 64

# Logit peak for confident rows in the planted scenario; strong enough
# that a peaked 16-token row has normalized entropy below 0.1.
_PLANT_PEAK = 6.0
# Mild teacher peak for the diffuse disagreement rows.
_PLANT_MILD_PEAK = 1.5

LABEL_PLANTED = "planted-overconfident"
LABEL_DIFFUSE_WRONG = "diffuse-disagree"
LABEL_DIFFUSE_AGREE = "diffuse-agree"
LABEL_FILLER = "confident-agree"


@dataclass(frozen=True)
class ToyModel:
    """Bigram softmax model: logits[c] scores the next token after c."""

    logits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.logits, dtype=np.float64).copy()
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise InvalidInputError(f"logits must be square, got shape {arr.shape}")
        if not MIN_VOCAB <= arr.shape[0] <= MAX_VOCAB:
            raise InvalidInputError(
                f"vocab size must lie in [{MIN_VOCAB}, {MAX_VOCAB}], got {arr.shape[0]}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("logits must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "logits", arr)
        object.__setattr__(self, "_row_cache", {})

    @property
    def vocab_size(self) -> int:
        return int(self.logits.shape[0])

    def row_dist(self, token: int) -> ProbDist:
        """Next-token distribution after ``token`` (memoised per instance)."""
        if not 0 <= token < self.vocab_size:
            raise InvalidInputError(f"token {token} outside vocabulary")
        cache = self._row_cache
        if token not in cache:
            cache[token] = softmax(self.logits[token])
        return cache[token]


@dataclass(frozen=True)
class Rollout:
    """A student-generated token sequence with both models' distributions
    recorded at every visited context."""

    prompt_token: int
    tokens: tuple[int, ...]
    records: tuple[TokenRecord, ...]

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise InvalidInputError("a rollout must contain at least one token")
        if len(self.tokens) != len(self.records):
            raise DimensionError("tokens and records must have equal length")
        for t, (tok, rec) in enumerate(zip(self.tokens, self.records)):
            if rec.sampled_token != tok:
                raise InvalidInputError(f"record {t} sampled_token disagrees with tokens[{t}]")

    @property
    def length(self) -> int:
        return len(self.tokens)

    def context_at(self, t: int) -> int:
        """Conditioning token for position t."""
        return self.prompt_token if t == 0 else self.tokens[t - 1]


@dataclass(frozen=True)
class SimConfig:
    """Configuration for a simulated training run."""

    vocab_size: int = 16
    rollout_length: int = 64
    rollouts_per_step: int = 2
    learning_rate: float = 4.0
    steps: int = 200
    strategy: str = STRATEGY_ALL
    rho: float = 1.0
    seed: int = 0
    planted_q3: bool = True

    def __post_init__(self):
        if not MIN_VOCAB <= self.vocab_size <= MAX_VOCAB:
            raise InvalidInputError(f"vocab_size must lie in [{MIN_VOCAB}, {MAX_VOCAB}]")
        for name in ("rollout_length", "rollouts_per_step", "steps"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0.0:
            raise InvalidInputError("learning_rate must be a non-negative real")
        if not 0.0 < self.rho <= 1.0:
            raise InvalidInputError(f"rho must lie in (0, 1], got {self.rho!r}")
        if self.strategy not in STRATEGIES:
            raise InvalidInputError(f"unknown strategy {self.strategy!r}")
        if self.seed < 0:
            raise InvalidInputError("seed must be non-negative")


def sample_rollout(
    student: ToyModel, teacher: ToyModel, prompt: int, length: int, seed: int
) -> Rollout:
    """Sample ``length`` tokens autoregressively from the student and record
    both models' distributions at each visited context.

    One uniform draw per position, consumed via inverse-CDF lookup on the
    student row, so the rollout is a pure function of (models, prompt,
    seed).
    """
    if student.vocab_size != teacher.vocab_size:
        raise DimensionError("student and teacher must share a vocabulary")
    if not 0 <= prompt < student.vocab_size:
        raise InvalidInputError(f"prompt token {prompt} outside vocabulary")
    if length < 1:
        raise InvalidInputError("rollout length must be >= 1")
    rng = make_rng(seed)
    vocab = student.vocab_size
    ctx = prompt
    tokens: list[int] = []
    records: list[TokenRecord] = []
    for t in range(length):
        s_dist = student.row_dist(ctx)
        t_dist = teacher.row_dist(ctx)
        u = rng.random()
        tok = int(np.searchsorted(np.cumsum(s_dist.probs), u, side="right"))
        tok = min(tok, vocab - 1)
        records.append(
            TokenRecord(position=t, student=s_dist, teacher=t_dist, sampled_token=tok)
        )
        tokens.append(tok)
        ctx = tok
    return Rollout(prompt_token=prompt, tokens=tuple(tokens), records=tuple(records))


def reverse_kl_grad(student_row_logits, teacher: ProbDist) -> np.ndarray:
    """Analytic gradient of KL(softmax(z) || teacher) with respect to z.

    Component i equals s_i * (ln(s_i / t_i) - KL(s || t)); the entries sum
    to zero because shifting all logits leaves the softmax unchanged.
    """
    z = np.asarray(student_row_logits, dtype=np.float64)
    if z.ndim != 1:
        raise InvalidInputError("student_row_logits must be a vector")
    if z.size != teacher.vocab_size:
        raise DimensionError(f"{z.size} logits vs teacher vocab {teacher.vocab_size}")
    s = softmax(z).probs
    t = np.maximum(teacher.probs, KL_EPS)
    log_ratio = np.log(s / t)
    kl = float((s * log_ratio).sum())
    return s * (log_ratio - kl)


@dataclass(frozen=True)
class StepStats:
    """Telemetry from one training step, measured before the update."""

    masked_loss: float
    full_loss: float
    histogram: QuadrantHistogram
    retained: int


def train_step(
    student: ToyModel,
    teacher: ToyModel,
    rollouts: list[Rollout],
    strategy: str,
    rho: float,
    lr: float,
    seed: int | None = None,
) -> tuple[ToyModel, StepStats]:
    """One masked gradient-descent step on the student.

    The batch is the concatenation of all rollout records; the mask is
    built by ``strategy`` at retention ``rho``; analytic reverse-KL
    gradients are accumulated only at retained positions into the
    corresponding context rows and averaged by the retained count.
    Rows never visited by a retained position are untouched.
    """
    if not rollouts:
        raise EmptyInputError("train_step needs at least one rollout")
    batch: list[TokenRecord] = []
    contexts: list[int] = []
    for ro in rollouts:
        for t, rec in enumerate(ro.records):
            batch.append(rec)
            contexts.append(ro.context_at(t))
    metrics = score_batch(batch)
    mask = build_mask(metrics, strategy, rho, seed)
    loss = masked_loss(metrics, mask)
    full_loss = float(np.mean([m.delta_rev for m in metrics]))
    hist = quadrant_histogram(metrics, QuadrantThresholds.batch_median())
    grad = np.zeros_like(student.logits)
    for p in mask.retained:
        c = contexts[p]
        grad[c] += reverse_kl_grad(student.logits[c], batch[p].teacher)
    grad /= len(mask.retained)
    updated = ToyModel(student.logits - lr * grad) if lr != 0.0 else student
    stats = StepStats(
        masked_loss=loss, full_loss=full_loss, histogram=hist, retained=len(mask.retained)
    )
    return updated, stats


@dataclass(frozen=True)
class PlantedScenario:
    """Student/teacher pair with ground-truth per-context labels."""

    student: ToyModel
    teacher: ToyModel
    labels: dict[int, str]

    def contexts_with(self, label: str) -> tuple[int, ...]:
        return tuple(c for c, lbl in sorted(self.labels.items()) if lbl == label)


def plant_q3_scenario(config: SimConfig) -> PlantedScenario:
    """Construct the planted overconfidence scenario.

    A quarter of the contexts get a student sharply peaked on a token the
    teacher disfavors (confidently wrong: normalized entropy below 0.1,
    reverse KL above 1 nat).  Most remaining rows agree confidently
    (reverse KL below 0.01); a few rows are diffuse, one pair with a
    mildly peaked teacher and one in full agreement.  Peaked rows advance
    the chain by one token, so rollouts keep revisiting every context
    type.
    """
    v = config.vocab_size
    if v < 8:
        raise ConfigurationError(f"planted scenario needs vocab_size >= 8, got {v}")
    n_planted = v // 4
    n_diffuse_wrong = max(1, v // 8)
    n_diffuse_agree = max(1, v // 8)
    student = np.zeros((v, v))
    teacher = np.zeros((v, v))
    labels: dict[int, str] = {}
    for c in range(v):
        if c < n_planted:
            student[c, (c + 1) % v] = _PLANT_PEAK
            teacher[c, (c + 2) % v] = _PLANT_PEAK
            labels[c] = LABEL_PLANTED
        elif c < n_planted + n_diffuse_wrong:
            teacher[c, (c + 1) % v] = _PLANT_MILD_PEAK
            labels[c] = LABEL_DIFFUSE_WRONG
        elif c < n_planted + n_diffuse_wrong + n_diffuse_agree:
            labels[c] = LABEL_DIFFUSE_AGREE
        else:
            student[c, (c + 1) % v] = _PLANT_PEAK
            teacher[c, (c + 1) % v] = _PLANT_PEAK
            labels[c] = LABEL_FILLER
    return PlantedScenario(
        student=ToyModel(student), teacher=ToyModel(teacher), labels=labels
    )


def all_context_loss(student: ToyModel, teacher: ToyModel) -> float:
    """Mean reverse KL between student and teacher rows over every context.

    Rollout-independent convergence measure used to compare strategies.
    """
    if student.vocab_size != teacher.vocab_size:
        raise DimensionError("student and teacher must share a vocabulary")
    values = [
        reverse_kl(student.row_dist(c), teacher.row_dist(c))
        for c in range(student.vocab_size)
    ]
    return float(np.mean(values))


@dataclass(frozen=True)
class StepRow:
    """One row of the learning-curve table."""

    step: int
    strategy: str
    rho: float
    seed: int
    masked_loss: float
    full_loss: float
    all_context_loss: float
    q1: float
    q2: float
    q3: float
    q4: float
    retained: int


@dataclass(frozen=True)
class ExperimentResult:
    config: SimConfig
    rows: tuple[StepRow, ...]
    initial_all_context_loss: float
    final_all_context_loss: float

    @property
    def loss_reduction(self) -> float:
        return self.initial_all_context_loss - self.final_all_context_loss


CURVE_COLUMNS = (
    "step",
    "strategy",
    "rho",
    "seed",
    "masked_loss",
    "full_loss",
    "all_context_loss",
    "q1",
    "q2",
    "q3",
    "q4",
    "retained",
)


def run_experiment(config: SimConfig) -> ExperimentResult:
    """Run a full training experiment and return the learning-curve table.

    Deterministic given the config: one master generator (from
    ``config.seed``) supplies, in a fixed order per step, each rollout's
    prompt and seed and then the selection seed when the strategy needs
    one.  Losses in each row are measured before that step's update.
    """
    scenario = None
    if config.planted_q3:
        scenario = plant_q3_scenario(config)
        student, teacher = scenario.student, scenario.teacher
    else:
        init_rng = make_rng(config.seed)
        student = ToyModel(init_rng.normal(0.0, 1.0, (config.vocab_size, config.vocab_size)))
        teacher = ToyModel(init_rng.normal(0.0, 1.0, (config.vocab_size, config.vocab_size)))
    master = make_rng(config.seed)
    initial = all_context_loss(student, teacher)
    rows: list[StepRow] = []
    for step in range(config.steps):
        rollouts = []
        for _ in range(config.rollouts_per_step):
            prompt = int(master.integers(config.vocab_size))
            ro_seed = int(master.integers(2**63 - 1))
            rollouts.append(
                sample_rollout(student, teacher, prompt, config.rollout_length, ro_seed)
            )
        sel_seed = None
        if config.strategy == STRATEGY_ENTROPY_SAMPLE:
            sel_seed = int(master.integers(2**63 - 1))
        current = all_context_loss(student, teacher)
        student, stats = train_step(
            student,
            teacher,
            rollouts,
            config.strategy,
            config.rho,
            config.learning_rate,
            sel_seed,
        )
        rows.append(
            StepRow(
                step=step,
                strategy=config.strategy,
                rho=config.rho,
                seed=config.seed,
                masked_loss=stats.masked_loss,
                full_loss=stats.full_loss,
                all_context_loss=current,
                q1=stats.histogram.fractions[Quadrant.Q1],
                q2=stats.histogram.fractions[Quadrant.Q2],
                q3=stats.histogram.fractions[Quadrant.Q3],
                q4=stats.histogram.fractions[Quadrant.Q4],
                retained=stats.retained,
            )
        )
    final = all_context_loss(student, teacher)
    return ExperimentResult(
        config=config,
        rows=tuple(rows),
        initial_all_context_loss=initial,
        final_all_context_loss=final,
    )
