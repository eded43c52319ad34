"""Token-importance metrics, quadrant taxonomy, and budgeted token
selection for on-policy distillation batches, with a desk-scale softmax
simulator and a line-record CLI."""

__version__ = "0.1.0"

from .dist import (
    ProbDist,
    TokenRecord,
    entropy_nats,
    forward_kl,
    normalized_entropy,
    reverse_kl,
    softmax,
    teacher_entropy_stats,
)
from .errors import TokenSieveError
from .oracle import (
    OracleInstance,
    blind_spot_demo,
    descent_bound,
    oracle_descent,
    oracle_weight,
    quadrant_ordering_demo,
)
from .scoring import TokenMetrics, minmax_normalize, q3_score, score_batch, softor
from .selection import (
    ISWeights,
    SelectionMask,
    bernoulli_sample,
    build_mask,
    div_topk,
    entropy_sample,
    full_mask,
    is_estimate,
    is_variance,
    masked_loss,
    q3_topk,
    softor_bottomk,
    softor_topk,
    topk_by_score,
)
from .sim import (
    Rollout,
    SimConfig,
    ToyModel,
    plant_q3_scenario,
    reverse_kl_grad,
    run_experiment,
    sample_rollout,
    train_step,
)
from .taxonomy import (
    Quadrant,
    QuadrantThresholds,
    classify,
    quadrant_histogram,
)

__all__ = [
    "ProbDist",
    "TokenRecord",
    "softmax",
    "entropy_nats",
    "normalized_entropy",
    "reverse_kl",
    "forward_kl",
    "teacher_entropy_stats",
    "TokenMetrics",
    "minmax_normalize",
    "softor",
    "q3_score",
    "score_batch",
    "Quadrant",
    "QuadrantThresholds",
    "classify",
    "quadrant_histogram",
    "SelectionMask",
    "ISWeights",
    "topk_by_score",
    "softor_topk",
    "q3_topk",
    "div_topk",
    "softor_bottomk",
    "entropy_sample",
    "build_mask",
    "full_mask",
    "masked_loss",
    "bernoulli_sample",
    "is_estimate",
    "is_variance",
    "OracleInstance",
    "descent_bound",
    "oracle_weight",
    "oracle_descent",
    "quadrant_ordering_demo",
    "blind_spot_demo",
    "ToyModel",
    "Rollout",
    "SimConfig",
    "sample_rollout",
    "reverse_kl_grad",
    "train_step",
    "plant_q3_scenario",
    "run_experiment",
    "TokenSieveError",
]
