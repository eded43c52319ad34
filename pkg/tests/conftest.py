import numpy as np
import pytest

from tokensieve import ProbDist, TokenRecord, minmax_normalize
from tokensieve.scoring import TokenMetrics


def random_dist(rng: np.random.Generator, vocab: int) -> ProbDist:
    """Random distribution with full support (Dirichlet-like via gamma)."""
    raw = rng.gamma(1.0, 1.0, vocab) + 1e-9
    return ProbDist(raw / raw.sum())


# Five reference probe tokens as (entropy in nats, divergence in nats,
# expected quadrant).  Three are confidently-wrong positions (low entropy,
# strong teacher disagreement), two are uncertain positions the teacher
# also corrects.
PROBE_PAIRS = (
    (0.02, 5.27, "Q3"),
    (1.82, 5.31, "Q1"),
    (0.40, 3.54, "Q3"),
    (0.12, 5.58, "Q3"),
    (1.38, 4.27, "Q1"),
)

# Background tokens standing in for the rest of the batch the probes were
# drawn from: any real batch is dominated by agreement tokens, and the
# axis statistics (min-max, medians) are meaningless without them.
PROBE_BACKGROUND = (
    (0.18, 0.02, "Q4"),
    (0.25, 0.04, "Q4"),
    (0.33, 0.06, "Q4"),
    (1.55, 0.03, "Q2"),
    (1.70, 0.05, "Q2"),
    (1.95, 0.08, "Q2"),
    (2.10, 0.60, "Q1"),  # diffuse with mild disagreement
)


def metrics_from_axis_values(pairs) -> list[TokenMetrics]:
    """Build a metrics batch directly from raw (entropy, divergence) axis
    values, normalizing both axes over the batch."""
    h_raw = [p[0] for p in pairs]
    d_raw = [p[1] for p in pairs]
    h_hat = minmax_normalize(h_raw)
    d_hat = minmax_normalize(d_raw)
    out = []
    for i in range(len(pairs)):
        hh, dh, d = float(h_hat[i]), float(d_hat[i]), float(d_raw[i])
        out.append(
            TokenMetrics(
                position=i,
                h=hh,
                delta_rev=d,
                delta_fwd=d,
                h_hat=hh,
                delta_hat=dh,
                conf=1.0 - hh,
                softor=hh + dh - hh * dh,
                q3_score=d * (1.0 - hh),
            )
        )
    return out


def probe_batch_metrics() -> list[TokenMetrics]:
    """The five probe tokens embedded in their background batch; probe
    tokens occupy positions 0-4."""
    return metrics_from_axis_values(
        [(h, d) for h, d, _ in PROBE_PAIRS] + [(h, d) for h, d, _ in PROBE_BACKGROUND]
    )


def random_records(rng: np.random.Generator, n: int, vocab: int) -> list[TokenRecord]:
    return [
        TokenRecord(
            position=i,
            student=random_dist(rng, vocab),
            teacher=random_dist(rng, vocab),
            sampled_token=int(rng.integers(vocab)),
        )
        for i in range(n)
    ]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20250809)
