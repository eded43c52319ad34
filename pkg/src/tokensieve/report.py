"""Report and mask emission.

Two artifacts per analysis: a per-token CSV (fixed column order, one
selected-flag column per supplied mask) and a JSON summary (quadrant
occupancy, teacher-entropy statistics, retention counts).  Floats are
written as shortest round-trip decimal text so outputs are byte-stable
and suitable for golden-file comparison.  All writes are atomic renames.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import DimensionError, OutputError
from .records import write_atomic
from .scoring import TokenMetrics
from .selection import SelectionMask
from .taxonomy import Quadrant, QuadrantHistogram

TOKEN_COLUMNS = (
    "position",
    "h",
    "delta_rev",
    "delta_fwd",
    "h_hat",
    "delta_hat",
    "softor",
    "q3_score",
    "quadrant",
)


def _fmt(x: float) -> str:
    return repr(float(x))


@dataclass(frozen=True)
class ReportPaths:
    tokens_csv: Path
    summary_json: Path


def render_token_csv(metrics: Sequence[TokenMetrics], masks: Sequence[SelectionMask]) -> str:
    """Per-token CSV text; one row per token in batch order."""
    names = []
    for mask in masks:
        if mask.total != len(metrics):
            raise DimensionError(
                f"mask for strategy {mask.strategy!r} covers {mask.total} positions, "
                f"batch has {len(metrics)}"
            )
        base = f"selected_{mask.strategy}"
        name = base
        n = 2
        while name in names:
            name = f"{base}_{n}"
            n += 1
        names.append(name)
    header = ",".join(TOKEN_COLUMNS + tuple(names))
    retained_sets = [set(mask.retained) for mask in masks]
    lines = [header]
    for i, m in enumerate(metrics):
        row = [
            str(m.position),
            _fmt(m.h),
            _fmt(m.delta_rev),
            _fmt(m.delta_fwd),
            _fmt(m.h_hat),
            _fmt(m.delta_hat),
            _fmt(m.softor),
            _fmt(m.q3_score),
            m.quadrant or "",
        ]
        row.extend("1" if i in retained else "0" for retained in retained_sets)
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def render_summary(
    histogram: QuadrantHistogram,
    masks: Sequence[SelectionMask],
    teacher_entropy: tuple[float, float] | None = None,
) -> str:
    """JSON summary text with a fixed key order."""
    summary = {
        "tokens": histogram.total,
        "quadrant_counts": {q.value: histogram.counts[q] for q in Quadrant},
        "quadrant_fractions": {q.value: histogram.fractions[q] for q in Quadrant},
        "thresholds": {
            "mode": histogram.thresholds.mode,
            "tau_h": histogram.thresholds.tau_h,
            "tau_d": histogram.thresholds.tau_d,
        },
        "teacher_entropy_mean": None if teacher_entropy is None else teacher_entropy[0],
        "teacher_entropy_std": None if teacher_entropy is None else teacher_entropy[1],
        "masks": [
            {
                "strategy": mask.strategy,
                "rho": mask.rho,
                "seed": mask.seed,
                "retained": len(mask.retained),
            }
            for mask in masks
        ],
    }
    return json.dumps(summary, indent=2) + "\n"


def emit_report(
    metrics: Sequence[TokenMetrics],
    histogram: QuadrantHistogram,
    masks: Sequence[SelectionMask],
    destination: str | Path,
    *,
    teacher_entropy: tuple[float, float] | None = None,
    stem: str = "report",
) -> ReportPaths:
    """Write ``<stem>.tokens.csv`` and ``<stem>.summary.json`` under
    ``destination`` (created if absent) and return their paths."""
    dest = Path(destination)
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create {dest}: {exc}") from exc
    tokens_path = dest / f"{stem}.tokens.csv"
    summary_path = dest / f"{stem}.summary.json"
    write_atomic(tokens_path, render_token_csv(metrics, masks))
    write_atomic(summary_path, render_summary(histogram, masks, teacher_entropy))
    return ReportPaths(tokens_csv=tokens_path, summary_json=summary_path)


def render_mask(mask: SelectionMask) -> str:
    """JSON text for one selection mask, echoing its provenance."""
    obj = {
        "strategy": mask.strategy,
        "rho": mask.rho,
        "seed": mask.seed,
        "total": mask.total,
        "retained": list(mask.retained),
    }
    return json.dumps(obj, indent=2) + "\n"


def write_mask(mask: SelectionMask, dest: str | Path) -> Path:
    path = Path(dest)
    write_atomic(path, render_mask(mask))
    return path
