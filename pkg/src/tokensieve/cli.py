"""Command-line surface.

Subcommands::

    analyze <records> [--thresholds median|fixed:TH,TD] [--batch-by rollout_id]
    select <records> --strategy S --rho R [--seed N] [--batch-by rollout_id]
    select-scores <scores> --strategy S --rho R [--seed N]
    simulate --config <file>
    oracle-check [--seeds N]

Outputs land in --out (default: $TOKENSIEVE_OUT or the current
directory).  Errors print ``tokensieve: error: category=<cat>: <msg>`` on
stderr and exit with a category-specific code: 2 usage, 3 invalid input,
4 I/O, 5 record data (parse/validation/schema), 6 configuration,
1 failed checks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .dist import TokenRecord, teacher_entropy_stats
from .errors import (
    ConfigurationError,
    InvalidInputError,
    OutputError,
    TokenSieveError,
)
from .oracle import blind_spot_demo, quadrant_ordering_demo
from .records import parse_records, write_atomic
from .report import emit_report, write_mask
from .rng import make_rng
from .scoring import TokenMetrics, score_batch
from .selection import (
    STRATEGIES,
    STRATEGY_ALL,
    bottomk_by_score,
    build_mask,
    topk_by_score,
    weighted_sample_without_replacement,
)
from .sim import CURVE_COLUMNS, SimConfig, run_experiment
from .taxonomy import QuadrantThresholds, attach_quadrants, quadrant_histogram

ENV_OUT_DIR = "TOKENSIEVE_OUT"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2

_CATEGORY_EXIT_CODES = {
    "invalid-input": 3,
    "dimension": 3,
    "empty-input": 3,
    "empty-selection": 3,
    "biased-estimator": 3,
    "io": 4,
    "parse": 5,
    "validation": 5,
    "schema": 5,
    "configuration": 6,
}


def _parse_thresholds(text: str) -> QuadrantThresholds:
    if text == "median":
        return QuadrantThresholds.batch_median()
    if text.startswith("fixed:"):
        parts = text[len("fixed:") :].split(",")
        if len(parts) != 2:
            raise InvalidInputError(f"expected fixed:TAU_H,TAU_D, got {text!r}")
        try:
            tau_h, tau_d = (float(p) for p in parts)
        except ValueError as exc:
            raise InvalidInputError(f"thresholds must be numbers: {text!r}") from exc
        return QuadrantThresholds.fixed(tau_h, tau_d)
    raise InvalidInputError(f"--thresholds must be 'median' or 'fixed:TAU_H,TAU_D', got {text!r}")


def _group_indices(records: list[TokenRecord], batch_by: str | None) -> list[list[int]]:
    """Indices of each normalisation scope, in first-appearance order."""
    if batch_by is None:
        return [list(range(len(records)))]
    if batch_by != "rollout_id":
        raise InvalidInputError(f"--batch-by supports only 'rollout_id', got {batch_by!r}")
    groups: dict[str | None, list[int]] = {}
    for i, rec in enumerate(records):
        groups.setdefault(rec.rollout_id, []).append(i)
    return list(groups.values())


def _score_groups(records: list[TokenRecord], batch_by: str | None) -> list[TokenMetrics]:
    """Score each scope separately, results back in file order."""
    out: list[TokenMetrics | None] = [None] * len(records)
    for indices in _group_indices(records, batch_by):
        scored = score_batch([records[i] for i in indices])
        for i, m in zip(indices, scored):
            out[i] = m
    return out  # type: ignore[return-value]


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(ENV_OUT_DIR) or "."
    path = Path(out)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _cmd_analyze(args) -> int:
    records = parse_records(args.records)
    metrics = _score_groups(records, args.batch_by)
    thresholds = _parse_thresholds(args.thresholds)
    labeled = attach_quadrants(metrics, thresholds)
    histogram = quadrant_histogram(metrics, thresholds)
    stats = teacher_entropy_stats(records)
    paths = emit_report(
        labeled, histogram, [], _out_dir(args), teacher_entropy=stats, stem=args.stem
    )
    print(paths.tokens_csv)
    print(paths.summary_json)
    return EXIT_OK


def _cmd_select(args) -> int:
    if args.strategy not in STRATEGIES or args.strategy == STRATEGY_ALL:
        raise InvalidInputError(
            f"--strategy must be one of {[s for s in STRATEGIES if s != STRATEGY_ALL]}"
        )
    records = parse_records(args.records)
    groups = _group_indices(records, args.batch_by)
    metrics = _score_groups(records, args.batch_by)
    out = _out_dir(args) / f"mask_{args.strategy}.json"
    if len(groups) == 1:
        mask = build_mask(metrics, args.strategy, args.rho, args.seed)
        write_mask(mask, out)
    else:
        # Per-group budgets do not generally satisfy the single-batch
        # budget invariant, so emit the union with its provenance.
        retained: list[int] = []
        for indices in groups:
            mask = build_mask([metrics[i] for i in indices], args.strategy, args.rho, args.seed)
            retained.extend(indices[p] for p in mask.retained)
        write_atomic(
            out,
            json.dumps(
                {
                    "strategy": args.strategy,
                    "rho": args.rho,
                    "seed": args.seed,
                    "total": len(records),
                    "grouped_by": args.batch_by,
                    "retained": sorted(retained),
                },
                indent=2,
            )
            + "\n",
        )
    print(out)
    return EXIT_OK


def _read_scores(path: str) -> list[float]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh]
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    scores = []
    for n, ln in enumerate(lines, start=1):
        if not ln:
            continue
        try:
            scores.append(float(ln))
        except ValueError as exc:
            raise InvalidInputError(f"scores line {n}: not a number: {ln!r}") from exc
    return scores


def _cmd_select_scores(args) -> int:
    """Selection over a raw score vector (the bindings surface)."""
    scores = _read_scores(args.scores)
    strategy = args.strategy
    if strategy in ("softor-topk", "q3-topk", "div-topk"):
        mask = topk_by_score(scores, args.rho, strategy=strategy)
    elif strategy == "softor-bottomk":
        mask = bottomk_by_score(scores, args.rho, strategy=strategy)
    elif strategy == "entropy-sample":
        if args.seed is None:
            raise InvalidInputError("entropy-sample requires --seed")
        mask = weighted_sample_without_replacement(scores, args.rho, args.seed)
    else:
        raise InvalidInputError(
            f"--strategy must be one of {[s for s in STRATEGIES if s != STRATEGY_ALL]}"
        )
    out = _out_dir(args) / f"mask_{strategy}.json"
    write_mask(mask, out)
    print(out)
    return EXIT_OK


_SIM_KEYS = {
    "vocab_size": int,
    "rollout_length": int,
    "rollouts_per_step": int,
    "learning_rate": float,
    "steps": int,
    "strategy": str,
    "rho": float,
    "seed": int,
    "planted_q3": lambda s: s.lower() in ("1", "true", "yes"),
}


def parse_sim_config(path: str | Path) -> SimConfig:
    """Parse a key=value simulator config file ('#' starts a comment)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc}") from exc
    values = {}
    for n, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {n}: expected key = value, got {line!r}")
        key, _, val = (part.strip() for part in line.partition("="))
        if key not in _SIM_KEYS:
            raise ConfigurationError(f"config line {n}: unknown key {key!r}")
        try:
            values[key] = _SIM_KEYS[key](val)
        except ValueError as exc:
            raise ConfigurationError(f"config line {n}: bad value for {key!r}: {val!r}") from exc
    return SimConfig(**values)


def render_curve_csv(result) -> str:
    lines = [",".join(CURVE_COLUMNS)]
    for row in result.rows:
        lines.append(
            ",".join(
                [
                    str(row.step),
                    row.strategy,
                    repr(row.rho),
                    str(row.seed),
                    repr(row.masked_loss),
                    repr(row.full_loss),
                    repr(row.all_context_loss),
                    repr(row.q1),
                    repr(row.q2),
                    repr(row.q3),
                    repr(row.q4),
                    str(row.retained),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def _cmd_simulate(args) -> int:
    config = parse_sim_config(args.config)
    result = run_experiment(config)
    out = _out_dir(args) / "learning_curve.csv"
    write_atomic(out, render_curve_csv(result))
    print(out)
    print(
        f"strategy={config.strategy} rho={config.rho} seed={config.seed} "
        f"initial_loss={result.initial_all_context_loss:.6f} "
        f"final_loss={result.final_all_context_loss:.6f}"
    )
    return EXIT_OK


def _planted_demo_metrics(seed: int) -> list[TokenMetrics]:
    """Random metrics batch with one overconfident and one solved token
    planted, for the blind-spot sweep."""
    rng = make_rng(seed)
    n = 16
    h_hat = rng.uniform(0.1, 1.0, n)
    delta_hat = rng.uniform(0.1, 1.0, n)
    h_hat[0], delta_hat[0] = 0.01, 0.9
    h_hat[1], delta_hat[1] = 0.01, 0.01
    out = []
    for i in range(n):
        hh, dh = float(h_hat[i]), float(delta_hat[i])
        fwd = dh * 3.0
        out.append(
            TokenMetrics(
                position=i,
                h=hh,
                delta_rev=dh * 2.0,
                delta_fwd=fwd,
                h_hat=hh,
                delta_hat=dh,
                conf=1.0 - hh,
                softor=hh + dh - hh * dh,
                q3_score=fwd * (1.0 - hh),
            )
        )
    return out


def _cmd_oracle_check(args) -> int:
    failures = 0

    def check(name: str, fn) -> None:
        nonlocal failures
        try:
            fn()
            print(f"PASS {name}")
        except TokenSieveError as exc:
            failures += 1
            print(f"FAIL {name}: {exc}")

    check("quadrant-ordering", quadrant_ordering_demo)

    def blind_spot_sweep():
        for seed in range(args.seeds):
            blind_spot_demo(_planted_demo_metrics(seed))

    check(f"blind-spot-sweep[{args.seeds} seeds]", blind_spot_sweep)

    def weight_optimality():
        from .oracle import OracleInstance, descent_bound, oracle_weight

        rng = make_rng(7)
        for _ in range(10):
            inst = OracleInstance(
                align=rng.uniform(-2.0, 2.0, 6),
                sq_norm=rng.uniform(0.5, 3.0, 6),
                step_size=float(rng.uniform(0.8, 1.5)),
                smoothness=float(rng.uniform(0.8, 1.5)),
            )
            w_star = oracle_weight(inst)
            best = descent_bound(inst, w_star)
            for _ in range(50):
                other = w_star + rng.normal(0.0, 0.5, w_star.size)
                if descent_bound(inst, other) < best - 1e-9:
                    raise ConfigurationError("found a weight vector below the closed form")

    check("weight-optimality-spot-check", weight_optimality)

    print(f"{'OK' if failures == 0 else 'FAILED'}: {3 - failures}/3 checks passed")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tokensieve",
        description="Token-importance metrics, taxonomy, and budgeted selection",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common_out = argparse.ArgumentParser(add_help=False)
    common_out.add_argument(
        "--out", default=None, help=f"output directory (default: ${ENV_OUT_DIR} or '.')"
    )

    p = sub.add_parser("analyze", parents=[common_out], help="score a record file and emit reports")
    p.add_argument("records", help="record file path")
    p.add_argument("--thresholds", default="median", help="median | fixed:TAU_H,TAU_D")
    p.add_argument("--batch-by", default=None, help="group normalisation scopes (rollout_id)")
    p.add_argument("--stem", default="report", help="output file stem")
    p.set_defaults(fn=_cmd_analyze)

    p = sub.add_parser("select", parents=[common_out], help="build a selection mask from records")
    p.add_argument("records", help="record file path")
    p.add_argument("--strategy", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--batch-by", default=None)
    p.set_defaults(fn=_cmd_select)

    p = sub.add_parser(
        "select-scores",
        parents=[common_out],
        help="build a selection mask from a raw score file (one float per line)",
    )
    p.add_argument("scores", help="score file path")
    p.add_argument("--strategy", required=True)
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=_cmd_select_scores)

    p = sub.add_parser("simulate", parents=[common_out], help="run the toy distillation simulator")
    p.add_argument("--config", required=True, help="key=value config file")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("oracle-check", help="run the theory demo suite")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(fn=_cmd_oracle_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except TokenSieveError as exc:
        print(f"tokensieve: error: category={exc.category}: {exc}", file=sys.stderr)
        return _CATEGORY_EXIT_CODES.get(exc.category, 1)


if __name__ == "__main__":
    sys.exit(main())
