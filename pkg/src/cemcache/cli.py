"""Command-line entry point: ``cemcache {model,plan,eval,sweep,bound}``.

Payloads go to ``--out`` (or standard output); status lines go to standard
error. Exit status: 0 success, 1 contract or infeasibility failure, 2 I/O or
parse failure.
"""
from __future__ import annotations

import argparse
import sys
import time
from typing import Sequence

from . import __version__
from .error_model import DEFAULT_INTERVALS, build_error_matrix, hoeffding_bound
from .errors import CemError, ParseError
from .evaluate import fidelity, spearman, sweep_random_schedules
from .scheduler import (
    brute_force_plan,
    cumulative,
    dp_plan,
    linear_schedule,
    uniform_schedule,
)
from .store import (
    format_error_matrix,
    format_report_csv,
    format_schedule,
    read_error_matrix,
    read_schedule,
    atomic_write_text,
)
from .surrogate import ExecutionMode, SurrogateConfig, make_surrogate, run_cached, run_full

EXIT_OK, EXIT_CONTRACT, EXIT_IO = 0, 1, 2

EVAL_HEADER = (
    "schedule_id",
    "num_caching",
    "terminal_cosine_distance",
    "terminal_relative_l2",
    "mean_step_output_distance",
    "max_step_output_distance",
)
SWEEP_HEADER = ("schedule_id", "total_cost", "terminal_cosine_distance")


class CliError(CemError):
    """Bad flag values detected after argparse (exit status 1)."""


def parse_int_list(text: str) -> tuple[int, ...]:
    """Parse ``"1..9"``, ``"1,2,4"`` or a mix like ``"1..3,5"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError(f"empty integer list {text!r}")
    return tuple(out)


def _int_list_arg(text: str) -> tuple[int, ...]:
    try:
        return parse_int_list(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer list {text!r}") from None


def _float_list_arg(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number list {text!r}") from None


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _status(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(args, text: str) -> None:
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


def _surrogate_from(args, total_steps: int):
    return make_surrogate(
        SurrogateConfig(
            dimension=args.dim,
            total_steps=total_steps,
            seed=args.model_seed,
            nonlinearity_scale=args.scale,
        )
    )


def cmd_model(args) -> int:
    if args.samples < 1:
        raise CliError(f"--samples must be >= 1, got {args.samples}")
    surrogate = _surrogate_from(args, args.steps)
    start = time.perf_counter()
    trajectories = [run_full(surrogate, args.seed + i) for i in range(args.samples)]
    matrix = build_error_matrix(trajectories, args.intervals)
    elapsed = time.perf_counter() - start
    _emit(args, format_error_matrix(matrix))
    _status(
        f"modelled {matrix.total_steps}x{len(matrix.intervals)} error matrix from "
        f"{matrix.num_samples} samples in {elapsed:.3f}s; "
        f"payload {matrix.payload_bytes() / 1024:.2f} KB at 16-bit"
    )
    return EXIT_OK


def _resolve_budget(args, total_steps: int) -> int:
    if args.speedup is not None:
        if args.speedup <= 0:
            raise CliError(f"--speedup must be > 0, got {args.speedup}")
        budget = int(total_steps / args.speedup + 0.5) - 1
        _status(f"speedup {args.speedup:g} on {total_steps} steps -> N_c = {budget}")
        return budget
    return args.budget


def cmd_plan(args) -> int:
    matrix = read_error_matrix(args.matrix)
    weights = None
    if args.weights is not None:
        if len(args.weights) != len(matrix.intervals):
            raise CliError(
                f"--weights needs {len(matrix.intervals)} values (one per interval), got {len(args.weights)}"
            )
        weights = args.weights
    cum = cumulative(matrix, weights)
    budget = _resolve_budget(args, matrix.total_steps)

    start = time.perf_counter()
    schedule = dp_plan(cum, budget, args.candidates)
    elapsed = time.perf_counter() - start
    _emit(args, format_schedule(schedule))
    _status(
        f"plan: N_c={schedule.num_caching}, {len(schedule.compute_steps)} compute steps, "
        f"cost {schedule.total_cost!r}, solved in {elapsed * 1000:.2f} ms"
    )
    if args.oracle:
        oracle = brute_force_plan(cum, budget, args.candidates)
        scale = max(abs(oracle.total_cost), abs(schedule.total_cost), 1e-300)
        if abs(oracle.total_cost - schedule.total_cost) > 1e-9 * scale:
            _status(f"oracle MISMATCH: dp {schedule.total_cost!r} vs brute force {oracle.total_cost!r}")
            return EXIT_CONTRACT
        _status(f"oracle agreement: brute force cost {oracle.total_cost!r}")
    return EXIT_OK


def _parse_baseline(text: str, total_steps: int):
    kind, _, params = text.partition(":")
    try:
        if kind == "uniform":
            return uniform_schedule(total_steps, int(params))
        if kind == "linear":
            a, b = (int(v) for v in params.split(","))
            return linear_schedule(total_steps, a, b)
    except ValueError:
        pass
    raise CliError(f"bad --baseline {text!r}; use uniform:<n> or linear:<a>,<b>")


def evaluate_schedules(surrogate, init_seed: int, schedules, mode) -> list[list[float]]:
    """One report row per schedule, all executed from the same initial state."""
    reference = run_full(surrogate, init_seed)
    rows = []
    for i, schedule in enumerate(schedules):
        report = fidelity(run_cached(surrogate, init_seed, schedule, mode), reference)
        rows.append(
            [
                i,
                schedule.num_caching,
                report.terminal_cosine_distance,
                report.terminal_relative_l2,
                report.mean_step_distance,
                report.max_step_distance,
            ]
        )
    return rows


def cmd_eval(args) -> int:
    schedule = read_schedule(args.schedule)
    if args.steps is not None and args.steps != schedule.total_steps:
        raise CliError(f"schedule covers {schedule.total_steps} steps but --steps is {args.steps}")
    mode = {"reuse": ExecutionMode.REUSE, "predict1": ExecutionMode.PREDICT_ORDER1}[args.mode]
    surrogate = _surrogate_from(args, schedule.total_steps)
    schedules = [schedule] + [_parse_baseline(b, schedule.total_steps) for b in args.baseline]
    rows = evaluate_schedules(surrogate, args.seed, schedules, mode)
    _emit(args, format_report_csv(EVAL_HEADER, rows))
    labels = ["schedule"] + list(args.baseline)
    for label, row in zip(labels, rows):
        _status(f"[{row[0]}] {label}: N_c={row[1]} terminal cosine distance {row[2]:.6g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    matrix = read_error_matrix(args.matrix)
    cum = cumulative(matrix)
    surrogate = _surrogate_from(args, matrix.total_steps)
    if args.count < 2:
        raise CliError(f"--count must be >= 2, got {args.count}")
    result = sweep_random_schedules(
        cum, surrogate, args.seed, args.budget, args.candidates, args.count, args.seed
    )
    if result.reduced:
        _status(f"warning: only {len(result.records)} distinct schedules exist")
    try:
        rho = spearman(result.costs, result.distances)
        summary = f"# spearman,{rho!r}"
        _status(f"spearman(cost, terminal distance) = {rho:.4f} over {len(result.records)} schedules")
    except CemError as exc:
        summary = "# spearman,undefined"
        _status(f"warning: spearman undefined ({exc})")
    rows = [[r.schedule_id, r.total_cost, r.terminal_cosine_distance] for r in result.records]
    _emit(args, format_report_csv(SWEEP_HEADER, rows, [summary]))
    return EXIT_OK


def cmd_bound(args) -> int:
    value = hoeffding_bound(args.delta, args.samples)
    sys.stdout.write(f"{value:.5g}\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_u64, default=0, help="base seed for all randomness (default 0)")
    common.add_argument("--out", help="output path (default: standard output)")

    model_flags = argparse.ArgumentParser(add_help=False)
    model_flags.add_argument("--dim", type=int, default=64, help="surrogate feature dimension")
    model_flags.add_argument("--model-seed", type=_u64, default=0, help="seed of the surrogate weights")
    model_flags.add_argument("--scale", type=float, default=1.0, help="surrogate nonlinearity scale")

    parser = argparse.ArgumentParser(prog="cemcache", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("model", parents=[common, model_flags], help="build an offline error matrix")
    p.add_argument("--samples", type=int, required=True)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--intervals", type=_int_list_arg, default=DEFAULT_INTERVALS)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("plan", parents=[common], help="solve for the minimum-error schedule")
    p.add_argument("--matrix", required=True)
    budget = p.add_mutually_exclusive_group(required=True)
    budget.add_argument("--budget", type=int, help="number of caching operations N_c")
    budget.add_argument("--speedup", type=float, help="target speedup s; N_c = round(T / s) - 1")
    p.add_argument("--weights", type=_float_list_arg, help="per-interval weights, in matrix order")
    p.add_argument("--candidates", type=_int_list_arg, help="restrict the candidate intervals")
    p.add_argument("--oracle", action="store_true", help="cross-check with exhaustive search")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("eval", parents=[common, model_flags], help="execute schedules on the surrogate")
    p.add_argument("--schedule", required=True)
    p.add_argument("--mode", choices=("reuse", "predict1"), default="reuse")
    p.add_argument("--steps", type=int, help="expected step count; must match the schedule")
    p.add_argument("--baseline", action="append", default=[], help="uniform:<n> or linear:<a>,<b>")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common, model_flags], help="cost vs fidelity over random schedules")
    p.add_argument("--matrix", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--candidates", type=_int_list_arg)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bound", parents=[common], help="Hoeffding deviation bound of the prior")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--samples", type=int, required=True)
    p.set_defaults(func=cmd_bound)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        _status(f"error: {exc}")
        return EXIT_IO
    except OSError as exc:
        _status(f"error: {exc}")
        return EXIT_IO
    except CemError as exc:
        _status(f"error: {exc}")
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
