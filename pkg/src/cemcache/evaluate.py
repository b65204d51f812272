"""Fidelity of cached runs, measured-vs-approximated error, and cost/fidelity sweeps."""
from __future__ import annotations

import math
import random
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .error_model import error_entry
from .errors import ContractError, DegenerateInputError, InfeasibleError
from .scheduler import CacheSchedule, CumulativeErrorMatrix, schedule_cost
from .surrogate import ExecutionMode, Surrogate, Trajectory, run_cached, run_full, run_with_compute_steps


@dataclass(frozen=True)
class FidelityReport:
    terminal_cosine_distance: float
    terminal_relative_l2: float
    per_step_output_distance: dict  # timestep -> cosine distance, reused steps only

    @property
    def mean_step_distance(self) -> float:
        d = self.per_step_output_distance
        return sum(d.values()) / len(d) if d else 0.0

    @property
    def max_step_distance(self) -> float:
        return max(self.per_step_output_distance.values(), default=0.0)


def fidelity(cached: Trajectory, reference: Trajectory) -> FidelityReport:
    if cached.outputs.shape != reference.outputs.shape:
        raise ContractError(
            f"trajectory shapes differ: {cached.outputs.shape} vs {reference.outputs.shape}"
        )
    if not reference.is_full:
        raise ContractError("the reference trajectory must be fully computed")
    a, b = cached.terminal_state, reference.terminal_state
    ref_norm = np.linalg.norm(b)
    if ref_norm == 0:
        raise DegenerateInputError("reference terminal state has zero norm")
    per_step = {}
    for row, t in enumerate(range(cached.total_steps, 0, -1)):
        if not cached.computed_mask[row]:
            per_step[t] = error_entry(cached.outputs[row], reference.outputs[row])
    return FidelityReport(
        terminal_cosine_distance=error_entry(a, b),
        terminal_relative_l2=float(np.linalg.norm(a - b) / ref_norm),
        per_step_output_distance=per_step,
    )


def _straight_compute_steps(total_steps: int, interval: int) -> range:
    return range(total_steps, 0, -interval)


def measure_accumulated_error(surrogate: Surrogate, init_seed: int, interval: int) -> np.ndarray:
    """Accumulated caching error of a straight ``interval``-step reuse run.

    Computes at T, T - n, T - 2n, ... and reuses in between. At every reuse
    step the cosine distance between the served output and the full run's
    output at that step is added to a running total. Returns the total after
    each timestep ``T - 1, ..., 1`` (length ``T - 1``).
    """
    if interval < 1:
        raise ContractError(f"interval must be >= 1, got {interval}")
    T = surrogate.total_steps
    reference = run_full(surrogate, init_seed)
    cached = run_with_compute_steps(
        surrogate, init_seed, _straight_compute_steps(T, interval), ExecutionMode.REUSE
    )
    step = np.zeros(T)
    for row in range(T):
        if not cached.computed_mask[row]:
            step[row] = error_entry(cached.outputs[row], reference.outputs[row])
    return np.cumsum(step)[1:]


def online_errors(surrogate: Surrogate, init_seed: int, interval: int) -> np.ndarray:
    """Per-timestep error of the prior's definition, observed along a cached run.

    The run computes every ``interval`` steps with reuse, which moves its
    states away from the full run. At each state the model is also evaluated
    for measurement only; entry ``(t)`` is the cosine distance between the
    outputs at ``t`` and ``t + interval``. Indexed like matrix rows (T first),
    NaN where ``t + interval > T``.
    """
    if interval < 1:
        raise ContractError(f"interval must be >= 1, got {interval}")
    T = surrogate.total_steps
    cached = run_with_compute_steps(
        surrogate, init_seed, _straight_compute_steps(T, interval), ExecutionMode.REUSE
    )
    probe = [surrogate.output(cached.states[row], T - row) for row in range(T)]
    out = np.full(T, np.nan)
    for row in range(interval, T):
        out[row] = error_entry(probe[row], probe[row - interval])
    return out


@dataclass(frozen=True)
class SweepRecord:
    schedule_id: int
    total_cost: float
    terminal_cosine_distance: float
    intervals: tuple[int, ...]


@dataclass(frozen=True)
class SweepResult:
    records: tuple[SweepRecord, ...]
    reduced: bool  # fewer distinct schedules existed than were requested

    @property
    def costs(self) -> list[float]:
        return [r.total_cost for r in self.records]

    @property
    def distances(self) -> list[float]:
        return [r.terminal_cosine_distance for r in self.records]


class _CompositionSpace:
    """Compositions of T-1 into N_c hops whose cost cells are all defined, with ranked access."""

    def __init__(self, cumulative_matrix: CumulativeErrorMatrix, num_caching: int, candidates):
        self.T = cumulative_matrix.total_steps
        self.N_c = num_caching
        self.cands = tuple(sorted(set(candidates)))
        self.ok = {
            (t, n) for n in self.cands for t in range(1, self.T + 1)
            if cumulative_matrix.cell(t, n) is not None
        }
        self.ways = lru_cache(maxsize=None)(self._ways)

    def _ways(self, t: int, hops: int) -> int:
        if hops == 0:
            return int(t == 1)
        return sum(self.ways(t - n, hops - 1) for n in self.cands if (t - n, n) in self.ok)

    @property
    def size(self) -> int:
        return self.ways(self.T, self.N_c)

    def unrank(self, rank: int) -> tuple[int, ...]:
        seq = []
        t = self.T
        for hops in range(self.N_c, 0, -1):
            for n in self.cands:
                if (t - n, n) not in self.ok:
                    continue
                w = self.ways(t - n, hops - 1)
                if rank < w:
                    seq.append(n)
                    t -= n
                    break
                rank -= w
        return tuple(seq)


def sweep_random_schedules(
    cumulative_matrix: CumulativeErrorMatrix,
    surrogate: Surrogate,
    init_seed: int,
    budget: int,
    candidates: Sequence[int] | None,
    count: int,
    sweep_seed: int,
) -> SweepResult:
    """Score and execute ``count`` distinct random schedules of equal budget.

    Schedules are drawn uniformly without replacement from all valid
    compositions. If fewer than ``count`` exist, all of them are used and the
    result is flagged ``reduced``.
    """
    if count < 2:
        raise ContractError(f"count must be >= 2, got {count}")
    if cumulative_matrix.total_steps != surrogate.total_steps:
        raise ContractError("matrix and surrogate step counts differ")
    if candidates is None:
        candidates = cumulative_matrix.intervals
    space = _CompositionSpace(cumulative_matrix, budget, candidates)
    if space.size == 0:
        raise InfeasibleError(
            f"no schedule exists for T={space.T}, N_c={budget}, candidates={list(space.cands)}"
        )
    reduced = space.size < count
    if reduced:
        warnings.warn(f"only {space.size} distinct schedules exist; requested {count}", stacklevel=2)
        ranks = list(range(space.size))
    else:
        ranks = random.Random(sweep_seed).sample(range(space.size), count)

    reference = run_full(surrogate, init_seed)
    records = []
    for i, rank in enumerate(ranks):
        schedule = CacheSchedule(space.T, space.unrank(rank), space.cands)
        cached = run_cached(surrogate, init_seed, schedule, ExecutionMode.REUSE)
        records.append(
            SweepRecord(
                schedule_id=i,
                total_cost=schedule_cost(schedule, cumulative_matrix),
                terminal_cosine_distance=error_entry(cached.terminal_state, reference.terminal_state),
                intervals=schedule.intervals,
            )
        )
    return SweepResult(records=tuple(records), reduced=reduced)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Spearman rank correlation with mean ranks for ties."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 2:
        raise ContractError("spearman needs two equal-length sequences of length >= 2")
    rx, ry = rankdata(x), rankdata(y)
    if np.ptp(rx) == 0 or np.ptp(ry) == 0:
        raise DegenerateInputError("rank correlation is undefined for a constant sequence")
    rx -= rx.mean()
    ry -= ry.mean()
    rho = float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))
    return max(-1.0, min(1.0, rho))


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ContractError("pearson needs two equal-length sequences of length >= 2")
    x = x - x.mean()
    y = y - y.mean()
    denom = math.sqrt((x @ x) * (y @ y))
    if denom == 0:
        raise DegenerateInputError("correlation is undefined for a constant sequence")
    return float(x @ y / denom)


def relative_difference(approx: float, truth: float) -> float:
    if truth == 0:
        raise DegenerateInputError("relative difference is undefined when truth is 0")
    return abs(approx - truth) / abs(truth)
