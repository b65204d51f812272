"""Cumulative error approximation and budget-constrained cache planning.

A schedule walks from timestep ``T`` to timestep ``1`` in ``N_c`` hops; each
hop of length ``n`` landing on timestep ``t`` costs the cumulative error
stored at cell ``(t, n)``. Both endpoints are computed, so a schedule performs ``N_c + 1``
model evaluations.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .error_model import ErrorMatrix, _check_intervals, structural_absence
from .errors import (
    ContractError,
    InfeasibleError,
    InstanceTooLargeError,
    IntervalLookupError,
)

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True, eq=False)
class CumulativeErrorMatrix:
    """Cumulative cost grid; row ``r`` is timestep ``T - r`` and NaN means absent."""

    total_steps: int
    intervals: tuple[int, ...]
    cumulative: np.ndarray
    weights: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "intervals", _check_intervals(self.intervals))
        T, K = self.total_steps, len(self.intervals)
        grid = np.array(self.cumulative, dtype=float)
        if grid.shape != (T, K):
            raise ContractError(f"cumulative grid must be {T}x{K}, got {grid.shape}")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != K or not all(w > 0 and math.isfinite(w) for w in weights):
            raise ContractError(f"need {K} positive finite weights, got {weights}")
        absent = np.isnan(grid)
        if (structural_absence(T, self.intervals) & ~absent).any():
            raise ContractError("cells with t + n > T must be absent")
        defined = grid[~absent]
        if not np.isfinite(defined).all() or (defined < 0).any():
            raise ContractError("defined costs must be finite and non-negative")
        grid.setflags(write=False)
        object.__setattr__(self, "cumulative", grid)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_costs(cls, costs, intervals: Sequence[int], weights=None) -> "CumulativeErrorMatrix":
        """Wrap an arbitrary non-negative cost grid; cells with ``t + n > T`` are masked."""
        grid = np.array(costs, dtype=float)
        intervals = _check_intervals(intervals)
        grid[structural_absence(grid.shape[0], intervals)] = np.nan
        if weights is None:
            weights = (1.0,) * len(intervals)
        return cls(grid.shape[0], intervals, grid, tuple(weights))

    def column_index(self, n: int) -> int:
        try:
            return self.intervals.index(n)
        except ValueError:
            raise IntervalLookupError(f"interval {n} not in candidate set {self.intervals}") from None

    def cell(self, t: int, n: int) -> float | None:
        if not 1 <= t <= self.total_steps:
            raise ContractError(f"timestep {t} outside [1, {self.total_steps}]")
        value = self.cumulative[self.total_steps - t, self.column_index(n)]
        return None if math.isnan(value) else float(value)

    def scaled(self, factor: float) -> "CumulativeErrorMatrix":
        return CumulativeErrorMatrix(self.total_steps, self.intervals, self.cumulative * factor, self.weights)


def _resolve_weights(intervals: tuple[int, ...], weights) -> tuple[float, ...]:
    if weights is None:
        return (1.0,) * len(intervals)
    if isinstance(weights, Mapping):
        missing = [n for n in intervals if n not in weights]
        if missing:
            raise ContractError(f"no weight given for intervals {missing}")
        weights = [weights[n] for n in intervals]
    weights = tuple(float(w) for w in weights)
    if len(weights) != len(intervals):
        raise ContractError(f"expected {len(intervals)} weights, got {len(weights)}")
    bad = [w for w in weights if not (w > 0 and math.isfinite(w))]
    if bad:
        raise ContractError(f"weights must be positive, got {bad}")
    return weights


def cumulative(matrix: ErrorMatrix, weights=None) -> CumulativeErrorMatrix:
    """Weighted running sum of the prior along the denoising axis (T down to t).

    ``weights`` is a mapping ``{interval: w}`` or a sequence aligned with
    ``matrix.intervals``; the default is 1 for every interval.
    """
    w = _resolve_weights(matrix.intervals, weights)
    absent = np.isnan(matrix.mean)
    running = np.cumsum(np.where(absent, 0.0, matrix.mean), axis=0) * np.asarray(w)[None, :]
    return CumulativeErrorMatrix(
        total_steps=matrix.total_steps,
        intervals=matrix.intervals,
        cumulative=np.where(absent, np.nan, running),
        weights=w,
    )


@dataclass(frozen=True)
class CacheSchedule:
    """Ordered hop lengths from timestep ``T`` down to timestep ``1``."""

    total_steps: int
    intervals: tuple[int, ...]
    candidates: tuple[int, ...] | None = None
    weights: tuple[float, ...] | None = None
    total_cost: float | None = None

    def __post_init__(self):
        T = self.total_steps
        if not isinstance(T, (int, np.integer)) or T < 2:
            raise ContractError(f"total_steps must be an integer >= 2, got {T!r}")
        hops = tuple(int(n) for n in self.intervals)
        if not hops:
            raise ContractError("a schedule needs at least one interval")
        if any(n < 1 for n in hops):
            raise ContractError(f"intervals must be positive, got {hops}")
        if sum(hops) != T - 1:
            raise ContractError(f"intervals sum to {sum(hops)}, expected T - 1 = {T - 1}")
        object.__setattr__(self, "intervals", hops)
        if self.candidates is not None:
            cands = tuple(sorted({int(n) for n in self.candidates}))
            stray = sorted(set(hops) - set(cands))
            if stray:
                raise ContractError(f"intervals {stray} are not in the candidate set {cands}")
            object.__setattr__(self, "candidates", cands)
        if self.weights is not None:
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        if self.total_cost is not None:
            object.__setattr__(self, "total_cost", float(self.total_cost))

    @property
    def num_caching(self) -> int:
        return len(self.intervals)

    @property
    def compute_steps(self) -> tuple[int, ...]:
        steps = [self.total_steps]
        for n in self.intervals:
            steps.append(steps[-1] - n)
        return tuple(steps)

    @property
    def hops(self) -> list[tuple[int, int]]:
        """``(arrival_timestep, interval)`` for each hop."""
        return [(t, n) for t, n in zip(self.compute_steps[1:], self.intervals)]

    def with_cost(self, cumulative_matrix: CumulativeErrorMatrix) -> "CacheSchedule":
        return CacheSchedule(
            self.total_steps,
            self.intervals,
            self.candidates,
            cumulative_matrix.weights,
            schedule_cost(self, cumulative_matrix),
        )


@dataclass(frozen=True, eq=False)
class DPTable:
    """``cost[t, j]``: least cost reaching timestep ``t`` with ``j`` hops (inf if unreachable).

    ``choice[t, j]`` is the interval of the last hop on that optimum, 0 if none.
    """

    cost: np.ndarray
    choice: np.ndarray

    def predecessor(self, t: int, j: int) -> tuple[int, int] | None:
        n = int(self.choice[t, j])
        return None if n == 0 else (t + n, n)


def solve_dp(cumulative_matrix: CumulativeErrorMatrix, num_caching: int, candidates: Sequence[int]) -> DPTable:
    T = cumulative_matrix.total_steps
    cost = np.full((T + 1, num_caching + 1), np.inf)
    choice = np.zeros((T + 1, num_caching + 1), dtype=np.int64)
    cost[T, 0] = 0.0

    # hop_cost[k][t] = cumulative cost of a hop of n_k landing on t, inf where absent
    hop_cost = []
    for n in candidates:
        col = np.full(T + 1, np.inf)
        values = cumulative_matrix.cumulative[::-1, cumulative_matrix.column_index(n)]
        col[1:] = np.where(np.isnan(values), np.inf, values)
        hop_cost.append(col)

    for j in range(num_caching):
        prev = cost[:, j]
        best = cost[:, j + 1]
        arg = choice[:, j + 1]
        # Ascending n with strict improvement: ties keep the smaller interval.
        for n, col in zip(candidates, hop_cost):
            if n >= T:
                break
            cand = np.full(T + 1, np.inf)
            cand[1 : T - n + 1] = prev[1 + n :] + col[1 : T - n + 1]
            better = cand < best
            best[better] = cand[better]
            arg[better] = n
    return DPTable(cost=cost, choice=choice)


def _plan_inputs(cumulative_matrix, num_caching, candidates):
    T = cumulative_matrix.total_steps
    if candidates is None:
        candidates = cumulative_matrix.intervals
    cands = tuple(sorted({int(n) for n in candidates}))
    if not cands:
        raise ContractError("candidate set is empty")
    for n in cands:
        cumulative_matrix.column_index(n)
    if not isinstance(num_caching, (int, np.integer)) or not 1 <= num_caching <= T - 1:
        raise InfeasibleError(
            f"no schedule exists for T={T}, N_c={num_caching}, candidates={list(cands)}: "
            f"N_c must lie in [1, {T - 1}]"
        )
    return T, int(num_caching), cands


def dp_plan(
    cumulative_matrix: CumulativeErrorMatrix, num_caching: int, candidates: Sequence[int] | None = None
) -> CacheSchedule:
    """Minimum-cost schedule with exactly ``num_caching`` hops."""
    T, N_c, cands = _plan_inputs(cumulative_matrix, num_caching, candidates)
    table = solve_dp(cumulative_matrix, N_c, cands)
    total = table.cost[1, N_c]
    if not math.isfinite(total):
        raise InfeasibleError(
            f"no schedule exists for T={T}, N_c={N_c}, candidates={list(cands)} "
            "(no composition of T-1 avoids absent cells)"
        )
    hops = []
    t = 1
    for j in range(N_c, 0, -1):
        t_prev, n = table.predecessor(t, j)
        hops.append(n)
        t = t_prev
    if t != T:  # pragma: no cover - guarded by the finite cost above
        raise AssertionError("backtracking did not return to the first timestep")
    return CacheSchedule(T, tuple(reversed(hops)), cands, cumulative_matrix.weights, float(total))


def count_compositions(total: int, parts: int, candidates: Sequence[int]) -> int:
    """Number of ordered ways to write ``total`` as ``parts`` members of ``candidates``."""
    cands = tuple(sorted(set(candidates)))

    @lru_cache(maxsize=None)
    def ways(rem: int, k: int) -> int:
        if k == 0:
            return int(rem == 0)
        return sum(ways(rem - n, k - 1) for n in cands if n <= rem)

    return ways(total, parts)


def brute_force_plan(
    cumulative_matrix: CumulativeErrorMatrix,
    num_caching: int,
    candidates: Sequence[int] | None = None,
    limit: int = BRUTE_FORCE_LIMIT,
) -> CacheSchedule:
    """Exhaustive search over every composition; ties go to the lexicographically smallest."""
    T, N_c, cands = _plan_inputs(cumulative_matrix, num_caching, candidates)
    n_total = count_compositions(T - 1, N_c, cands)
    if n_total > limit:
        raise InstanceTooLargeError(f"{n_total} compositions exceed the enumeration limit of {limit}")

    # cost[t][n] as plain Python floats (None when absent)
    cost = {
        n: [None] + [cumulative_matrix.cell(t, n) for t in range(1, T + 1)] for n in cands
    }
    lo, hi = cands[0], cands[-1]
    best_cost = math.inf
    best_seq: tuple[int, ...] | None = None
    seq: list[int] = []

    def search(t: int, hops_left: int, acc: float) -> None:
        nonlocal best_cost, best_seq
        if hops_left == 0:
            if t == 1 and acc < best_cost:
                best_cost, best_seq = acc, tuple(seq)
            return
        for n in cands:
            nt = t - n
            rest = nt - 1
            if rest < (hops_left - 1) * lo:
                break
            if rest > (hops_left - 1) * hi:
                continue
            c = cost[n][nt]
            if c is None:
                continue
            seq.append(n)
            search(nt, hops_left - 1, acc + c)
            seq.pop()

    search(T, N_c, 0.0)
    if best_seq is None:
        raise InfeasibleError(
            f"no schedule exists for T={T}, N_c={N_c}, candidates={list(cands)}"
        )
    return CacheSchedule(T, best_seq, cands, cumulative_matrix.weights, best_cost)


def schedule_cost(schedule: CacheSchedule, cumulative_matrix: CumulativeErrorMatrix) -> float:
    if schedule.total_steps != cumulative_matrix.total_steps:
        raise ContractError(
            f"schedule has {schedule.total_steps} steps, matrix has {cumulative_matrix.total_steps}"
        )
    total = 0.0
    for t, n in schedule.hops:
        c = cumulative_matrix.cell(t, n)
        if c is None:
            raise InfeasibleError(f"cost cell (t={t}, n={n}) is absent")
        total += c
    return total


def uniform_schedule(
    total_steps: int, interval: int, cumulative_matrix: CumulativeErrorMatrix | None = None
) -> CacheSchedule:
    """Fixed-interval baseline; a shorter final hop absorbs any remainder."""
    if interval < 1 or interval >= total_steps:
        raise ContractError(f"interval must lie in [1, T - 1] = [1, {total_steps - 1}], got {interval}")
    full, rest = divmod(total_steps - 1, interval)
    hops = (interval,) * full + ((rest,) if rest else ())
    schedule = CacheSchedule(total_steps, hops)
    return schedule.with_cost(cumulative_matrix) if cumulative_matrix is not None else schedule


def linear_schedule(
    total_steps: int,
    start_interval: int,
    end_interval: int,
    cumulative_matrix: CumulativeErrorMatrix | None = None,
) -> CacheSchedule:
    """Baseline whose hop length moves linearly from ``start_interval`` (at T) to ``end_interval``."""
    if start_interval < 1 or end_interval < 1:
        raise InfeasibleError(
            f"interval endpoints must be >= 1, got {start_interval} and {end_interval}"
        )
    if total_steps < 2:
        raise InfeasibleError(f"T must be >= 2, got {total_steps}")
    span = total_steps - 1
    hops = []
    t = total_steps
    while t > 1:
        progress = (total_steps - t) / span
        length = math.floor(start_interval + (end_interval - start_interval) * progress + 0.5)
        length = min(max(length, 1), t - 1)
        hops.append(length)
        t -= length
    schedule = CacheSchedule(total_steps, tuple(hops))
    return schedule.with_cost(cumulative_matrix) if cumulative_matrix is not None else schedule
