"""Offline caching-error prior.

For every timestep ``t`` and cache interval ``n`` the prior holds the mean
(over sampled trajectories) of the cosine distance between the model output at
``t`` and the output at the earlier-executed step ``t + n``. Grids are laid out
like trajectories: row ``r`` is timestep ``T - r``. Cells with ``t + n > T``
have no earlier output to reuse and are stored as NaN (absent).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, DegenerateInputError, IntervalLookupError
from .surrogate import Trajectory

DEFAULT_INTERVALS = tuple(range(1, 10))


def structural_absence(total_steps: int, intervals: Sequence[int]) -> np.ndarray:
    """Boolean ``(T, K)`` grid, True where ``t + n > T``."""
    t = total_steps - np.arange(total_steps)[:, None]
    return t + np.asarray(intervals)[None, :] > total_steps


def _check_intervals(intervals) -> tuple[int, ...]:
    out = tuple(int(n) for n in intervals)
    if not out or any(n < 1 for n in out) or any(b <= a for a, b in zip(out, out[1:])):
        raise ContractError(f"intervals must be a non-empty strictly increasing list of positive integers, got {out}")
    return out


@dataclass(frozen=True, eq=False)
class ErrorMatrix:
    total_steps: int
    intervals: tuple[int, ...]
    mean: np.ndarray
    variance: np.ndarray
    num_samples: int

    def __post_init__(self):
        object.__setattr__(self, "intervals", _check_intervals(self.intervals))
        T, K = self.total_steps, len(self.intervals)
        mean = np.array(self.mean, dtype=float)
        var = np.array(self.variance, dtype=float)
        if mean.shape != (T, K) or var.shape != (T, K):
            raise ContractError(f"mean/variance must be {T}x{K}, got {mean.shape} and {var.shape}")
        if self.num_samples < 1:
            raise ContractError("num_samples must be >= 1")
        absent = np.isnan(mean)
        if not np.array_equal(absent, np.isnan(var)):
            raise ContractError("mean and variance must be absent in the same cells")
        if (structural_absence(T, self.intervals) & ~absent).any():
            raise ContractError("cells with t + n > T must be absent")
        m, v = mean[~absent], var[~absent]
        if not (np.isfinite(m).all() and np.isfinite(v).all()):
            raise ContractError("defined cells must be finite")
        if (m < 0).any() or (m > 2).any():
            raise ContractError("mean cells must lie in [0, 2]")
        if (v < 0).any():
            raise ContractError("variance cells must be non-negative")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "variance", var)

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.mean)

    @property
    def timesteps(self) -> np.ndarray:
        return np.arange(self.total_steps, 0, -1)

    def column_index(self, n: int) -> int:
        try:
            return self.intervals.index(n)
        except ValueError:
            raise IntervalLookupError(f"interval {n} not in candidate set {self.intervals}") from None

    def cell(self, t: int, n: int) -> float | None:
        """Mean error at (t, n), or None when the cell is absent."""
        if not 1 <= t <= self.total_steps:
            raise ContractError(f"timestep {t} outside [1, {self.total_steps}]")
        value = self.mean[self.total_steps - t, self.column_index(n)]
        return None if math.isnan(value) else float(value)

    def payload_bytes(self, itemsize: int = 2) -> int:
        """Size of the planner-facing payload: one mean per (t, n) cell at ``itemsize`` bytes."""
        return self.mean.size * itemsize

    def __eq__(self, other):
        if not isinstance(other, ErrorMatrix):
            return NotImplemented
        return (
            self.total_steps == other.total_steps
            and self.intervals == other.intervals
            and self.num_samples == other.num_samples
            and np.array_equal(self.mean, other.mean, equal_nan=True)
            and np.array_equal(self.variance, other.variance, equal_nan=True)
        )

    __hash__ = None


def error_entry(output_t, output_tn) -> float:
    """Cosine distance ``1 - <a, b> / (|a| |b|)``, clipped to [0, 2]."""
    a = np.asarray(output_t, dtype=float)
    b = np.asarray(output_tn, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ContractError(f"expected two equal-length vectors of length >= 2, got {a.shape} and {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise DegenerateInputError("cosine distance is undefined for a zero-norm vector")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def per_sample_errors(trajectory: Trajectory, intervals: Sequence[int] = DEFAULT_INTERVALS) -> np.ndarray:
    """``(T, K)`` grid of single-trajectory errors, NaN where ``t + n > T``."""
    intervals = _check_intervals(intervals)
    out = trajectory.outputs
    norms = np.linalg.norm(out, axis=1)
    if (norms == 0).any():
        t = trajectory.total_steps - int(np.argmax(norms == 0))
        raise DegenerateInputError(f"zero-norm model output at timestep {t}")
    unit = out / norms[:, None]
    T = trajectory.total_steps
    grid = np.full((T, len(intervals)), np.nan)
    for k, n in enumerate(intervals):
        if n < T:
            # row r is timestep T - r; timestep t + n is row r - n
            cos = np.einsum("ij,ij->i", unit[n:], unit[:-n])
            grid[n:, k] = np.clip(1.0 - cos, 0.0, 2.0)
    return grid


def build_error_matrix(
    trajectories: Sequence[Trajectory], intervals: Sequence[int] = DEFAULT_INTERVALS
) -> ErrorMatrix:
    trajectories = list(trajectories)
    if not trajectories:
        raise ContractError("at least one trajectory is required")
    intervals = _check_intervals(intervals)
    shape = trajectories[0].outputs.shape
    for i, traj in enumerate(trajectories):
        if traj.outputs.shape != shape:
            raise ContractError(f"trajectory {i} has shape {traj.outputs.shape}, expected {shape}")
        if not traj.is_full:
            raise ContractError(f"trajectory {i} contains reused steps; the prior needs fully computed runs")

    samples = [per_sample_errors(traj, intervals) for traj in trajectories]
    n = len(samples)
    # Canonical reduction: ascending sample index, two passes.
    total = np.zeros_like(samples[0])
    for grid in samples:
        total += grid
    mean = total / n
    spread = np.zeros_like(mean)
    for grid in samples:
        spread += (grid - mean) ** 2
    variance = spread / n
    return ErrorMatrix(
        total_steps=shape[0],
        intervals=intervals,
        mean=np.clip(mean, 0.0, 2.0),
        variance=variance,
        num_samples=n,
    )


@dataclass(frozen=True)
class IntervalStats:
    interval: int
    mean_of_means: float
    mean_variance: float
    min: float
    max: float
    defined_cells: int


def matrix_stats(matrix: ErrorMatrix) -> dict[int, IntervalStats]:
    """Per-interval summaries over defined cells (NaN for a fully absent column)."""
    stats = {}
    for k, n in enumerate(matrix.intervals):
        col = matrix.mean[:, k]
        ok = ~np.isnan(col)
        if not ok.any():
            nan = float("nan")
            stats[n] = IntervalStats(n, nan, nan, nan, nan, 0)
            continue
        stats[n] = IntervalStats(
            interval=n,
            mean_of_means=float(col[ok].mean()),
            mean_variance=float(matrix.variance[ok, k].mean()),
            min=float(col[ok].min()),
            max=float(col[ok].max()),
            defined_cells=int(ok.sum()),
        )
    return stats


@dataclass(frozen=True)
class ConsistencyReport:
    interval: int
    band_width_k: float
    within: tuple  # per timestep T..1: True/False, or None where no comparison was made
    coverage_fraction: float

    @property
    def compared(self) -> int:
        return sum(w is not None for w in self.within)


def consistency_check(
    matrix: ErrorMatrix, interval: int, observed: Sequence[float], band_width_k: float = 3.0
) -> ConsistencyReport:
    """Check which observed errors fall inside ``mean +- k * stddev`` of the prior.

    ``observed`` is indexed like the matrix rows (timestep T first); NaN marks
    timesteps without an observation.
    """
    if not band_width_k > 0:
        raise ContractError(f"band_width_k must be > 0, got {band_width_k}")
    k = matrix.column_index(interval)
    obs = np.asarray(observed, dtype=float)
    if obs.shape != (matrix.total_steps,):
        raise ContractError(f"observed must have one entry per timestep ({matrix.total_steps})")
    mean, std = matrix.mean[:, k], np.sqrt(matrix.variance[:, k])
    within = []
    for m, s, o in zip(mean, std, obs):
        if math.isnan(m) or math.isnan(o):
            within.append(None)
        else:
            within.append(bool(abs(o - m) <= band_width_k * s))
    compared = [w for w in within if w is not None]
    if not compared:
        raise ContractError(f"no defined timesteps to compare for interval {interval}")
    return ConsistencyReport(
        interval=interval,
        band_width_k=float(band_width_k),
        within=tuple(within),
        coverage_fraction=sum(compared) / len(compared),
    )


def hoeffding_bound(delta: float, num_samples: int) -> float:
    """Deviation bound ``sqrt(log(2 / delta) / (2 N))`` on the prior's sample mean.

    The bound assumes per-sample errors in [0, 1]; cosine distance can reach 2,
    so for errors above 1 the bound is optimistic by up to a factor of 2. The
    formula is returned unscaled.
    """
    if not 0 < delta < 1:
        raise ContractError(f"delta must lie in (0, 1), got {delta}")
    if num_samples < 1:
        raise ContractError(f"num_samples must be >= 1, got {num_samples}")
    return math.sqrt(math.log(2.0 / delta) / (2.0 * num_samples))
