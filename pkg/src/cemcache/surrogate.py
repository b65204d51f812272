"""Seedable synthetic denoiser standing in for a diffusion transformer.

The model output is

    D(x, t) = M2 @ tanh(s * (M1 @ x) + c(t))

and the sampler takes linear-sigma Euler steps ``x_{t-1} = x_t - (sigma_t - sigma_{t-1}) * D``.
Timesteps run from ``T`` (noisiest, executed first) down to ``1``; the state
left after step 1 is ``x_0``.

Trajectory arrays are stored in execution order, so row ``i`` belongs to
timestep ``T - i``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterable

import numpy as np

from .errors import ConfigurationError, ContractError, NumericalDivergenceError

if TYPE_CHECKING:
    from .scheduler import CacheSchedule

_U64_MAX = 2**64 - 1

# Stream tags keep weight draws and initial-state draws independent even when
# the two seeds coincide.
_WEIGHT_STREAM = 0
_INIT_STREAM = 1

EMBEDDING_GAIN = 2.0
EMBEDDING_MAX_PERIOD = 10_000.0


@dataclass(frozen=True)
class SurrogateConfig:
    dimension: int = 64
    total_steps: int = 50
    seed: int = 0
    nonlinearity_scale: float = 1.0
    schedule_kind: str = "linear_sigma"

    def __post_init__(self):
        if not _is_int(self.dimension) or self.dimension < 2:
            raise ConfigurationError("dimension", f"must be an integer >= 2, got {self.dimension!r}")
        if not _is_int(self.total_steps) or self.total_steps < 2:
            raise ConfigurationError("total_steps", f"must be an integer >= 2, got {self.total_steps!r}")
        if not _is_int(self.seed) or not 0 <= self.seed <= _U64_MAX:
            raise ConfigurationError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        scale = self.nonlinearity_scale
        if not isinstance(scale, (int, float)) or not math.isfinite(scale) or scale < 0:
            raise ConfigurationError(
                "nonlinearity_scale", f"must be a finite real >= 0, got {scale!r}"
            )
        if self.schedule_kind != "linear_sigma":
            raise ConfigurationError(
                "schedule_kind", f"only 'linear_sigma' is supported, got {self.schedule_kind!r}"
            )


class ExecutionMode(str, enum.Enum):
    FULL = "full"
    REUSE = "reuse"
    PREDICT_ORDER1 = "predict_order1"


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States and model outputs of one run, in execution order.

    ``states`` has shape ``(T + 1, d)`` (x_T ... x_0), ``outputs`` has shape
    ``(T, d)`` and ``computed_mask`` marks steps with a real model evaluation.
    """

    states: np.ndarray
    outputs: np.ndarray
    computed_mask: np.ndarray

    def __post_init__(self):
        T = self.outputs.shape[0]
        if self.states.shape != (T + 1, self.outputs.shape[1]):
            raise ContractError(
                f"states shape {self.states.shape} does not match outputs shape {self.outputs.shape}"
            )
        if self.computed_mask.shape != (T,):
            raise ContractError(f"computed_mask must have length {T}")
        for arr in (self.states, self.outputs, self.computed_mask):
            arr.setflags(write=False)

    @property
    def total_steps(self) -> int:
        return self.outputs.shape[0]

    @property
    def dimension(self) -> int:
        return self.outputs.shape[1]

    @property
    def is_full(self) -> bool:
        return bool(self.computed_mask.all())

    @property
    def terminal_state(self) -> np.ndarray:
        return self.states[-1]

    def output_at(self, t: int) -> np.ndarray:
        return self.outputs[self._row(t, low=1)]

    def state_at(self, t: int) -> np.ndarray:
        return self.states[self._row(t, low=0)]

    def computed_at(self, t: int) -> bool:
        return bool(self.computed_mask[self._row(t, low=1)])

    def _row(self, t: int, low: int) -> int:
        T = self.total_steps
        if not low <= t <= T:
            raise ContractError(f"timestep {t} outside [{low}, {T}]")
        return T - t

    def __eq__(self, other):
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.outputs, other.outputs)
            and np.array_equal(self.computed_mask, other.computed_mask)
        )

    __hash__ = None


class Surrogate:
    """Immutable tanh-map denoiser. Safe to share between threads."""

    def __init__(self, config: SurrogateConfig):
        self.config = config
        d, T = config.dimension, config.total_steps
        rng = np.random.default_rng([config.seed, _WEIGHT_STREAM])
        self.m1 = rng.standard_normal((d, d)) / math.sqrt(d)
        self.m2 = rng.standard_normal((d, d)) / math.sqrt(d)

        # sigmas[t] for t = 0..T; linear from 1 at t=T to 0 at t=1, and x_0
        # sits at sigma 0 as well.
        self.sigmas = np.zeros(T + 1)
        self.sigmas[1:] = (np.arange(1, T + 1) - 1) / (T - 1)

        self._embeddings = np.stack([self._embed(t) for t in range(T + 1)])
        for arr in (self.m1, self.m2, self.sigmas, self._embeddings):
            arr.setflags(write=False)

    def _embed(self, t: int) -> np.ndarray:
        # Sinusoidal embedding of the log noise level. The floor of one sigma
        # increment keeps the log finite at sigma = 0.
        d = self.config.dimension
        half = d // 2
        freqs = np.exp(-math.log(EMBEDDING_MAX_PERIOD) * np.arange(half) / half)
        floor = 1.0 / (self.config.total_steps - 1)
        phase = math.pi * math.log(self.sigmas[t] + floor) * freqs
        emb = np.concatenate([np.cos(phase), np.sin(phase)])
        if d % 2:
            emb = np.append(emb, 0.0)
        return EMBEDDING_GAIN * emb

    @property
    def total_steps(self) -> int:
        return self.config.total_steps

    @property
    def dimension(self) -> int:
        return self.config.dimension

    def embedding(self, t: int) -> np.ndarray:
        return self._embeddings[t]

    def output(self, x: np.ndarray, t: int) -> np.ndarray:
        pre = self.config.nonlinearity_scale * (self.m1 @ x) + self._embeddings[t]
        return self.m2 @ np.tanh(pre)

    def step_size(self, t: int) -> float:
        return float(self.sigmas[t] - self.sigmas[t - 1])

    def initial_state(self, init_seed: int) -> np.ndarray:
        if not _is_int(init_seed) or not 0 <= init_seed <= _U64_MAX:
            raise ContractError(f"init_seed must be an unsigned 64-bit integer, got {init_seed!r}")
        rng = np.random.default_rng([init_seed, _INIT_STREAM])
        return rng.standard_normal(self.config.dimension)


def make_surrogate(config: SurrogateConfig) -> Surrogate:
    return Surrogate(config)


def run_full(surrogate: Surrogate, init_seed: int) -> Trajectory:
    return _execute(surrogate, surrogate.initial_state(init_seed), None, ExecutionMode.FULL)


def run_cached(
    surrogate: Surrogate,
    init_seed: int,
    schedule: "CacheSchedule",
    mode: ExecutionMode | str = ExecutionMode.REUSE,
) -> Trajectory:
    """Execute ``schedule``: evaluate the model only at its compute steps.

    Between compute points ``reuse`` serves the latest computed output and
    ``predict_order1`` extrapolates linearly from the last two compute points
    (falling back to reuse until two exist).
    """
    mode = ExecutionMode(mode)
    if mode is ExecutionMode.FULL:
        raise ContractError("run_cached needs a caching mode; use run_full for full computation")
    if schedule.total_steps != surrogate.total_steps:
        raise ContractError(
            f"schedule has {schedule.total_steps} steps but the surrogate runs {surrogate.total_steps}"
        )
    return _execute(surrogate, surrogate.initial_state(init_seed), schedule.compute_steps, mode)


def run_with_compute_steps(
    surrogate: Surrogate,
    init_seed: int,
    compute_steps: Iterable[int],
    mode: ExecutionMode | str = ExecutionMode.REUSE,
) -> Trajectory:
    """Like :func:`run_cached` for an arbitrary compute set; step ``T`` must be in it."""
    steps = frozenset(compute_steps)
    if surrogate.total_steps not in steps:
        raise ContractError("the first timestep must be computed")
    return _execute(surrogate, surrogate.initial_state(init_seed), steps, ExecutionMode(mode))


def _execute(surrogate, x: np.ndarray, compute_steps, mode: ExecutionMode) -> Trajectory:
    T, d = surrogate.total_steps, surrogate.dimension
    states = np.empty((T + 1, d))
    outputs = np.empty((T, d))
    mask = np.zeros(T, dtype=bool)
    states[0] = x
    history: list[tuple[int, np.ndarray]] = []  # (timestep, output) of the last two compute points

    for row, t in enumerate(range(T, 0, -1)):
        if compute_steps is None or t in compute_steps:
            out = surrogate.output(x, t)
            mask[row] = True
            history = [*history[-1:], (t, out)]
        elif mode is ExecutionMode.PREDICT_ORDER1 and len(history) == 2:
            (t_prev, f_prev), (t_last, f_last) = history
            slope = (f_last - f_prev) / (t_prev - t_last)
            out = f_last + slope * (t_last - t)
        else:
            out = history[-1][1]
        x = x - surrogate.step_size(t) * out
        if not (np.isfinite(out).all() and np.isfinite(x).all()):
            raise NumericalDivergenceError(t)
        outputs[row] = out
        states[row + 1] = x

    return Trajectory(states=states, outputs=outputs, computed_mask=mask)


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)
