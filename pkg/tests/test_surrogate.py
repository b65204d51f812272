import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cemcache import (
    CacheSchedule,
    ConfigurationError,
    ContractError,
    ExecutionMode,
    NumericalDivergenceError,
    SurrogateConfig,
    make_surrogate,
    run_cached,
    run_full,
    uniform_schedule,
)
from cemcache.surrogate import run_with_compute_steps

from conftest import FunctionSurrogate


def test_same_seed_same_output():
    x = np.linspace(-1, 1, 64)
    a = make_surrogate(SurrogateConfig(seed=7))
    b = make_surrogate(SurrogateConfig(seed=7))
    assert np.array_equal(a.output(x, 50), b.output(x, 50))


def test_different_seeds_differ():
    x = np.linspace(-1, 1, 64)
    a = make_surrogate(SurrogateConfig(seed=1))
    b = make_surrogate(SurrogateConfig(seed=2))
    assert not np.allclose(a.output(x, 50), b.output(x, 50))


@pytest.mark.parametrize(
    "kwargs, field",
    [
        ({"dimension": 1}, "dimension"),
        ({"total_steps": 1}, "total_steps"),
        ({"seed": -1}, "seed"),
        ({"seed": 2**64}, "seed"),
        ({"nonlinearity_scale": -0.5}, "nonlinearity_scale"),
        ({"nonlinearity_scale": float("nan")}, "nonlinearity_scale"),
        ({"schedule_kind": "cosine"}, "schedule_kind"),
    ],
)
def test_invalid_config_names_field(kwargs, field):
    with pytest.raises(ConfigurationError) as info:
        SurrogateConfig(**kwargs)
    assert info.value.field == field
    assert field in str(info.value)


def test_sigma_schedule_endpoints(surrogate):
    assert surrogate.sigmas[50] == 1.0
    assert surrogate.sigmas[1] == 0.0
    assert np.allclose(np.diff(surrogate.sigmas[1:]), 1 / 49)


def test_full_run_lengths(surrogate):
    traj = run_full(surrogate, 0)
    assert traj.outputs.shape == (50, 64)
    assert traj.states.shape == (51, 64)
    assert traj.computed_mask.all()
    assert np.isfinite(traj.states).all() and np.isfinite(traj.outputs).all()


def test_full_run_deterministic(surrogate):
    assert run_full(surrogate, 11) == run_full(surrogate, 11)
    assert run_full(surrogate, 11) != run_full(surrogate, 12)


def test_state_update_rule(surrogate):
    traj = run_full(surrogate, 4)
    for t in (50, 25, 2, 1):
        expected = traj.state_at(t) - (surrogate.sigmas[t] - surrogate.sigmas[t - 1]) * traj.output_at(t)
        assert np.array_equal(traj.state_at(t - 1), expected)


def test_zero_nonlinearity_is_state_independent(linear_surrogate):
    s = linear_surrogate
    a, b = run_full(s, 1), run_full(s, 2)
    closed = np.stack([s.m2 @ np.tanh(s.embedding(t)) for t in range(50, 0, -1)])
    assert np.allclose(a.outputs, closed, rtol=0, atol=1e-12)
    assert np.array_equal(a.outputs, b.outputs)
    # both runs move by the same closed-form displacement from their start
    steps = np.array([s.sigmas[t] - s.sigmas[t - 1] for t in range(50, 0, -1)])
    displacement = -np.cumsum(steps[:, None] * closed, axis=0)
    assert np.allclose(a.states[1:] - a.states[0], displacement, atol=1e-12)
    assert np.allclose(b.states[1:] - b.states[0], displacement, atol=1e-12)


def test_all_ones_schedule_matches_full_run(surrogate):
    schedule = CacheSchedule(50, (1,) * 49)
    for mode in ("reuse", "predict_order1"):
        assert run_cached(surrogate, 9, schedule, mode) == run_full(surrogate, 9)


def test_budget_25_computes_26_steps(surrogate):
    schedule = uniform_schedule(50, 2)
    assert schedule.num_caching == 25
    traj = run_cached(surrogate, 0, schedule, ExecutionMode.REUSE)
    assert traj.computed_mask.sum() == 26
    computed = {t for t in range(50, 0, -1) if traj.computed_at(t)}
    assert computed == set(schedule.compute_steps)


SHORT = SurrogateConfig(dimension=16, total_steps=10, seed=5)


def test_reuse_serves_latest_computed_output():
    surrogate = make_surrogate(SHORT)
    schedule = CacheSchedule(10, (3, 4, 2))
    traj = run_cached(surrogate, 5, schedule, "reuse")
    last = None
    for t in range(10, 0, -1):
        if t in schedule.compute_steps:
            assert np.array_equal(traj.output_at(t), surrogate.output(traj.state_at(t), t))
            last = traj.output_at(t)
        else:
            assert np.array_equal(traj.output_at(t), last)


def test_reuse_drift_closed_form(linear_surrogate):
    s = linear_surrogate
    schedule = CacheSchedule(50, (5, 3, 9, 1, 7, 4, 4, 8, 2, 6))
    cached = run_cached(s, 3, schedule, "reuse")
    full = run_full(s, 3)
    # independent evaluation: outputs are M2 tanh(c(t)); reused steps serve the
    # output of the most recent compute point
    true_out = {t: s.m2 @ np.tanh(s.embedding(t)) for t in range(1, 51)}
    drift = np.zeros(64)
    last = None
    for t in range(50, 0, -1):
        if t in schedule.compute_steps:
            last = t
        else:
            drift += (s.sigmas[t] - s.sigmas[t - 1]) * (true_out[t] - true_out[last])
    assert np.allclose(cached.terminal_state - full.terminal_state, drift, atol=1e-12)


def test_terminal_distance_shrinks_as_compute_set_grows(linear_surrogate):
    s = linear_surrogate
    full = run_full(s, 0).terminal_state
    # nested compute sets: every 8th, every 4th, every 2nd, every step
    previous = np.inf
    for stride in (8, 4, 2, 1):
        steps = set(range(50, 0, -stride)) | {1}
        x0 = run_with_compute_steps(s, 0, steps, "reuse").terminal_state
        dist = np.linalg.norm(x0 - full)
        assert dist <= previous
        previous = dist
    assert previous == 0


def test_predict_order1_falls_back_to_reuse_before_two_computes():
    surrogate = make_surrogate(SHORT)
    schedule = CacheSchedule(10, (4, 5))
    reuse = run_cached(surrogate, 1, schedule, "reuse")
    predict = run_cached(surrogate, 1, schedule, "predict_order1")
    # steps 9..6 follow the first compute point only
    assert np.array_equal(reuse.outputs[:5], predict.outputs[:5])
    assert not np.array_equal(reuse.outputs[6:], predict.outputs[6:])


def test_predict_order1_uses_step_distance():
    surrogate = make_surrogate(SHORT)
    schedule = CacheSchedule(10, (2, 3, 4))
    traj = run_cached(surrogate, 2, schedule, "predict_order1")
    f10, f8 = traj.output_at(10), traj.output_at(8)
    slope = (f8 - f10) / 2
    assert np.allclose(traj.output_at(7), f8 + slope * 1)
    assert np.allclose(traj.output_at(6), f8 + slope * 2)


@settings(max_examples=40, deadline=None)
@given(
    a=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    b=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
    rest=st.lists(st.integers(1, 4), min_size=1, max_size=6),
)
def test_predict_order1_exact_on_affine_outputs(a, b, rest):
    a, b = np.array(a), np.array(b)
    T = 2 + sum(rest)
    model = FunctionSurrogate(lambda x, t: a + b * t, T, 3)
    # the first hop is 1 so two compute points exist before any reuse
    schedule = CacheSchedule(T, (1, *rest))
    traj = run_cached(model, 0, schedule, "predict_order1")
    expected = np.stack([a + b * t for t in range(T, 0, -1)])
    assert np.allclose(traj.outputs, expected, atol=1e-9)


def test_mismatched_schedule_rejected(surrogate):
    with pytest.raises(ContractError):
        run_cached(surrogate, 0, CacheSchedule(10, (9,)), "reuse")
    with pytest.raises(ContractError):
        run_cached(surrogate, 0, uniform_schedule(50, 2), "full")


def test_divergence_reports_timestep():
    model = FunctionSurrogate(lambda x, t: np.full(2, np.inf if t == 4 else 1.0), 6, 2)
    with pytest.raises(NumericalDivergenceError) as info:
        run_full(model, 0)
    assert info.value.timestep == 4


def test_trajectory_arrays_are_read_only(surrogate):
    traj = run_full(surrogate, 0)
    with pytest.raises(ValueError):
        traj.outputs[0, 0] = 1.0
