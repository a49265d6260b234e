import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pebo_observer.errors import ConfigurationError, SimulationError
from pebo_observer.plant import shift_matrix
from pebo_observer.simulation import (
    AugmentedLayout,
    IntegratorConfig,
    SignalSpec,
    compiled_derivative,
    closed_loop_derivative,
    control,
    reference,
    rk4_step,
    simulate,
    _context,
)


def short(scenario, h=1e-4, t_end=2.0, stride=100, **kw):
    return scenario.with_changes(integrator=IntegratorConfig(h, t_end, stride), **kw)


# -- signals -------------------------------------------------------------------

def test_reference_values():
    assert reference(0.0) == 100.0
    assert reference(0.1) == pytest.approx(100 + 2.5 * math.exp(-0.1) * math.sin(1.0), abs=1e-12)
    assert abs(reference(60.0) - 100.0) < 1e-20 + 2.5 * math.exp(-60)


def test_control_values():
    assert control(100.0, 0.0) == -2500.0
    assert control(3.3, 3.3) == 0.0
    assert control(0.0, 4.0) == 100.0


def test_open_loop_law():
    s = SignalSpec(law="open_loop")
    assert s.control(7.0, 1e9) == 7.0
    with pytest.raises(ConfigurationError):
        SignalSpec(law="pid")


@given(st.floats(0, 1e4))
def test_reference_finite(t):
    assert math.isfinite(reference(t))


# -- integrator --------------------------------------------------------------------

def test_rk4_zero_dynamics():
    s = np.array([1.0, -2.0])
    assert np.array_equal(rk4_step(s, lambda t, x: np.zeros(2), 0.0, 0.3), s)


def test_rk4_exponential():
    x = rk4_step(np.array([1.0]), lambda t, x: x, 0.0, 0.1)
    assert abs(x[0] - math.exp(0.1)) < 1e-7
    # one RK4 step reproduces the degree-4 Taylor polynomial exactly
    assert x[0] == pytest.approx(1 + 0.1 + 0.1**2 / 2 + 0.1**3 / 6 + 0.1**4 / 24, rel=1e-15)


def test_rk4_nilpotent_flow():
    A0 = shift_matrix(3)
    x = np.array([0.0, 0.0, 1.0])
    h = 1e-3
    for i in range(1000):
        x = rk4_step(x, lambda t, s: A0 @ s, i * h, h)
    np.testing.assert_allclose(x, [0.5, 1.0, 1.0], atol=1e-9)


def _global_error(h):
    x = np.array([1.0])
    n = int(round(1.0 / h))
    for i in range(n):
        x = rk4_step(x, lambda t, s: s, i * h, h)
    return abs(x[0] - math.e)


def test_rk4_fourth_order():
    ratio = _global_error(0.1) / _global_error(0.05)
    assert 14.0 < ratio < 18.0


def test_rk4_aborts_on_nan():
    with pytest.raises(SimulationError) as exc:
        rk4_step(np.ones(2), lambda t, x: np.array([np.nan, 0.0]), 1.5, 0.1)
    assert exc.value.t_fail == 1.5


@pytest.mark.parametrize("kw", [dict(h=0.0), dict(t_end=-1.0), dict(record_stride=0)])
def test_integrator_validation(kw):
    with pytest.raises(ConfigurationError):
        IntegratorConfig(**kw)


# -- layout ----------------------------------------------------------------------

def test_layout_sizes():
    L = AugmentedLayout(3, 3)
    assert L.size == 3 + 3 + 27 + 9 + 81 + 9 + 9
    offs = L.offsets()
    assert offs[9] == L.size and offs[-1] == L.diag_size
    s = L.initial_state(np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(L.block(s, "Phi"), np.eye(3))
    np.testing.assert_array_equal(L.block(s, "x"), [1, 2, 3])


# -- closed loop ---------------------------------------------------------------------

def test_compiled_matches_python_derivative(kscaled_scenario, rng):
    ctx = _context(kscaled_scenario)
    L = ctx.layout
    s = rng.normal(size=L.size)
    pb = rng.normal(size=(9, 9))
    s[L.state_blocks["phi_bar"][0]] = (pb @ pb.T).ravel() * 1e-3
    ds_c, dg_c, ok = compiled_derivative(0.7, s, kscaled_scenario)
    ds_p, dg_p = closed_loop_derivative(0.7, s, ctx)
    assert ok
    np.testing.assert_allclose(ds_c, ds_p, rtol=1e-9, atol=1e-9 * np.abs(ds_p).max())
    np.testing.assert_allclose(dg_c, dg_p, rtol=1e-9, atol=1e-9 * np.abs(dg_p).max())


def test_backends_agree_on_short_run(kscaled_scenario):
    sc = short(kscaled_scenario, h=1e-3, t_end=2.5, stride=50)
    a = simulate(sc)
    b = simulate(sc, backend="python")
    assert a.times.size == b.times.size
    for key in ("x", "z", "Omega", "P", "Phi", "q_bar", "Delta", "eta_hat", "x_hat"):
        scale = max(1.0, np.abs(a[key]).max())
        assert np.abs(a[key] - b[key]).max() <= 1e-6 * scale, key


def test_unknown_backend(literal_scenario):
    with pytest.raises(ConfigurationError):
        simulate(short(literal_scenario, t_end=0.01), backend="fortran")


def test_determinism(literal_scenario):
    sc = short(literal_scenario, t_end=1.0)
    a, b = simulate(sc), simulate(sc)
    assert np.array_equal(a["state"], b["state"])


def test_zero_reference_is_equilibrium(literal_scenario):
    sig = SignalSpec(offset=0.0, amplitude=0.0)
    tr = simulate(short(literal_scenario, t_end=2.0, signal=sig))
    assert not tr["x"].any() and not tr["y"].any() and not tr["u"].any()


def test_step_halving(literal_scenario):
    a = simulate(short(literal_scenario, h=1e-4, t_end=3.0, stride=100))
    b = simulate(short(literal_scenario, h=5e-5, t_end=3.0, stride=200))
    np.testing.assert_array_equal(a.times, b.times)
    rel = np.abs(a["x"] - b["x"]).max() / np.abs(a["x"]).max()
    assert rel < 1e-6


def test_abort_reports_time_and_partial(literal_scenario):
    sig = SignalSpec(kp=1e7)
    with pytest.raises(SimulationError) as exc:
        simulate(short(literal_scenario, t_end=1.0, stride=1, signal=sig))
    err = exc.value
    assert 0.0 <= err.t_fail < 1.0
    assert err.partial is not None and len(err.partial) >= 1
    assert np.all(np.isfinite(err.partial["state"]))
    assert err.last_valid_time == pytest.approx(err.partial.times[-1])


def test_full_horizon_bounded(literal_run):
    tr = literal_run.trajectory
    assert tr.times[-1] == pytest.approx(30.0)
    assert np.abs(tr["y"]).max() < 200
    for key in ("x", "y", "u", "z", "Omega", "P", "Phi", "q_bar", "phi_bar", "eta_hat", "x_hat"):
        assert np.all(np.isfinite(tr[key])), key


def test_uniform_grid(literal_run):
    dt = np.diff(literal_run.trajectory.times)
    np.testing.assert_allclose(dt, 1e-2, rtol=1e-9)
