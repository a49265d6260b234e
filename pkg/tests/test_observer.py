import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pebo_observer.errors import ConfigurationError
from pebo_observer.filters import FilterState
from pebo_observer.harness import diagnose
from pebo_observer.observer import (
    EstimateChannels,
    GainSchedule,
    TruthChannels,
    error_diagnostics,
    eta_law,
    fit_envelope,
    first_crossing,
    gain_schedule,
    reconstruct_state,
    ti_law,
)
from pebo_observer.simulation import IntegratorConfig, simulate

GS = GainSchedule(rho=0.1, gamma1=1.0)
vec9 = arrays(np.float64, 9, elements=st.floats(-10, 10))
mat3 = arrays(np.float64, (3, 3), elements=st.floats(-10, 10))


def test_gain_schedule_examples():
    assert gain_schedule(0.05, 3.0, GS)[:2] == (0.0, 0.0)
    assert gain_schedule(2.0, 1.0, GS).gamma_eta == 0.25
    g = gain_schedule(0.1, 2.0, GS)
    assert g.gamma_eta == pytest.approx(100.0) and g.gamma_ti == 0.25


@pytest.mark.parametrize("m_ti", [0.0, np.inf, 1e200])
def test_gain_schedule_guard(m_ti):
    g = gain_schedule(1.0, m_ti, GS)
    assert g.gamma_eta == 1.0 and g.gamma_ti == 0.0 and g.ti_guarded


def test_gain_schedule_validation():
    with pytest.raises(ConfigurationError):
        GainSchedule(rho=0.0)
    with pytest.raises(ConfigurationError):
        GainSchedule(gamma1=-1.0)


@given(st.floats(0, 1e6), st.floats(-1e6, 1e6))
def test_gates_keyed_on_delta(delta, m_ti):
    g = gain_schedule(delta, m_ti, GS)
    if delta < GS.rho:
        assert g.gamma_eta == 0.0 and g.gamma_ti == 0.0
    else:
        assert g.gamma_eta > 0


@given(vec9, st.floats(0.1, 10))
def test_eta_law_fixed_point(eta, delta):
    d = eta_law(eta, delta, delta * eta, 1.0 / delta**2)
    assert np.abs(d).max() <= 1e-12 * max(1.0, np.abs(eta).max())


@given(vec9)
def test_eta_law_zero_gain_and_direction(v):
    assert not eta_law(v, 3.0, np.ones(9), 0.0).any()
    np.testing.assert_array_equal(eta_law(v, 1.0, np.zeros(9), 1.0), -v)


@given(mat3, st.floats(0.1, 10))
def test_ti_law(T, m):
    d = ti_law(T, m, m * T, 1.0 / m**2)
    assert np.abs(d).max() <= 1e-12 * max(1.0, np.abs(T).max())
    assert not ti_law(T, m, np.ones((3, 3)), 0.0).any()
    np.testing.assert_array_equal(ti_law(T, 1.0, np.zeros((3, 3)), 1.0), -T)


def test_reconstruct_state_trivial():
    fs = FilterState.initial(3)
    fs = FilterState(np.array([1.0, 2, 3]), fs.Omega + 5, fs.P - 1, fs.Phi, fs.q_bar, fs.phi_bar)
    obs = reconstruct_state(np.zeros((3, 3)), fs, np.zeros(9))
    assert not obs.x_hat.any()
    fs0 = FilterState.initial(3)
    eta = np.arange(9.0)
    T = np.arange(9.0).reshape(3, 3)
    obs = reconstruct_state(T, fs0, eta)
    np.testing.assert_array_equal(obs.xi_hat, eta[6:])
    np.testing.assert_array_equal(obs.x_hat, T @ eta[6:])


def test_reconstruct_with_truth_matches_plant(literal_run, true_eta):
    tr = literal_run.trajectory
    T_I = tr.meta["T_I"]
    xi = tr["z"] + np.einsum("tij,j->ti", tr["H_T"], true_eta)
    x_hat = xi @ T_I.T
    assert np.abs(x_hat - tr["x"]).max() <= 1e-6 * np.abs(tr["x"]).max()


def test_first_crossing_and_envelope():
    t = np.linspace(0, 10, 1001)
    assert first_crossing(t, np.zeros_like(t), 0.1) is None
    D = np.where(np.arange(t.size) >= 512, 1.0, 0.0)
    assert first_crossing(t, D, 0.1) == t[512]
    env = fit_envelope(t, 3.0 * np.exp(-0.7 * t))
    assert env.rate == pytest.approx(0.7, rel=1e-9)
    assert env.offset == pytest.approx(np.log(3.0), rel=1e-9)


def test_misaligned_grid_rejected():
    t = np.linspace(0, 1, 5)
    truth = TruthChannels(t, np.zeros((5, 3)), np.zeros((5, 3)), np.zeros(9), np.eye(3))
    est = EstimateChannels(t + 1e-3, np.zeros((5, 3)), np.zeros((5, 9)), np.zeros((5, 3, 3)),
                           np.zeros((5, 3, 9)), np.zeros(5), np.zeros(5), np.zeros(5), np.zeros(5), 0.1)
    with pytest.raises(ConfigurationError):
        error_diagnostics(truth, est)


def test_zero_error_run(literal_scenario):
    """Estimates initialised at the truth with zero gain stay exact."""
    from pebo_observer.plant import canonical_for, get_plant

    cf = canonical_for(get_plant(literal_scenario.plant), literal_scenario.theta)
    sc = literal_scenario.with_changes(
        gains=GainSchedule(0.1, 0.0), integrator=IntegratorConfig(1e-4, 2.0, 100)
    )
    tr = simulate(sc, eta_hat0=cf.eta(sc.x0), ti_hat0=cf.T_I)
    d = diagnose(tr)
    assert not d.eta_err.any() and not d.TI_err.any()
    assert d.x_err.max() <= 1e-9 * np.abs(tr["x"]).max()


@pytest.mark.parametrize("which", ["literal_run", "kscaled_run"])
def test_triangle_bound_pointwise(which, request):
    d = diagnose(request.getfixturevalue(which).trajectory)
    assert d.bound_ok
    assert np.all(d.x_err <= d.bound_terms.sum(axis=1) * (1 + 1e-12) + 1e-9)


def test_freeze_while_gate_closed(literal_run, kscaled_run):
    for art in (literal_run, kscaled_run):
        tr = art.trajectory
        pre = tr["Delta"] < tr.meta["rho"]
        assert pre.any()
        assert np.array_equal(tr["eta_hat"][pre], np.broadcast_to(tr["eta_hat"][0], tr["eta_hat"][pre].shape))
        assert np.array_equal(tr["ti_hat"][pre], np.broadcast_to(tr["ti_hat"][0], tr["ti_hat"][pre].shape))
    assert not literal_run.trajectory["eta_hat"].any()


def test_envelopes_after_activation(kscaled_run):
    d = diagnose(kscaled_run.trajectory)
    assert d.t_e is not None and d.t_e <= 3.0
    assert d.eta_envelope.rate >= 0.9 * d.eta_rate_bound
    assert d.TI_envelope.rate >= 0.9 * d.TI_rate_bound


def test_componentwise_error_monotone(kscaled_run, true_eta):
    """Each ``|eta_hat_i - eta_i|`` is nonincreasing once the gate is open."""
    tr = kscaled_run.trajectory
    post = tr["Delta"] >= tr.meta["rho"]
    e = np.abs(tr["eta_hat"][post] - true_eta)
    assert np.diff(e, axis=0).max() <= 1e-6 * np.linalg.norm(true_eta)
    t = np.abs(tr["ti_hat"][post] - tr.meta["T_I"]).reshape(e.shape[0], -1)
    assert np.diff(t, axis=0).max() <= 1e-6 * np.linalg.norm(tr.meta["T_I"])


def test_no_peaking_bound(literal_run, kscaled_run):
    for art in (literal_run, kscaled_run):
        tr = art.trajectory
        lhs = np.linalg.norm(tr["x_hat"], axis=1).max()
        ti = np.linalg.norm(tr["ti_hat"], ord=2, axis=(1, 2))
        H = np.linalg.norm(tr["H_T"], ord=2, axis=(1, 2))
        rhs = (ti * (np.linalg.norm(tr["z"], axis=1) + H * np.linalg.norm(tr["eta_hat"], axis=1))).max()
        assert lhs <= rhs * (1 + 1e-12)
