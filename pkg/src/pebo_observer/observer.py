"""Gradient adaptive laws, switching gains and algebraic state reconstruction."""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ConfigurationError
from .filters import xi_estimate


@dataclass(frozen=True)
class GainSchedule:
    rho: float = 0.1
    gamma1: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.rho) and self.rho > 0):
            raise ConfigurationError("rho must be finite and positive", "gains.rho")
        if not (np.isfinite(self.gamma1) and self.gamma1 >= 0):
            raise ConfigurationError("gamma1 must be finite and non-negative", "gains.gamma1")


class Gains(NamedTuple):
    gamma_eta: float
    gamma_ti: float
    ti_guarded: bool = False


def gain_schedule(Delta, M_TI, gs):
    """Switching gains: zero while ``Delta < rho``, normalised otherwise.

    Both gains are keyed on ``Delta``.  If the ``T_I`` gain would divide by a
    zero (or overflowing) ``M_TI**2`` it is held at zero and ``ti_guarded`` is
    set.
    """
    if not Delta >= gs.rho:
        return Gains(0.0, 0.0, False)
    gamma_eta = gs.gamma1 / (Delta * Delta)
    m2 = M_TI * M_TI
    if m2 == 0.0 or not np.isfinite(m2):
        return Gains(gamma_eta, 0.0, True)
    return Gains(gamma_eta, gs.gamma1 / m2, False)


def eta_law(eta_hat, Delta, Y, gamma_eta):
    """``-gamma_eta * Delta * (Delta * eta_hat - Y)``"""
    eta_hat = np.asarray(eta_hat, dtype=float)
    if gamma_eta == 0.0:
        return np.zeros_like(eta_hat)
    return -(gamma_eta * Delta) * (Delta * eta_hat - np.asarray(Y, dtype=float))


def ti_law(T_I_hat, M_TI, Y_TI, gamma_ti):
    """Matrix analogue of :func:`eta_law` for the similarity-transform estimate."""
    T_I_hat = np.asarray(T_I_hat, dtype=float)
    if gamma_ti == 0.0:
        return np.zeros_like(T_I_hat)
    return -(gamma_ti * M_TI) * (M_TI * T_I_hat - np.asarray(Y_TI, dtype=float))


@dataclass(frozen=True)
class ObserverState:
    eta_hat: np.ndarray
    T_I_hat: np.ndarray
    xi_hat: np.ndarray
    x_hat: np.ndarray


def reconstruct_state(T_I_hat, fs, eta_hat):
    """``x_hat = T_I_hat (z + H^T eta_hat)``; purely algebraic."""
    T_I_hat = np.asarray(T_I_hat, dtype=float)
    eta_hat = np.asarray(eta_hat, dtype=float)
    xi_hat = xi_estimate(fs, eta_hat)
    return ObserverState(eta_hat, T_I_hat, xi_hat, T_I_hat @ xi_hat)


# -- error analysis -----------------------------------------------------------

class Envelope(NamedTuple):
    rate: float
    offset: float
    n_points: int


@dataclass(frozen=True)
class TruthChannels:
    """Ground truth available in simulation: physical and canonical states."""

    times: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    eta: np.ndarray
    T_I: np.ndarray


@dataclass(frozen=True)
class EstimateChannels:
    times: np.ndarray
    x_hat: np.ndarray
    eta_hat: np.ndarray
    T_I_hat: np.ndarray
    H_T: np.ndarray
    Delta: np.ndarray
    M_TI: np.ndarray
    gamma_eta: np.ndarray
    gamma_ti: np.ndarray
    rho: float


@dataclass(frozen=True)
class ErrorDiagnostics:
    times: np.ndarray
    eta_err: np.ndarray
    TI_err: np.ndarray
    x_err: np.ndarray
    bound_terms: np.ndarray  # (N, 3)
    bound_ok: bool
    bound_margin: float
    H_max: float
    T_max: float
    xi_max: float
    t_e: Optional[float]
    Delta_min: Optional[float]
    M_TI_min: Optional[float]
    eta_envelope: Optional[Envelope]
    TI_envelope: Optional[Envelope]
    eta_rate_bound: Optional[float]
    TI_rate_bound: Optional[float]


def fit_envelope(times, err, drop=1e-4):
    """Least-squares fit ``log err = offset - rate * t``.

    Only the stretch where ``err`` is still above ``drop * err[0]`` is used, so
    the round-off floor reached late in a run does not flatten the slope.
    """
    times = np.asarray(times, dtype=float)
    err = np.asarray(err, dtype=float)
    if err.size < 2 or not err[0] > 0:
        return None
    keep = np.flatnonzero(err <= drop * err[0])
    stop = keep[0] if keep.size else err.size
    t, e = times[:stop], err[:stop]
    ok = e > 0
    t, e = t[ok], e[ok]
    if t.size < 2:
        return None
    slope, offset = np.polyfit(t - t[0], np.log(e), 1)
    return Envelope(float(-slope), float(offset), int(t.size))


def first_crossing(times, Delta, rho):
    """Time of the first sample with ``Delta >= rho``; ``None`` if never."""
    hit = np.flatnonzero(np.asarray(Delta) >= rho)
    return float(times[hit[0]]) if hit.size else None


def error_diagnostics(truth, est, slack=1e-9):
    """Error norms, the pointwise triangle bound and post-activation envelopes.

    The bound checked at every sample is

        |x_err| <= T_max H_max |eta_err| + |TI_err| H_max |eta_err| + |TI_err| xi_max

    with spectral norms and the constants taken as maxima over the recorded
    run.  Envelope rates are compared against ``min_t gamma(t) * D(t)**2``
    over ``t >= t_e``, the instantaneous decay rate of each gradient law.
    """
    times = np.asarray(truth.times)
    if times.shape != np.asarray(est.times).shape or not np.array_equal(times, est.times):
        raise ConfigurationError("truth and estimate channels are on different time grids")

    eta_tilde = est.eta_hat - truth.eta[None, :]
    ti_tilde = est.T_I_hat - truth.T_I[None, :, :]
    eta_err = np.linalg.norm(eta_tilde, axis=1)
    TI_err = np.linalg.norm(ti_tilde, ord=2, axis=(1, 2))
    x_err = np.linalg.norm(est.x_hat - truth.x, axis=1)

    H_max = float(np.max(np.linalg.norm(est.H_T, ord=2, axis=(1, 2))))
    T_max = float(np.linalg.norm(truth.T_I, ord=2))
    xi_max = float(np.max(np.linalg.norm(truth.xi, axis=1)))
    terms = np.column_stack([T_max * H_max * eta_err, TI_err * H_max * eta_err, TI_err * xi_max])
    total = terms.sum(axis=1)
    scale = max(1.0, float(np.max(total)))
    margin = float(np.min(total - x_err))
    bound_ok = bool(np.all(x_err <= total + slack * scale))

    t_e = first_crossing(times, est.Delta, est.rho)
    Delta_min = M_TI_min = None
    eta_env = TI_env = None
    eta_rate = TI_rate = None
    if t_e is not None:
        post = times >= t_e
        Delta_min = float(np.min(est.Delta[post]))
        M_TI_min = float(np.min(np.abs(est.M_TI[post])))
        eta_rate = float(np.min(est.gamma_eta[post] * est.Delta[post] ** 2))
        TI_rate = float(np.min(est.gamma_ti[post] * est.M_TI[post] ** 2))
        eta_env = fit_envelope(times[post], eta_err[post])
        TI_env = fit_envelope(times[post], TI_err[post])

    return ErrorDiagnostics(
        times=times,
        eta_err=eta_err,
        TI_err=TI_err,
        x_err=x_err,
        bound_terms=terms,
        bound_ok=bound_ok,
        bound_margin=margin,
        H_max=H_max,
        T_max=T_max,
        xi_max=xi_max,
        t_e=t_e,
        Delta_min=Delta_min,
        M_TI_min=M_TI_min,
        eta_envelope=eta_env,
        TI_envelope=TI_env,
        eta_rate_bound=eta_rate,
        TI_rate_bound=TI_rate,
    )
