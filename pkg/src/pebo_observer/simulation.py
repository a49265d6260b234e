"""Fixed-step closed-loop simulation of plant, filters, mixing and observer.

Two backends integrate the same augmented vector with classical RK4 and a
compensated (Kahan) state update.  The compensation matters: the mixing step
multiplies by ``adj(phi_bar)`` with ``cond(phi_bar)`` around ``1e12``, so
round-off accumulated over ``3e5`` plain additions in ``q_bar`` and
``phi_bar`` would otherwise dominate ``Y - Delta eta``.

* ``"compiled"`` (default) runs the numba kernel in :mod:`._kernel`;
* ``"python"`` assembles the right-hand side from the public functions in
  :mod:`.filters`, :mod:`.mappings` and :mod:`.observer` and steps with
  :func:`rk4_step`.  It is slow and meant for short cross-checks.
"""

import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from . import _kernel as K_
from .errors import ConfigurationError, SimulationError
from .filters import FilterState, drem_outputs, filter_derivatives, regressor
from .linalg import slogdet_lu
from .mappings import get_mapping_set, select_ab, theta_regression, ti_regression
from .observer import eta_law, gain_schedule, reconstruct_state, ti_law
from .plant import canonical_for, eval_plant, get_plant

CONTROL_LAWS = {"proportional": K_.LAW_PROPORTIONAL, "open_loop": K_.LAW_OPEN_LOOP}


@dataclass(frozen=True)
class SignalSpec:
    """``r(t) = offset + amplitude * exp(-decay t) sin(frequency t)`` and the control law.

    ``law="proportional"`` gives ``u = -kp (r - y)``; ``law="open_loop"``
    feeds ``u = r`` directly.
    """

    offset: float = 100.0
    amplitude: float = 2.5
    decay: float = 1.0
    frequency: float = 10.0
    kp: float = 25.0
    law: str = "proportional"

    def __post_init__(self):
        if self.law not in CONTROL_LAWS:
            raise ConfigurationError(
                f"unknown control law {self.law!r}; choose from {sorted(CONTROL_LAWS)}", "control.law"
            )
        for name in ("offset", "amplitude", "decay", "frequency", "kp"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite", name)

    def reference(self, t):
        return self.offset + self.amplitude * math.exp(-self.decay * t) * math.sin(self.frequency * t)

    def control(self, r, y):
        if self.law == "open_loop":
            return r
        return control(r, y, self.kp)


def reference(t, signal=None):
    """Reference signal; defaults to ``100 + 2.5 exp(-t) sin(10 t)``."""
    return (signal or SignalSpec()).reference(t)


def control(r, y, kp=25.0):
    """Proportional law ``u = -kp (r - y)``."""
    return -kp * (r - y)


@dataclass(frozen=True)
class IntegratorConfig:
    h: float = 1e-4
    t_end: float = 30.0
    record_stride: int = 100

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h > 0):
            raise ConfigurationError("step size h must be positive", "integrator.h")
        if not (math.isfinite(self.t_end) and self.t_end > 0):
            raise ConfigurationError("t_end must be positive", "integrator.t_end")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ConfigurationError("record_stride must be a positive integer", "integrator.record_stride")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.h))


def rk4_increment(state, dynamics, t, h):
    """``h/6 (k1 + 2 k2 + 2 k3 + k4)`` for one classical Runge-Kutta step.

    Raises
    ------
    SimulationError
        If any stage derivative is not finite.
    """

    def stage(tt, ss):
        d = np.asarray(dynamics(tt, ss), dtype=float)
        if not np.all(np.isfinite(d)):
            raise SimulationError("non-finite derivative", tt)
        return d

    k1 = stage(t, state)
    k2 = stage(t + 0.5 * h, state + 0.5 * h * k1)
    k3 = stage(t + 0.5 * h, state + 0.5 * h * k2)
    k4 = stage(t + h, state + h * k3)
    return (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(state, dynamics, t, h):
    """One classical Runge-Kutta step of ``state' = dynamics(t, state)``."""
    state = np.asarray(state, dtype=float)
    return state + rk4_increment(state, dynamics, t, h)


class AugmentedLayout:
    """Offsets of every block in the augmented state and diagnostic rows."""

    def __init__(self, n, n_theta):
        self.n = n
        self.n_theta = n_theta
        m = self.m = 3 * n
        sizes = [
            ("x", (n,)),
            ("z", (n,)),
            ("Omega", (n, n)),
            ("P", (n, n)),
            ("Phi", (n, n)),
            ("q_bar", (m,)),
            ("phi_bar", (m, m)),
            ("eta_hat", (m,)),
            ("ti_hat", (n, n)),
        ]
        self.state_blocks = self._blocks(sizes, 0)
        self.size = sum(int(np.prod(s)) for _, s in sizes)
        dsizes = [
            ("Y", (m,)),
            ("Y_theta", (n_theta,)),
            ("Y_TI", (n, n)),
            ("phi", (m,)),
            ("xi_hat", (n,)),
            ("x_hat", (n,)),
        ]
        self.diag_blocks = self._blocks(dsizes, K_.N_SCALAR)
        self.diag_size = K_.N_SCALAR + sum(int(np.prod(s)) for _, s in dsizes)
        self.scalar_slots = {
            "y": K_.D_Y,
            "u": K_.D_U,
            "r": K_.D_R,
            "q": K_.D_Q,
            "Delta": K_.D_DELTA,
            "logdet_phibar": K_.D_LOGDET,
            "M_theta": K_.D_MTHETA,
            "M_TI": K_.D_MTI,
            "gamma_eta": K_.D_GETA,
            "gamma_ti": K_.D_GTI,
            "flags": K_.D_FLAGS,
        }

    @staticmethod
    def _blocks(sizes, start):
        out = {}
        i = start
        for name, shape in sizes:
            size = int(np.prod(shape))
            out[name] = (slice(i, i + size), shape)
            i += size
        return out

    def offsets(self):
        sb, db = self.state_blocks, self.diag_blocks
        return np.array(
            [
                sb["x"][0].start, sb["z"][0].start, sb["Omega"][0].start, sb["P"][0].start,
                sb["Phi"][0].start, sb["q_bar"][0].start, sb["phi_bar"][0].start,
                sb["eta_hat"][0].start, sb["ti_hat"][0].start, self.size,
                self.n, self.m, self.n_theta,
                db["Y"][0].start, db["Y_theta"][0].start, db["Y_TI"][0].start,
                db["phi"][0].start, db["xi_hat"][0].start, db["x_hat"][0].start, self.diag_size,
            ],
            dtype=np.int64,
        )

    def block(self, vec, name):
        sl, shape = self.state_blocks[name]
        return np.asarray(vec)[..., sl].reshape(np.shape(vec)[:-1] + shape)

    def filter_state(self, s, t0=0.0):
        start = self.state_blocks["z"][0].start
        stop = self.state_blocks["phi_bar"][0].stop
        return FilterState.from_vector(s[start:stop], self.n, t0)

    def initial_state(self, x0, eta_hat0=None, ti_hat0=None, t0=0.0):
        s = np.zeros(self.size)
        s[self.state_blocks["x"][0]] = x0
        s[self.state_blocks["Phi"][0]] = np.eye(self.n).ravel()
        if eta_hat0 is not None:
            s[self.state_blocks["eta_hat"][0]] = np.asarray(eta_hat0, dtype=float).ravel()
        if ti_hat0 is not None:
            s[self.state_blocks["ti_hat"][0]] = np.asarray(ti_hat0, dtype=float).ravel()
        return s


@dataclass
class Trajectory:
    """Sampled run.  ``channels`` maps names to arrays whose first axis is time."""

    times: np.ndarray
    channels: Dict[str, np.ndarray]
    meta: Dict[str, object] = field(default_factory=dict)

    def __getitem__(self, name):
        return self.channels[name]

    def __contains__(self, name):
        return name in self.channels

    def __len__(self):
        return self.times.size

    @property
    def h(self):
        return self.meta.get("h")


@dataclass(frozen=True)
class _Context:
    layout: AugmentedLayout
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    signal: SignalSpec
    filter: object
    gains: object
    mapset: object
    t0: float
    m_floor: float


def closed_loop_derivative(t, s, ctx):
    """Reference right-hand side built from the public API.

    Returns ``(ds, diag)`` with the same layouts as the compiled kernel.
    """
    L = ctx.layout
    n = L.n
    x = L.block(s, "x")
    y = float(ctx.C @ x)
    r = ctx.signal.reference(t)
    u = ctx.signal.control(r, y)

    fs = L.filter_state(s, ctx.t0)
    dfs = filter_derivatives(fs, y, u, ctx.filter, t)
    q, phi = regressor(fs, y)
    Y, Delta = drem_outputs(fs, ctx.filter)
    Y_ab = select_ab(Y, ctx.mapset.h1.selector)
    Y_theta, M_theta = theta_regression(Y_ab, Delta, ctx.mapset.h1)
    Y_TI, M_TI = ti_regression(Y_theta, M_theta, ctx.mapset.h2)
    gains = gain_schedule(Delta, M_TI, ctx.gains)

    eta_hat = L.block(s, "eta_hat")
    ti_hat = L.block(s, "ti_hat")
    ds = np.concatenate(
        [
            ctx.A @ x + ctx.B * u,
            dfs.to_vector(),
            eta_law(eta_hat, Delta, Y, gains.gamma_eta),
            ti_law(ti_hat, M_TI, Y_TI, gains.gamma_ti).ravel(),
        ]
    )

    flags = 0
    if abs(M_theta) < ctx.m_floor:
        flags += K_.FLAG_MTHETA_SMALL
    if gains.ti_guarded:
        flags += K_.FLAG_TI_GUARDED
    if Delta >= ctx.gains.rho and abs(M_TI) < ctx.m_floor:
        flags += K_.FLAG_MTI_SMALL
    obs = reconstruct_state(ti_hat, fs, eta_hat)

    diag = np.empty(L.diag_size)
    scal = L.scalar_slots
    for name, value in (
        ("y", y), ("u", u), ("r", r), ("q", q), ("Delta", Delta),
        ("logdet_phibar", slogdet_lu(np.ascontiguousarray(fs.phi_bar))[1]),
        ("M_theta", M_theta), ("M_TI", M_TI), ("gamma_eta", gains.gamma_eta),
        ("gamma_ti", gains.gamma_ti), ("flags", flags),
    ):
        diag[scal[name]] = value
    for name, value in (
        ("Y", Y), ("Y_theta", Y_theta), ("Y_TI", Y_TI), ("phi", phi),
        ("xi_hat", obs.xi_hat), ("x_hat", obs.x_hat),
    ):
        diag[L.diag_blocks[name][0]] = np.ravel(value)
    return ds, diag


def _context(scenario):
    plant = get_plant(scenario.plant)
    A, B = eval_plant(plant, scenario.theta)
    mapset = get_mapping_set(scenario.mappings)
    layout = AugmentedLayout(plant.n, len(mapset.h1.selector))
    return _Context(
        layout=layout,
        A=A,
        B=B,
        C=plant.C,
        signal=scenario.signal,
        filter=scenario.filter,
        gains=scenario.gains,
        mapset=mapset,
        t0=0.0,
        m_floor=mapset.m_floor,
    )


def _params(ctx):
    s, f, g = ctx.signal, ctx.filter, ctx.gains
    par = np.zeros(12)
    par[K_.SIGMA] = f.sigma
    par[K_.K_AMP] = f.k_amp
    par[K_.RHO] = g.rho
    par[K_.GAMMA1] = g.gamma1
    par[K_.T0] = ctx.t0
    par[K_.R_OFF] = s.offset
    par[K_.R_AMP] = s.amplitude
    par[K_.R_DECAY] = s.decay
    par[K_.R_FREQ] = s.frequency
    par[K_.KP] = s.kp
    par[K_.LAW] = CONTROL_LAWS[s.law]
    par[K_.FLOOR] = ctx.m_floor
    return par


def compiled_kernel(mapset):
    h1, h2 = mapset.h1, mapset.h2
    return K_.make_kernel(h1.G.apply, h1.S.apply, h2.P.apply, h2.Q.apply)


def _compiled_args(ctx):
    return (
        ctx.layout.offsets(),
        np.ascontiguousarray(ctx.A),
        np.ascontiguousarray(ctx.B),
        np.ascontiguousarray(ctx.C),
        np.ascontiguousarray(ctx.filter.K),
        np.ascontiguousarray(ctx.filter.A_K),
        ctx.mapset.selector,
        _params(ctx),
    )


def compiled_derivative(t, s, scenario):
    """Single evaluation of the compiled right-hand side (for testing)."""
    ctx = _context(scenario)
    assemble, _ = compiled_kernel(ctx.mapset)
    ds = np.empty(ctx.layout.size)
    dg = np.empty(ctx.layout.diag_size)
    ok = assemble(float(t), np.ascontiguousarray(s, dtype=float), *_compiled_args(ctx), ds, dg, True)
    return ds, dg, bool(ok)


def simulate(scenario, backend="compiled", eta_hat0=None, ti_hat0=None):
    """Integrate the closed loop described by ``scenario``.

    Estimates start at zero unless ``eta_hat0`` / ``ti_hat0`` are given.

    Raises
    ------
    SimulationError
        On a non-finite derivative.  ``err.partial`` carries the trajectory
        recorded up to the last valid sample.
    """
    ctx = _context(scenario)
    L = ctx.layout
    integ = scenario.integrator
    nsteps = integ.n_steps
    stride = int(integ.record_stride)
    nrec = nsteps // stride + 1
    s0 = L.initial_state(scenario.x0, eta_hat0, ti_hat0, ctx.t0)

    states = np.empty((nrec, L.size))
    diags = np.empty((nrec, L.diag_size))
    if backend == "compiled":
        _, integrate = compiled_kernel(ctx.mapset)
        status, rec, t_fail = integrate(
            s0, float(ctx.t0), float(integ.h), nsteps, stride, *_compiled_args(ctx), states, diags
        )
    elif backend == "python":
        status, rec, t_fail = _integrate_python(s0, ctx, integ.h, nsteps, stride, states, diags)
    else:
        raise ConfigurationError(f"unknown backend {backend!r}", "backend")

    times = ctx.t0 + np.arange(nrec) * stride * integ.h
    traj = _build_trajectory(scenario, ctx, times[:rec], states[:rec], diags[:rec])
    if status != 0:
        last = float(times[rec - 1]) if rec else None
        raise SimulationError("non-finite derivative", float(t_fail), last, traj)
    return traj


def _integrate_python(s0, ctx, h, nsteps, stride, states, diags):
    s = s0.copy()
    t0 = ctx.t0

    def rhs(t, ss):
        return closed_loop_derivative(t, ss, ctx)[0]

    try:
        ds, dg = closed_loop_derivative(t0, s, ctx)
        if not np.all(np.isfinite(ds)):
            return 1, 0, t0
        states[0], diags[0] = s, dg
        rec = 1
        comp = np.zeros_like(s)
        for i in range(nsteps):
            t = t0 + i * h
            # compensated update, same as the compiled loop
            inc = rk4_increment(s, rhs, t, h) - comp
            new = s + inc
            comp = (new - s) - inc
            s = new
            if (i + 1) % stride == 0:
                t_next = t0 + (i + 1) * h
                ds, dg = closed_loop_derivative(t_next, s, ctx)
                if not np.all(np.isfinite(ds)):
                    return 1, rec, t_next
                states[rec], diags[rec] = s, dg
                rec += 1
    except SimulationError as err:
        return 1, rec, err.t_fail
    return 0, rec, t0 + nsteps * h


def _build_trajectory(scenario, ctx, times, states, diags):
    L = ctx.layout
    ch = {}
    for name in L.state_blocks:
        ch[name] = L.block(states, name)
    for name, slot in L.scalar_slots.items():
        ch[name] = diags[:, slot].copy()
    for name, (sl, shape) in L.diag_blocks.items():
        ch[name] = diags[:, sl].reshape((-1,) + shape)
    ch["flags"] = ch["flags"].astype(np.int64)
    ch["H_T"] = np.concatenate([ch["Omega"], ch["P"], ch["Phi"]], axis=2)
    ch["state"] = states

    meta = {
        "scenario": scenario.name,
        "n": L.n,
        "n_theta": L.n_theta,
        "h": scenario.integrator.h,
        "record_stride": scenario.integrator.record_stride,
        "rho": scenario.gains.rho,
    }
    plant = get_plant(scenario.plant)
    try:
        cf = canonical_for(plant, scenario.theta, scenario.cond_cap)
    except Exception:  # unobservable truth: no canonical reference channels
        cf = None
    if cf is not None:
        ch["xi"] = ch["x"] @ cf.T.T
        meta["eta"] = cf.eta(scenario.x0)
        meta["T_I"] = np.array(cf.T_I)
        ch["x_err"] = np.linalg.norm(ch["x_hat"] - ch["x"], axis=1)
    return Trajectory(np.asarray(times, dtype=float), ch, meta)
