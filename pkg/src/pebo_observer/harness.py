"""End-to-end runs: simulate, write CSV, compute metrics, check thresholds.

Every metric is a function of the column table that goes into
``trajectory.csv`` (plus ``regressor.csv`` for the excitation level and the
ground truth implied by the echoed ``theta`` and ``x0``), so
:func:`metrics_from_csv` on a run directory reproduces the in-memory numbers
exactly.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import ConfigurationError, SimulationError
from .mappings import (
    check_heterogeneity,
    get_mapping_set,
    select_ab,
    theta_regression,
    ti_regression,
)
from .observer import EstimateChannels, TruthChannels, error_diagnostics, fit_envelope, first_crossing
from .plant import canonical_for, get_plant
from .simulation import simulate

TRAJECTORY_CSV = "trajectory.csv"
REGRESSOR_CSV = "regressor.csv"
METRICS_JSON = "metrics.json"

# relative tolerance on final errors used by ``--check``
FINAL_ERROR_TOL = 1e-3
# |M_theta| / |Delta|**l_theta estimates |det G(psi_ab)|; below this the
# parameters are treated as not identifiable
IDENTIFIABILITY_FLOOR = 1e-3


def detect_te(Delta, rho, times=None):
    """First time ``Delta >= rho``; ``None`` if it never happens.

    Without ``times`` the sample index is returned instead.
    """
    Delta = np.asarray(Delta, dtype=float)
    if times is None:
        times = np.arange(Delta.size, dtype=float)
    return first_crossing(np.asarray(times, dtype=float), Delta, rho)


def excitation_level(times, phi, t_start, t_end):
    """Smallest eigenvalue of the trapezoid integral of ``phi phi^T`` over a window.

    Raises
    ------
    ConfigurationError
        If the window is inverted, outside the record, or holds fewer than
        two samples.
    """
    times = np.asarray(times, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if not t_start < t_end:
        raise ConfigurationError(f"empty window [{t_start}, {t_end}]", "window")
    if times.size == 0 or t_start < times[0] - 1e-12 or t_end > times[-1] + 1e-12:
        raise ConfigurationError(f"window [{t_start}, {t_end}] lies outside the recorded range", "window")
    sel = (times >= t_start - 1e-12) & (times <= t_end + 1e-12)
    if np.count_nonzero(sel) < 2:
        raise ConfigurationError(f"window [{t_start}, {t_end}] holds fewer than two samples", "window")
    t, p = times[sel], phi[sel]
    outer = p[:, :, None] * p[:, None, :]
    dt = np.diff(t)[:, None, None]
    gram = np.sum(0.5 * dt * (outer[1:] + outer[:-1]), axis=0)
    return float(np.linalg.eigvalsh(0.5 * (gram + gram.T))[0])


def diagnose(traj, slack=1e-9):
    """:func:`~pebo_observer.observer.error_diagnostics` for a simulated trajectory."""
    truth = TruthChannels(traj.times, traj["x"], traj["xi"], traj.meta["eta"], traj.meta["T_I"])
    est = EstimateChannels(
        times=traj.times,
        x_hat=traj["x_hat"],
        eta_hat=traj["eta_hat"],
        T_I_hat=traj["ti_hat"],
        H_T=traj["H_T"],
        Delta=traj["Delta"],
        M_TI=traj["M_TI"],
        gamma_eta=traj["gamma_eta"],
        gamma_ti=traj["gamma_ti"],
        rho=traj.meta["rho"],
    )
    return error_diagnostics(truth, est, slack)


# -- CSV ----------------------------------------------------------------------

def csv_header(n):
    m = 3 * n
    cols = ["t"]
    cols += [f"x{i}" for i in range(1, n + 1)]
    cols += ["y", "u"]
    cols += [f"xhat{i}" for i in range(1, n + 1)]
    cols += ["xerr"]
    cols += [f"eta_hat_{i}" for i in range(1, m + 1)]
    cols += [f"ti_hat_{i}{j}" for i in range(1, n + 1) for j in range(1, n + 1)]
    cols += ["Delta", "M_theta", "M_TI", "q", "gamma_eta", "gamma_ti", "logdet_phibar"]
    return cols


def trajectory_table(traj):
    """``(header, rows)`` for ``trajectory.csv``."""
    n = traj.meta["n"]
    N = len(traj)
    xerr = np.linalg.norm(traj["x_hat"] - traj["x"], axis=1)
    data = np.column_stack(
        [
            traj.times,
            traj["x"],
            traj["y"],
            traj["u"],
            traj["x_hat"],
            xerr,
            traj["eta_hat"],
            traj["ti_hat"].reshape(N, n * n),
            traj["Delta"],
            traj["M_theta"],
            traj["M_TI"],
            traj["q"],
            traj["gamma_eta"],
            traj["gamma_ti"],
            traj["logdet_phibar"],
        ]
    )
    return csv_header(n), data


def regressor_table(traj):
    m = traj["phi"].shape[1]
    return ["t"] + [f"phi_{i}" for i in range(1, m + 1)], np.column_stack([traj.times, traj["phi"]])


def _fmt(v):
    return repr(float(v))


def write_csv(path, header, data):
    """Write with shortest round-trip decimals; identical input gives identical bytes."""
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Read a CSV written by :func:`write_csv` into ``{column: array}``."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _block(cols, prefix, names):
    return np.column_stack([cols[prefix + s] for s in names])


def columns_to_blocks(cols):
    """Regroup CSV columns into ``times, x, x_hat, xerr, eta_hat, ti_hat, ...``."""
    n = sum(1 for k in cols if k.startswith("xhat"))
    m = 3 * n
    N = cols["t"].size
    idx = [str(i) for i in range(1, n + 1)]
    return {
        "t": cols["t"],
        "x": _block(cols, "x", idx),
        "x_hat": _block(cols, "xhat", idx),
        "xerr": cols["xerr"],
        "eta_hat": _block(cols, "eta_hat_", [str(i) for i in range(1, m + 1)]),
        "ti_hat": _block(cols, "ti_hat_", [f"{i}{j}" for i in idx for j in idx]).reshape(N, n, n),
        "Delta": cols["Delta"],
        "M_theta": cols["M_theta"],
        "M_TI": cols["M_TI"],
        "gamma_eta": cols["gamma_eta"],
        "gamma_ti": cols["gamma_ti"],
    }


# -- metrics --------------------------------------------------------------------

def _opt(v):
    return None if v is None else float(v)


def truth_for(echo):
    """Ground-truth ``(eta, T_I)`` implied by an echoed configuration."""
    plant = get_plant(echo["plant"])
    cf = canonical_for(plant, np.asarray(echo["theta"], dtype=float), echo.get("canonical.cond_cap", 1e12))
    return cf.eta(np.asarray(echo["x0"], dtype=float)), np.array(cf.T_I)


def compute_metrics(cols, phi_cols, echo):
    """Run summary from CSV-shaped columns.

    ``cols`` maps ``trajectory.csv`` headers to arrays, ``phi_cols`` does the
    same for ``regressor.csv``; ``echo`` is the configuration echo.
    """
    b = columns_to_blocks(cols)
    t = b["t"]
    rho = float(echo["gains.rho"])
    eta, T_I = truth_for(echo)
    mapset = get_mapping_set(echo["mappings"])

    eta_err = np.linalg.norm(b["eta_hat"] - eta[None, :], axis=1)
    ti_err = np.linalg.norm(b["ti_hat"] - T_I[None], ord=2, axis=(1, 2))
    x_max = float(np.max(np.linalg.norm(b["x"], axis=1)))

    t_e = detect_te(b["Delta"], rho, t)
    post = None if t_e is None else t >= t_e
    pre = t < t_e if t_e is not None else np.ones(t.size, dtype=bool)
    # largest change of any estimate while the gate is closed
    est = np.column_stack([b["eta_hat"], b["ti_hat"].reshape(t.size, -1)])
    frozen_drift = float(np.max(np.abs(est[pre] - est[0]))) if np.any(pre) else 0.0

    m = {
        "n_samples": int(t.size),
        "t_final": float(t[-1]),
        "t_e": _opt(t_e),
        "Delta_min_after_te": None if post is None else float(np.min(b["Delta"][post])),
        "Delta_final": float(b["Delta"][-1]),
        "Delta_max": float(np.max(b["Delta"])),
        "x_max": x_max,
        "x_err_final": float(b["xerr"][-1]),
        "x_err_final_rel": float(b["xerr"][-1] / x_max) if x_max > 0 else None,
        "eta_err_initial": float(eta_err[0]),
        "eta_err_final": float(eta_err[-1]),
        "eta_err_final_rel": float(eta_err[-1] / np.linalg.norm(eta)),
        "TI_err_initial": float(ti_err[0]),
        "TI_err_final": float(ti_err[-1]),
        "TI_err_final_rel": float(ti_err[-1] / np.linalg.norm(T_I, 2)),
        "frozen_drift_before_te": frozen_drift,
        "M_theta_below_floor_fraction": float(np.mean(np.abs(b["M_theta"]) < mapset.m_floor)),
        "M_TI_min_abs_after_te": None if post is None else float(np.min(np.abs(b["M_TI"][post]))),
        "det_G_estimate_final": None,
        "identifiable": None,
        "eta_decay_rate": None,
        "eta_rate_bound": None,
        "TI_decay_rate": None,
        "TI_rate_bound": None,
        "alpha": None,
        "alpha_window": [float(echo["analysis.fe_from"]), float(echo["analysis.fe_to"])],
        # log det(phi_bar) is -inf while phi_bar is singular, which is legitimate
        "all_finite": bool(
            all(np.all(np.isfinite(v)) for k, v in cols.items() if k != "logdet_phibar")
            and not np.any(np.isnan(cols["logdet_phibar"]))
        ),
    }
    if post is not None and np.count_nonzero(post) >= 2:
        env = fit_envelope(t[post], eta_err[post])
        m["eta_decay_rate"] = None if env is None else env.rate
        m["eta_rate_bound"] = float(np.min(b["gamma_eta"][post] * b["Delta"][post] ** 2))
        env = fit_envelope(t[post], ti_err[post])
        m["TI_decay_rate"] = None if env is None else env.rate
        m["TI_rate_bound"] = float(np.min(b["gamma_ti"][post] * b["M_TI"][post] ** 2))
    if t_e is not None:
        l_theta = mapset.h1.G.degree
        m["det_G_estimate_final"] = float(abs(b["M_theta"][-1]) / abs(b["Delta"][-1]) ** l_theta)
        m["identifiable"] = bool(m["det_G_estimate_final"] >= IDENTIFIABILITY_FLOOR)
    lo, hi = m["alpha_window"]
    phi = np.column_stack([phi_cols[k] for k in phi_cols if k != "t"])
    try:
        m["alpha"] = excitation_level(phi_cols["t"], phi, lo, min(hi, float(t[-1])))
    except ConfigurationError:
        m["alpha"] = None
    return m


def threshold_checks(metrics, echo):
    """``[(name, ok, detail)]`` for every acceptance threshold applied by ``--check``."""
    fe_to = float(echo["analysis.fe_to"])
    out = []

    def add(name, ok, detail):
        out.append((name, bool(ok), detail))

    te = metrics["t_e"]
    add("finite", metrics["all_finite"], "all recorded channels finite")
    add("t_e", te is not None and te <= fe_to, f"t_e={te} <= {fe_to}")
    dmin = metrics["Delta_min_after_te"]
    add("Delta_min", dmin is not None and dmin > 0, f"min Delta after t_e = {dmin}")
    add("identifiable", metrics["identifiable"], f"|det G| estimate = {metrics['det_G_estimate_final']}")
    for key in ("x_err_final_rel", "eta_err_final_rel", "TI_err_final_rel"):
        v = metrics[key]
        add(key, v is not None and v <= FINAL_ERROR_TOL, f"{key}={v} <= {FINAL_ERROR_TOL}")
    return out


def metrics_from_csv(run_dir, echo=None):
    """Recompute metrics from the files of a finished run directory."""
    run_dir = Path(run_dir)
    if echo is None:
        echo = json.loads((run_dir / METRICS_JSON).read_text())["config"]
    return compute_metrics(read_csv(run_dir / TRAJECTORY_CSV), read_csv(run_dir / REGRESSOR_CSV), echo)


@dataclass
class RunArtifacts:
    out_dir: Path
    csv_path: Path
    regressor_path: Path
    metrics_path: Path
    metrics: Dict[str, object]
    config: Dict[str, object]
    checks: List[tuple] = field(default_factory=list)
    trajectory: Optional[object] = None

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)


def _table_dicts(header, data):
    return {name: data[:, i] for i, name in enumerate(header)}


def run(config, out_dir=None, backend="compiled"):
    """Simulate ``config`` and write ``trajectory.csv``, ``regressor.csv`` and ``metrics.json``.

    Raises
    ------
    SimulationError
        Propagated after the samples recorded before the failure are flushed.
    """
    out = Path(out_dir if out_dir is not None else config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    echo = config.echo()
    paths = (out / TRAJECTORY_CSV, out / REGRESSOR_CSV, out / METRICS_JSON)
    try:
        traj = simulate(config, backend=backend)
    except SimulationError as err:
        if err.partial is not None and len(err.partial):
            write_csv(paths[0], *trajectory_table(err.partial))
            write_csv(paths[1], *regressor_table(err.partial))
        raise

    header, data = trajectory_table(traj)
    rheader, rdata = regressor_table(traj)
    write_csv(paths[0], header, data)
    write_csv(paths[1], rheader, rdata)
    # go through the text form so in-memory and reloaded metrics see identical floats
    metrics = compute_metrics(_table_dicts(header, data), _table_dicts(rheader, rdata), echo)
    checks = threshold_checks(metrics, echo)
    doc = {
        "config": echo,
        "metrics": metrics,
        "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks],
    }
    paths[2].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return RunArtifacts(out, paths[0], paths[1], paths[2], metrics, echo, checks, traj)


# -- mapping property suite -------------------------------------------------------

@dataclass
class MappingReport:
    plant: str
    samples: int
    rejected: int
    max_heterogeneity: Dict[str, float]
    heterogeneity_det_ok: bool
    max_theta_rel: float
    max_ti_rel: float
    theta_bound_ok: bool
    ti_bound_ok: bool
    failures: List[str]

    @property
    def ok(self):
        return not self.failures


def sample_parameters(rng, mapset, n_theta, lo=0.2, hi=2.0, det_tol=1e-6, cond_cap=1e12):
    """Random ``theta`` with ``|theta_i|`` in ``[lo, hi]``, rejecting degenerate draws.

    Returns ``(theta, eta, T_I, rejected_count)``.
    """
    plant = get_plant(mapset.plant)
    rejected = 0
    while True:
        theta = rng.uniform(lo, hi, n_theta) * rng.choice([-1.0, 1.0], n_theta)
        try:
            cf = canonical_for(plant, theta, cond_cap)
        except Exception:
            rejected += 1
            continue
        eta = cf.eta(np.zeros(plant.n))
        psi_ab = select_ab(eta, mapset.h1.selector)
        G = np.asarray(mapset.h1.G.apply(1.0, np.ascontiguousarray(psi_ab)))
        P = np.asarray(mapset.h2.P.apply(1.0, np.ascontiguousarray(theta)))
        if abs(np.linalg.det(G)) < det_tol or abs(np.linalg.det(P)) < det_tol:
            rejected += 1
            continue
        return theta, eta, np.array(cf.T_I), rejected


def verify_mappings(plant, samples=100, seed=0, hetero_samples=None, tol=1e-9, hetero_tol=1e-10):
    """Property suite for a registered mapping set.

    * Definition-1 residuals of all four transforms (relative to ``|Pi F|``)
      on random ``(omega, x)``, plus ``det Pi(omega) >= omega**degree``;
    * the pipeline ``Y = Delta eta -> (Y_theta, M_theta) -> (Y_TI, M_TI)``
      against ``theta`` and the observability-built ``T_I``;
    * the lower bounds ``|M_theta| >= |Delta|**l_theta |det G|`` and
      ``|M_TI| >= |M_theta|**l_TI |det P|``.
    """
    mapset = get_mapping_set(plant)
    pdef = get_plant(mapset.plant)
    rng = np.random.default_rng(seed)
    hetero_samples = hetero_samples or max(1000, samples)
    failures = []

    specs = {
        s.name: (s, n_in)
        for s, n_in in (
            (mapset.h1.G, len(mapset.h1.selector)),
            (mapset.h1.S, len(mapset.h1.selector)),
            (mapset.h2.P, pdef.n_theta),
            (mapset.h2.Q, pdef.n_theta),
        )
    }
    hetero = {}
    det_ok = True
    for name, (spec, n_in) in specs.items():
        worst = 0.0
        for _ in range(hetero_samples):
            omega = rng.uniform(0.1, 2.0) * rng.choice([-1.0, 1.0])
            x = rng.uniform(-2.0, 2.0, n_in)
            chk = check_heterogeneity(spec, omega, x)
            scale = max(1.0, float(np.linalg.norm(np.asarray(spec.Pi_of(omega)) @ np.asarray(spec.F(x)))))
            worst = max(worst, chk.residual / scale)
            det_ok &= chk.det_ok
        hetero[name] = worst
        if worst >= hetero_tol:
            failures.append(f"{name}: heterogeneity residual {worst:.3e} >= {hetero_tol:g}")
    if not det_ok:
        failures.append("det Pi(omega) >= omega**degree violated")

    l_theta = mapset.h1.G.degree
    l_ti = mapset.h2.P.degree
    max_theta = max_ti = 0.0
    theta_bound = ti_bound = True
    rejected = 0
    for _ in range(samples):
        theta, eta, T_I, rej = sample_parameters(rng, mapset, pdef.n_theta)
        rejected += rej
        Delta = rng.uniform(0.5, 2.0)
        Y_ab = select_ab(Delta * eta, mapset.h1.selector)
        Y_theta, M_theta = theta_regression(Y_ab, Delta, mapset.h1)
        Y_TI, M_TI = ti_regression(Y_theta, M_theta, mapset.h2)
        r1 = np.linalg.norm(Y_theta - M_theta * theta) / (abs(M_theta) * np.linalg.norm(theta))
        r2 = np.linalg.norm(Y_TI - M_TI * T_I) / (abs(M_TI) * np.linalg.norm(T_I))
        max_theta, max_ti = max(max_theta, r1), max(max_ti, r2)

        psi_ab = select_ab(eta, mapset.h1.selector)
        det_G = abs(np.linalg.det(np.asarray(mapset.h1.G.F(psi_ab))))
        det_P = abs(np.linalg.det(np.asarray(mapset.h2.P.F(theta))))
        theta_bound &= abs(M_theta) >= abs(Delta) ** l_theta * det_G * (1 - tol)
        ti_bound &= abs(M_TI) >= abs(M_theta) ** l_ti * det_P * (1 - tol)

    if not max_theta <= tol:
        failures.append(f"theta regression relative error {max_theta:.3e} > {tol:g}")
    if not max_ti <= tol:
        failures.append(f"T_I regression relative error {max_ti:.3e} > {tol:g}")
    if not theta_bound:
        failures.append("|M_theta| lower bound violated")
    if not ti_bound:
        failures.append("|M_TI| lower bound violated")
    return MappingReport(
        plant, samples, rejected, hetero, bool(det_ok), float(max_theta), float(max_ti),
        bool(theta_bound), bool(ti_bound), failures,
    )


def excitation_from_csv(path, t_start, t_end):
    """Excitation level from a ``regressor.csv`` (or a run directory holding one)."""
    p = Path(path)
    if p.is_dir():
        p = p / REGRESSOR_CSV
    elif p.name == TRAJECTORY_CSV:
        p = p.with_name(REGRESSOR_CSV)
    if not p.is_file():
        raise ConfigurationError(f"{str(p)!r} not found", "csv")
    cols = read_csv(p)
    phi_names = [k for k in cols if k.startswith("phi_")]
    if not phi_names:
        raise ConfigurationError(f"{str(p)!r} has no phi_ columns", "csv")
    phi = np.column_stack([cols[k] for k in phi_names])
    return excitation_level(cols["t"], phi, t_start, t_end)
