"""Heterogeneous mappings and the two regression conversions.

A mapping ``F`` is heterogeneous of degree ``l`` when a scaling ``Pi(w)`` and a
transformed evaluator ``T`` exist with

    Pi(w) F(x) = T(w, Xi(w) x),   Xi(w) = Xi_bar(w) * w,   det Pi(w) >= w**l.

Because ``Xi(w) x = Xi_bar(w) (w x)``, ``T`` can be evaluated on a measured
scaled quantity ``w x`` without ever knowing ``x``.  This is what turns

    Y = Delta * eta          into   Y_theta = M_theta * theta
    Y_theta = M_theta*theta  into   Y_TI = M_TI * T_I(theta).

``T`` receives ``w`` explicitly so that constant entries of ``F`` (which scale
to pure powers of ``w``) can be represented.
"""

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, NamedTuple, Optional, Tuple

import numpy as np
from numba import njit

from .errors import ConfigurationError
from .linalg import adjugate, det_lu


def _compose(xi_bar_of, t_of):
    @njit
    def apply(omega, y):
        xb = xi_bar_of(omega)
        v = np.zeros(xb.shape[0])
        for i in range(xb.shape[0]):
            acc = 0.0
            for j in range(xb.shape[1]):
                acc += xb[i, j] * y[j]
            v[i] = acc
        return t_of(omega, v)

    return apply


@dataclass(frozen=True)
class HeterogeneousMappingSpec:
    """One heterogeneous mapping together with its scaled evaluator.

    ``Xi_bar_of`` and ``T_of`` must be numba-compiled so the simulation kernel
    can inline them; ``F`` and ``Pi_of`` are plain Python and only used for
    checks.
    """

    name: str
    n_in: int
    out_shape: Tuple[int, ...]
    degree: float
    F: Callable[[np.ndarray], np.ndarray]
    Pi_of: Callable[[float], np.ndarray]
    Xi_bar_of: Callable
    T_of: Callable

    def Xi_of(self, omega):
        return np.asarray(self.Xi_bar_of(float(omega))) * omega

    @cached_property
    def apply(self):
        """Compiled ``(w, y) -> T(w, Xi_bar(w) y)`` where ``y`` is already scaled."""
        return _compose(self.Xi_bar_of, self.T_of)


class HeterogeneityCheck(NamedTuple):
    residual: float
    det_pi: float
    det_ok: bool


def check_heterogeneity(spec, omega, x):
    """Residual of ``Pi(w) F(x) - T(w, Xi(w) x)`` plus the determinant bound.

    The bound ``det Pi(w) >= w**degree`` is only meaningful for ``w > 0``; for
    negative ``w`` ``det_ok`` is reported as True.
    """
    omega = float(omega)
    if omega == 0.0:
        raise ConfigurationError("heterogeneity check requires |omega| > 0", "omega")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != (spec.n_in,):
        raise ConfigurationError(f"{spec.name}: x must have length {spec.n_in}")
    Pi = np.asarray(spec.Pi_of(omega), dtype=float)
    lhs = Pi @ np.asarray(spec.F(x), dtype=float)
    rhs = np.asarray(spec.T_of(omega, spec.Xi_of(omega) @ x))
    residual = float(np.linalg.norm(lhs - rhs))
    det_pi = float(np.linalg.det(Pi))
    det_ok = True
    if omega > 0:
        bound = omega**spec.degree
        det_ok = det_pi >= bound * (1.0 - 1e-12)
    return HeterogeneityCheck(residual, det_pi, det_ok)


@dataclass(frozen=True)
class Hypothesis1Maps:
    """``S(psi_ab) = G(psi_ab) theta`` with ``psi_ab = eta[selector]``."""

    selector: Tuple[int, ...]
    G: HeterogeneousMappingSpec
    S: HeterogeneousMappingSpec
    degree: float


@dataclass(frozen=True)
class Hypothesis2Maps:
    """``Q(theta) = P(theta) T_I(theta)``."""

    P: HeterogeneousMappingSpec
    Q: HeterogeneousMappingSpec
    degree: float


@dataclass(frozen=True)
class MappingSet:
    """Everything needed to go from ``(Y, Delta)`` to ``(Y_TI, M_TI)`` for one plant.

    ``psi_ab_of`` is the closed-form ``theta -> psi_ab`` used for the
    identifiability check; ``m_floor`` marks near-zero mixed determinants in
    the diagnostics without altering any computed value.
    """

    name: str
    plant: str
    h1: Hypothesis1Maps
    h2: Hypothesis2Maps
    psi_ab_of: Optional[Callable[[np.ndarray], np.ndarray]] = None
    m_floor: float = 1e-12
    extras: Dict[str, Callable] = field(default_factory=dict, compare=False)

    @property
    def selector(self):
        return np.asarray(self.h1.selector, dtype=np.int64)


@dataclass(frozen=True)
class RegressionBundle:
    Y: np.ndarray
    Delta: float
    Y_ab: np.ndarray
    Y_theta: np.ndarray
    M_theta: float
    Y_TI: np.ndarray
    M_TI: float


def select_ab(v, selector):
    """Pick the ``psi_ab`` components out of a ``3n`` vector."""
    v = np.asarray(v, dtype=float).reshape(-1)
    idx = np.asarray(selector, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= v.size):
        raise ConfigurationError(
            f"selector {tuple(idx)} out of range for a vector of length {v.size}",
            "selector",
        )
    return v[idx]


def theta_regression(Y_ab, Delta, maps):
    """``Y_theta = adj(T_G) T_S`` and ``M_theta = det(T_G)`` evaluated at ``(Delta, Y_ab)``."""
    Y_ab = np.ascontiguousarray(Y_ab, dtype=float)
    G = np.asarray(maps.G.apply(float(Delta), Y_ab))
    S = np.asarray(maps.S.apply(float(Delta), Y_ab))
    return adjugate(G) @ S, float(det_lu(G))


def ti_regression(Y_theta, M_theta, maps):
    """``Y_TI = adj(T_P) T_Q`` and ``M_TI = det(T_P)`` evaluated at ``(M_theta, Y_theta)``."""
    Y_theta = np.ascontiguousarray(Y_theta, dtype=float)
    P = np.asarray(maps.P.apply(float(M_theta), Y_theta))
    Q = np.asarray(maps.Q.apply(float(M_theta), Y_theta))
    return adjugate(P) @ Q, float(det_lu(P))


def regress(Y, Delta, mapset):
    """Run the full ``(Y, Delta) -> (Y_theta, M_theta) -> (Y_TI, M_TI)`` chain."""
    Y = np.asarray(Y, dtype=float).reshape(-1)
    Y_ab = select_ab(Y, mapset.h1.selector)
    Y_theta, M_theta = theta_regression(Y_ab, Delta, mapset.h1)
    Y_TI, M_TI = ti_regression(Y_theta, M_theta, mapset.h2)
    return RegressionBundle(Y, float(Delta), Y_ab, Y_theta, M_theta, Y_TI, M_TI)


def jacobian_condition(psi_ab_of, theta, h_fd=1e-5):
    """Central-difference ``det(d psi_ab / d theta)`` at ``theta``."""
    if h_fd <= 0:
        raise ConfigurationError("finite-difference step must be positive", "h_fd")
    theta = np.asarray(theta, dtype=float).reshape(-1)
    k = theta.size
    J = np.empty((k, k))
    for j in range(k):
        step = np.zeros(k)
        step[j] = h_fd
        J[:, j] = (np.asarray(psi_ab_of(theta + step)) - np.asarray(psi_ab_of(theta - step))) / (2 * h_fd)
    return float(det_lu(J))


_MAPPING_SETS: Dict[str, MappingSet] = {}


def register_mapping_set(ms):
    _MAPPING_SETS[ms.name] = ms
    return ms


def get_mapping_set(name):
    from . import ices2022  # noqa: F401

    try:
        return _MAPPING_SETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown mapping set {name!r}", "mappings") from None
