"""Overparametrized plants and their observer-canonical similarity transform.

A plant is ``x' = A(theta) x + B(theta) u``, ``y = C^T x``.  The canonical
realisation uses the state ``xi = T x`` in which

    xi' = A0 xi + psi_a y + psi_b u,     y = C0^T xi,

with ``A0`` the upper shift matrix and ``C0 = e1``.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .errors import ConfigurationError, UnobservablePlantError

DEFAULT_COND_CAP = 1e12


@dataclass(frozen=True)
class PlantDefinition:
    """Known mappings ``theta -> A(theta), B(theta)`` plus the output vector."""

    name: str
    n: int
    n_theta: int
    A_of: Callable[[np.ndarray], np.ndarray]
    B_of: Callable[[np.ndarray], np.ndarray]
    C: np.ndarray
    description: str = ""

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float).reshape(-1)
        if C.shape != (self.n,):
            raise ConfigurationError(
                f"plant {self.name!r}: C has length {C.size}, expected {self.n}", "C"
            )
        C.setflags(write=False)
        object.__setattr__(self, "C", C)


@dataclass(frozen=True)
class CanonicalForm:
    """Similarity transform and canonical-form vectors for one ``theta``.

    ``output_scale`` stores ``C^T T_I e1``; the construction below always gives
    1, but the value is kept so the output alignment can be checked.
    """

    T_I: np.ndarray
    T: np.ndarray
    psi_a: np.ndarray
    psi_b: np.ndarray
    A0: np.ndarray
    C0: np.ndarray
    output_scale: float = 1.0
    condition: float = field(default=1.0, compare=False)

    @property
    def n(self):
        return self.T_I.shape[0]

    def eta(self, x0):
        """Stack ``col{psi_a, psi_b, xi0}`` with ``xi0 = T x0``."""
        x0 = np.asarray(x0, dtype=float).reshape(-1)
        return np.concatenate([self.psi_a, self.psi_b, self.T @ x0])


def shift_matrix(n):
    """``A0``: ones on the first superdiagonal."""
    return np.eye(n, k=1)


def first_basis(n):
    e = np.zeros(n)
    e[0] = 1.0
    return e


def as_parameter_vector(theta, n_theta):
    """Validate ``theta`` as a finite real vector of length ``n_theta``."""
    arr = np.asarray(theta, dtype=float).reshape(-1)
    if arr.shape != (n_theta,):
        raise ConfigurationError(
            f"theta has length {arr.size}, expected {n_theta}", "theta"
        )
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError("theta must be finite", "theta")
    return arr


def eval_plant(plant, theta):
    """Evaluate ``(A(theta), B(theta))`` with shape and finiteness checks."""
    th = as_parameter_vector(theta, plant.n_theta)
    A = np.asarray(plant.A_of(th), dtype=float)
    B = np.asarray(plant.B_of(th), dtype=float).reshape(-1)
    n = plant.n
    if A.shape != (n, n) or B.shape != (n,):
        raise ConfigurationError(
            f"plant {plant.name!r} returned A{A.shape}, B{B.shape}; expected ({n}, {n}) and ({n},)"
        )
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ConfigurationError(f"plant {plant.name!r} produced non-finite matrices")
    return A, B


def observability_matrix(A, C):
    """Rows ``C^T A^i`` for ``i = 0 .. n-1``."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float).reshape(-1)
    n = A.shape[0]
    rows = np.empty((n, n))
    row = C.copy()
    for i in range(n):
        rows[i] = row
        row = row @ A
    return rows


def build_canonical(A, B, C, cond_cap=DEFAULT_COND_CAP):
    """Construct ``T_I = [A^{n-1} o_n, ..., A o_n, o_n]`` and ``psi_a, psi_b``.

    ``o_n`` is the last column of the inverse observability matrix.

    Raises
    ------
    UnobservablePlantError
        If the observability matrix condition number exceeds ``cond_cap``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float).reshape(-1)
    C = np.asarray(C, dtype=float).reshape(-1)
    n = A.shape[0]
    obs = observability_matrix(A, C)
    cond = np.linalg.cond(obs)
    if not np.isfinite(cond) or cond > cond_cap:
        raise UnobservablePlantError("observability matrix is not invertible", cond)

    e_n = np.zeros(n)
    e_n[-1] = 1.0
    o_n = np.linalg.solve(obs, e_n)

    T_I = np.empty((n, n))
    col = o_n
    for j in range(n - 1, -1, -1):
        T_I[:, j] = col
        col = A @ col
    T = np.linalg.inv(T_I)

    C0 = first_basis(n)
    psi_a = T @ (A @ T_I[:, 0])
    psi_b = T @ B
    for arr in (T_I, T, psi_a, psi_b):
        arr.setflags(write=False)
    return CanonicalForm(
        T_I=T_I,
        T=T,
        psi_a=psi_a,
        psi_b=psi_b,
        A0=shift_matrix(n),
        C0=C0,
        output_scale=float(C @ T_I[:, 0]),
        condition=float(cond),
    )


def canonical_for(plant, theta, cond_cap=DEFAULT_COND_CAP):
    A, B = eval_plant(plant, theta)
    return build_canonical(A, B, plant.C, cond_cap)


def similarity_residuals(plant, theta, cf):
    """Norms of the three canonical-form identities (0 for an exact transform)."""
    A, B = eval_plant(plant, theta)
    C0 = cf.C0
    r1 = np.linalg.norm(cf.T @ A @ cf.T_I - cf.A0 - np.outer(cf.psi_a, C0))
    r2 = np.linalg.norm(cf.T @ B - cf.psi_b)
    out = plant.C @ cf.T_I
    r3 = np.linalg.norm(out - (out @ C0) * C0)
    return float(r1), float(r2), float(r3)


_PLANTS: Dict[str, PlantDefinition] = {}


def register_plant(plant):
    _PLANTS[plant.name] = plant
    return plant


def get_plant(name):
    from . import ices2022  # noqa: F401  registers the built-in plant

    try:
        return _PLANTS[name]
    except KeyError:
        raise ConfigurationError(f"unknown plant {name!r}", "plant") from None


def plant_names():
    from . import ices2022  # noqa: F401

    return sorted(_PLANTS)
