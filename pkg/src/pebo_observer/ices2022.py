"""Built-in third-order benchmark plant and its regression mappings.

    A(theta) = [[0, t1 + t2, 0], [-t2, 0, t2], [0, -t3, 0]]
    B(theta) = [0, 0, t3],   C = [0, 0, 1]

Closed forms for the canonical vectors, the similarity transform and the
Hypothesis 1/2 mappings are provided for cross-checking; the simulation
itself only uses the numerically constructed transform and the compiled
``T_*`` evaluators below.
"""

import numpy as np
from numba import njit

from .mappings import (
    HeterogeneousMappingSpec,
    Hypothesis1Maps,
    Hypothesis2Maps,
    MappingSet,
    register_mapping_set,
)
from .plant import PlantDefinition, register_plant

NAME = "ices2022_example"

# psi_ab = (psi_a[2], psi_b[1], psi_b[3]) in 1-based numbering
SELECTOR = (1, 3, 5)


def A_of(theta):
    t1, t2, t3 = theta
    return np.array([[0.0, t1 + t2, 0.0], [-t2, 0.0, t2], [0.0, -t3, 0.0]])


def B_of(theta):
    return np.array([0.0, 0.0, theta[2]])


PLANT = register_plant(
    PlantDefinition(
        name=NAME,
        n=3,
        n_theta=3,
        A_of=A_of,
        B_of=B_of,
        C=np.array([0.0, 0.0, 1.0]),
        description="third-order SISO plant with three physical parameters",
    )
)


# -- closed forms -------------------------------------------------------------

def psi_a_closed(theta):
    t1, t2, t3 = theta
    return np.array([0.0, -(t1 + t2 + t3) * t2, 0.0])


def psi_b_closed(theta):
    t1, t2, t3 = theta
    return np.array([t3, 0.0, t3 * t2 * (t2 + t1)])


def psi_ab_closed(theta):
    t1, t2, t3 = theta
    return np.array([-(t1 + t2 + t3) * t2, t3, t3 * t2 * (t2 + t1)])


def T_I_closed(theta):
    t1, t2, t3 = theta
    return np.array(
        [
            [-(t1 + t2) / t3, 0.0, 1.0 / (t2 * t3)],
            [0.0, -1.0 / t3, 0.0],
            [1.0, 0.0, 0.0],
        ]
    )


def G_closed(psi):
    p1, p2, p3 = psi
    return np.diag([p2**3 * (p1 * p2 + p3), p2**2, p1])


def S_closed(psi):
    p1, p2, p3 = psi
    w = p1 * p2 + p3
    return np.array([p2 * w * w - p2**4 * p3, -p1 * p2 - p3, p2 * p1])


def P_closed(theta):
    _, t2, t3 = theta
    return np.diag([t2 * t3, t3, 1.0])


def Q_closed(theta):
    t1, t2, _ = theta
    return np.array([[-t2 * (t1 + t2), 0.0, 1.0], [0.0, -1.0, 0.0], [1.0, 0.0, 0.0]])


def Pi_theta(omega):
    return np.diag([omega**5, omega**2, omega**2])


def Pi_TI(omega):
    return np.diag([omega**2, omega, omega])


# -- compiled evaluators ------------------------------------------------------

@njit(cache=True)
def xi_bar_GS(omega):
    # v = (y1, y2, y3, omega*y3, omega*y1)
    out = np.zeros((5, 3))
    out[0, 0] = 1.0
    out[1, 1] = 1.0
    out[2, 2] = 1.0
    out[3, 2] = omega
    out[4, 0] = omega
    return out


@njit(cache=True)
def T_G(omega, v):
    out = np.zeros((3, 3))
    out[0, 0] = v[1] ** 3 * (v[0] * v[1] + v[3])
    out[1, 1] = v[1] * v[1]
    out[2, 2] = v[4]
    return out


@njit(cache=True)
def T_S(omega, v):
    w = v[0] * v[1] + v[3]
    out = np.empty(3)
    out[0] = v[1] * w * w - v[1] ** 4 * v[2]
    out[1] = -v[0] * v[1] - v[3]
    out[2] = v[1] * v[0]
    return out


@njit(cache=True)
def xi_bar_PQ(omega):
    return np.eye(3)


@njit(cache=True)
def T_P(omega, v):
    out = np.zeros((3, 3))
    out[0, 0] = v[1] * v[2]
    out[1, 1] = v[2]
    out[2, 2] = omega
    return out


@njit(cache=True)
def T_Q(omega, v):
    out = np.zeros((3, 3))
    out[0, 0] = -v[1] * (v[0] + v[1])
    out[0, 2] = omega * omega
    out[1, 1] = -omega
    out[2, 0] = omega
    return out


G_SPEC = HeterogeneousMappingSpec("T_G", 3, (3, 3), 9, G_closed, Pi_theta, xi_bar_GS, T_G)
S_SPEC = HeterogeneousMappingSpec("T_S", 3, (3,), 9, S_closed, Pi_theta, xi_bar_GS, T_S)
P_SPEC = HeterogeneousMappingSpec("T_P", 3, (3, 3), 4, P_closed, Pi_TI, xi_bar_PQ, T_P)
Q_SPEC = HeterogeneousMappingSpec("T_Q", 3, (3, 3), 4, Q_closed, Pi_TI, xi_bar_PQ, T_Q)

MAPPINGS = register_mapping_set(
    MappingSet(
        name=NAME,
        plant=NAME,
        h1=Hypothesis1Maps(SELECTOR, G_SPEC, S_SPEC, degree=9),
        h2=Hypothesis2Maps(P_SPEC, Q_SPEC, degree=4),
        psi_ab_of=psi_ab_closed,
        extras={"T_I": T_I_closed, "psi_a": psi_a_closed, "psi_b": psi_b_closed},
    )
)


def is_degenerate(theta, tol=1e-9):
    """True where ``det G(psi_ab(theta))`` or ``det P(theta)`` vanishes."""
    psi = psi_ab_closed(theta)
    return abs(np.linalg.det(G_closed(psi))) <= tol or abs(np.linalg.det(P_closed(theta))) <= tol
