"""GPEBO filter bank, regressor and determinant-based mixing.

With ``A_K = A0 - K C0^T`` Hurwitz, the canonical state satisfies

    xi(t) = z(t) + Omega(t) psi_a + P(t) psi_b + Phi(t) xi0

where ``z, Omega, P, Phi`` are outputs of stable filters driven by ``y`` and
``u``.  Projecting onto ``C0`` gives the scalar regression ``q = phi^T eta``;
the exponentially weighted accumulators ``q_bar = phi_bar eta`` are then mixed
with the adjugate into ``Y = Delta * eta``.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .linalg import adjugate_matvec, det_lu, slogdet_lu
from .plant import first_basis, shift_matrix


@dataclass(frozen=True)
class FilterConfig:
    K: np.ndarray
    sigma: float
    k_amp: float
    A_K: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(-1)
        if not np.all(np.isfinite(K)):
            raise ConfigurationError("filter gain K must be finite", "filter.K")
        if not self.sigma > 0:
            raise ConfigurationError("sigma must be positive", "filter.sigma")
        if not self.k_amp > 0:
            raise ConfigurationError("k_amp must be positive", "filter.k_amp")
        n = K.size
        A_K = shift_matrix(n) - np.outer(K, first_basis(n))
        if np.max(np.linalg.eigvals(A_K).real) >= 0:
            raise ConfigurationError(
                f"A0 - K C0^T is not Hurwitz for K={K.tolist()}", "filter.K"
            )
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "A_K", A_K)

    @property
    def n(self):
        return self.K.size


@dataclass(frozen=True)
class FilterState:
    z: np.ndarray
    Omega: np.ndarray
    P: np.ndarray
    Phi: np.ndarray
    q_bar: np.ndarray
    phi_bar: np.ndarray
    t0: float = 0.0

    @classmethod
    def initial(cls, n, t0=0.0):
        m = 3 * n
        return cls(
            z=np.zeros(n),
            Omega=np.zeros((n, n)),
            P=np.zeros((n, n)),
            Phi=np.eye(n),
            q_bar=np.zeros(m),
            phi_bar=np.zeros((m, m)),
            t0=t0,
        )

    @property
    def n(self):
        return self.z.size

    @property
    def H_T(self):
        """``H^T = [Omega, P, Phi]`` (n x 3n)."""
        return np.hstack([self.Omega, self.P, self.Phi])

    def to_vector(self):
        return np.concatenate(
            [self.z, self.Omega.ravel(), self.P.ravel(), self.Phi.ravel(), self.q_bar, self.phi_bar.ravel()]
        )

    @classmethod
    def from_vector(cls, v, n, t0=0.0):
        m = 3 * n
        i = 0
        parts = []
        for size, shape in ((n, (n,)), (n * n, (n, n)), (n * n, (n, n)), (n * n, (n, n)), (m, (m,)), (m * m, (m, m))):
            parts.append(np.asarray(v[i : i + size]).reshape(shape))
            i += size
        return cls(*parts, t0=t0)

    @staticmethod
    def size(n):
        return n + 3 * n * n + 3 * n + 9 * n * n


def regressor(fs, y):
    """``q = y - C0^T z`` and ``phi = col{Omega^T C0, P^T C0, Phi^T C0}``.

    With ``C0 = e1`` the blocks are simply the first rows of the filter
    matrices.
    """
    q = float(y) - fs.z[0]
    phi = np.concatenate([fs.Omega[0], fs.P[0], fs.Phi[0]])
    return q, phi


def filter_derivatives(fs, y, u, cfg, t):
    """Time derivative of every filter and accumulator, as a ``FilterState``."""
    A_K = cfg.A_K
    n = fs.n
    eye = np.eye(n)
    q, phi = regressor(fs, y)
    w = np.exp(-cfg.sigma * (t - fs.t0))
    return FilterState(
        z=A_K @ fs.z + cfg.K * y,
        Omega=A_K @ fs.Omega + eye * y,
        P=A_K @ fs.P + eye * u,
        Phi=A_K @ fs.Phi,
        q_bar=w * phi * q,
        phi_bar=w * np.outer(phi, phi),
        t0=fs.t0,
    )


def drem_outputs(fs, cfg):
    """``Y = k adj(phi_bar) q_bar`` and ``Delta = k det(phi_bar)``.

    The product ``adj(phi_bar) q_bar`` is formed by column replacement
    (``det`` of ``phi_bar`` with column ``i`` set to ``q_bar``), which stays
    accurate when ``phi_bar`` is badly conditioned; forming the cofactor
    matrix first does not.
    """
    pb = np.ascontiguousarray(fs.phi_bar, dtype=float)
    Y = cfg.k_amp * adjugate_matvec(pb, np.ascontiguousarray(fs.q_bar, dtype=float))
    Delta = cfg.k_amp * det_lu(pb)
    return Y, float(Delta)


def logdet_phi_bar(fs):
    return slogdet_lu(fs.phi_bar)[1]


def xi_estimate(fs, eta_hat):
    """``z + Omega psi_a + P psi_b + Phi xi0`` for a stacked ``eta_hat``."""
    return fs.z + fs.H_T @ np.asarray(eta_hat, dtype=float)
