"""Compiled right-hand side and fixed-step RK4 loop for the augmented system.

The augmented state stacks plant, filters, mixing accumulators and both
adaptive laws so every subsystem shares one clock.  Offsets into the state
and diagnostic rows come from :class:`pebo_observer.simulation.AugmentedLayout`
via the ``off`` array (see ``AugmentedLayout.offsets``).

The Python reference path in ``simulation.closed_loop_derivative`` computes
the same quantities from the public API; tests hold the two together.
"""

from functools import lru_cache

import numpy as np
from numba import njit

from .linalg import adjugate, adjugate_matvec, det_lu, matmul, matvec, slogdet_lu

# par[] indices
SIGMA, K_AMP, RHO, GAMMA1, T0, R_OFF, R_AMP, R_DECAY, R_FREQ, KP, LAW, FLOOR = range(12)
LAW_PROPORTIONAL, LAW_OPEN_LOOP = 0.0, 1.0

# scalar diagnostic slots
D_Y, D_U, D_R, D_Q, D_DELTA, D_LOGDET, D_MTHETA, D_MTI, D_GETA, D_GTI, D_FLAGS = range(11)
N_SCALAR = 11

FLAG_MTHETA_SMALL = 1
FLAG_TI_GUARDED = 2
FLAG_MTI_SMALL = 4

# off[] indices
(O_X, O_Z, O_OM, O_P, O_PHI, O_QB, O_PB, O_ETA, O_TI, O_TOTAL, O_N, O_M, O_NT,
 O_DY, O_DYTH, O_DYTI, O_DPHI, O_DXIH, O_DXH, O_DTOTAL) = range(20)


@lru_cache(maxsize=None)
def make_kernel(g_apply, s_apply, p_apply, q_apply):
    """Build ``(assemble, integrate)`` specialised to one mapping set."""

    @njit
    def assemble(t, s, off, A, B, C, K, AK, sel, par, ds, dg, full):
        n = off[O_N]
        m = off[O_M]
        nt = off[O_NT]
        ix, iz, iom, ip, iphi = off[O_X], off[O_Z], off[O_OM], off[O_P], off[O_PHI]
        iqb, ipb, ieta, iti = off[O_QB], off[O_PB], off[O_ETA], off[O_TI]

        y = 0.0
        for i in range(n):
            y += C[i] * s[ix + i]
        r = par[R_OFF] + par[R_AMP] * np.exp(-par[R_DECAY] * t) * np.sin(par[R_FREQ] * t)
        if par[LAW] == LAW_PROPORTIONAL:
            u = -par[KP] * (r - y)
        else:
            u = r

        # plant
        for i in range(n):
            acc = B[i] * u
            for j in range(n):
                acc += A[i, j] * s[ix + j]
            ds[ix + i] = acc

        # filter bank
        for i in range(n):
            acc = K[i] * y
            for j in range(n):
                acc += AK[i, j] * s[iz + j]
            ds[iz + i] = acc
        for i in range(n):
            for c in range(n):
                a_om = 0.0
                a_p = 0.0
                a_phi = 0.0
                for j in range(n):
                    a_om += AK[i, j] * s[iom + j * n + c]
                    a_p += AK[i, j] * s[ip + j * n + c]
                    a_phi += AK[i, j] * s[iphi + j * n + c]
                if i == c:
                    a_om += y
                    a_p += u
                ds[iom + i * n + c] = a_om
                ds[ip + i * n + c] = a_p
                ds[iphi + i * n + c] = a_phi

        # regressor (C0 = e1 picks first rows) and weighted accumulators
        q = y - s[iz]
        phi = np.empty(m)
        for c in range(n):
            phi[c] = s[iom + c]
            phi[n + c] = s[ip + c]
            phi[2 * n + c] = s[iphi + c]
        w = np.exp(-par[SIGMA] * (t - par[T0]))
        for i in range(m):
            wi = w * phi[i]
            ds[iqb + i] = wi * q
            for j in range(m):
                ds[ipb + i * m + j] = wi * phi[j]

        # mixing
        pb = s[ipb:ipb + m * m].reshape((m, m))
        qb = s[iqb:iqb + m]
        k = par[K_AMP]
        delta = k * det_lu(pb)
        Y = adjugate_matvec(pb, qb)
        for i in range(m):
            Y[i] *= k

        # eta -> theta -> T_I regressions
        yab = np.empty(nt)
        for i in range(nt):
            yab[i] = Y[sel[i]]
        G = g_apply(delta, yab)
        S = s_apply(delta, yab)
        m_theta = det_lu(G)
        y_theta = matvec(adjugate(G), S)
        Pm = p_apply(m_theta, y_theta)
        Qm = q_apply(m_theta, y_theta)
        m_ti = det_lu(Pm)
        y_ti = matmul(adjugate(Pm), Qm)

        flags = 0.0
        if abs(m_theta) < par[FLOOR]:
            flags += FLAG_MTHETA_SMALL
        g_eta = 0.0
        g_ti = 0.0
        if delta >= par[RHO]:
            g_eta = par[GAMMA1] / (delta * delta)
            m2 = m_ti * m_ti
            if m2 == 0.0 or not np.isfinite(m2):
                flags += FLAG_TI_GUARDED
            else:
                g_ti = par[GAMMA1] / m2
            if abs(m_ti) < par[FLOOR]:
                flags += FLAG_MTI_SMALL

        # adaptive laws
        if g_eta != 0.0:
            c1 = g_eta * delta
            for i in range(m):
                ds[ieta + i] = -c1 * (delta * s[ieta + i] - Y[i])
        else:
            for i in range(m):
                ds[ieta + i] = 0.0
        if g_ti != 0.0:
            c2 = g_ti * m_ti
            for i in range(n):
                for j in range(n):
                    ds[iti + i * n + j] = -c2 * (m_ti * s[iti + i * n + j] - y_ti[i, j])
        else:
            for i in range(n * n):
                ds[iti + i] = 0.0

        if full:
            dg[D_Y] = y
            dg[D_U] = u
            dg[D_R] = r
            dg[D_Q] = q
            dg[D_DELTA] = delta
            dg[D_LOGDET] = slogdet_lu(pb)[1]
            dg[D_MTHETA] = m_theta
            dg[D_MTI] = m_ti
            dg[D_GETA] = g_eta
            dg[D_GTI] = g_ti
            dg[D_FLAGS] = flags
            for i in range(m):
                dg[off[O_DY] + i] = Y[i]
                dg[off[O_DPHI] + i] = phi[i]
            for i in range(nt):
                dg[off[O_DYTH] + i] = y_theta[i]
            for i in range(n):
                for j in range(n):
                    dg[off[O_DYTI] + i * n + j] = y_ti[i, j]
            ixh = off[O_DXIH]
            for i in range(n):
                acc = s[iz + i]
                for c in range(n):
                    acc += s[iom + i * n + c] * s[ieta + c]
                    acc += s[ip + i * n + c] * s[ieta + n + c]
                    acc += s[iphi + i * n + c] * s[ieta + 2 * n + c]
                dg[ixh + i] = acc
            for i in range(n):
                acc = 0.0
                for j in range(n):
                    acc += s[iti + i * n + j] * dg[ixh + j]
                dg[off[O_DXH] + i] = acc

        for i in range(ds.size):
            if not np.isfinite(ds[i]):
                return False
        return True

    @njit
    def integrate(s0, t0, h, nsteps, stride, off, A, B, C, K, AK, sel, par, states, diags):
        ns = s0.size
        s = s0.copy()
        k1 = np.empty(ns)
        k2 = np.empty(ns)
        k3 = np.empty(ns)
        k4 = np.empty(ns)
        tmp = np.empty(ns)
        comp = np.zeros(ns)  # Kahan compensation, see simulation module docstring
        scratch = np.empty(diags.shape[1])
        half = 0.5 * h
        sixth = h / 6.0

        if not assemble(t0, s, off, A, B, C, K, AK, sel, par, k1, diags[0], True):
            return 1, 0, t0
        states[0, :] = s
        rec = 1
        have_k1 = True
        for i in range(nsteps):
            t = t0 + i * h
            if not have_k1:
                if not assemble(t, s, off, A, B, C, K, AK, sel, par, k1, scratch, False):
                    return 1, rec, t
            for j in range(ns):
                tmp[j] = s[j] + half * k1[j]
            if not assemble(t + half, tmp, off, A, B, C, K, AK, sel, par, k2, scratch, False):
                return 1, rec, t + half
            for j in range(ns):
                tmp[j] = s[j] + half * k2[j]
            if not assemble(t + half, tmp, off, A, B, C, K, AK, sel, par, k3, scratch, False):
                return 1, rec, t + half
            for j in range(ns):
                tmp[j] = s[j] + h * k3[j]
            if not assemble(t + h, tmp, off, A, B, C, K, AK, sel, par, k4, scratch, False):
                return 1, rec, t + h
            for j in range(ns):
                inc = sixth * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]) - comp[j]
                new = s[j] + inc
                comp[j] = (new - s[j]) - inc
                s[j] = new
            have_k1 = False
            if (i + 1) % stride == 0:
                t_next = t0 + (i + 1) * h
                if not assemble(t_next, s, off, A, B, C, K, AK, sel, par, k1, diags[rec], True):
                    return 1, rec, t_next
                states[rec, :] = s
                rec += 1
                have_k1 = True
        return 0, rec, t0 + nsteps * h

    return assemble, integrate
