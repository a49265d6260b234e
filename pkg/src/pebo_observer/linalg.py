"""Small dense determinant / adjugate kernels.

Everything here is compiled with numba so the same routines serve both the
Python API and the simulation kernel.  Determinants use LU factorisation with
partial pivoting; the adjugate is assembled cofactor by cofactor so it stays
exact for singular matrices (no ``det * inv`` shortcut).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def slogdet_lu(M):
    """Return ``(sign, log|det M|)``; ``(0.0, -inf)`` for exactly singular input."""
    m = M.shape[0]
    if m == 0:
        return 1.0, 0.0
    a = M.astype(np.float64).copy()
    sign = 1.0
    logabs = 0.0
    for k in range(m):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, m):
            v = abs(a[i, k])
            if v > best:
                best = v
                p = i
        if best == 0.0:
            return 0.0, -np.inf
        if p != k:
            for j in range(m):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            sign = -sign
        piv = a[k, k]
        if piv < 0.0:
            sign = -sign
        logabs += np.log(abs(piv))
        for i in range(k + 1, m):
            f = a[i, k] / piv
            if f != 0.0:
                for j in range(k + 1, m):
                    a[i, j] -= f * a[k, j]
    return sign, logabs


@njit(cache=True)
def det_lu(M):
    """Determinant as the signed product of LU pivots."""
    m = M.shape[0]
    if m == 0:
        return 1.0
    a = M.astype(np.float64).copy()
    det = 1.0
    for k in range(m):
        p = k
        best = abs(a[k, k])
        for i in range(k + 1, m):
            v = abs(a[i, k])
            if v > best:
                best = v
                p = i
        if best == 0.0:
            return 0.0
        if p != k:
            for j in range(m):
                tmp = a[k, j]
                a[k, j] = a[p, j]
                a[p, j] = tmp
            det = -det
        piv = a[k, k]
        det *= piv
        for i in range(k + 1, m):
            f = a[i, k] / piv
            if f != 0.0:
                for j in range(k + 1, m):
                    a[i, j] -= f * a[k, j]
    return det


@njit(cache=True)
def _minor(M, row, col):
    m = M.shape[0]
    out = np.empty((m - 1, m - 1))
    ii = 0
    for i in range(m):
        if i == row:
            continue
        jj = 0
        for j in range(m):
            if j == col:
                continue
            out[ii, jj] = M[i, j]
            jj += 1
        ii += 1
    return out


@njit(cache=True)
def adjugate(M):
    """Transposed cofactor matrix, so that ``M @ adj(M) == det(M) * I``."""
    m = M.shape[0]
    out = np.empty((m, m))
    if m == 1:
        out[0, 0] = 1.0
        return out
    for i in range(m):
        for j in range(m):
            c = det_lu(_minor(M, i, j))
            if (i + j) % 2 == 1:
                c = -c
            out[j, i] = c
    return out


@njit(cache=True)
def adjugate_matvec(M, b):
    """``adj(M) @ b`` by column replacement (Cramer); valid for singular ``M``.

    Entry ``i`` is ``det`` of ``M`` with column ``i`` replaced by ``b``.  This is
    an identity of polynomials, so it agrees with the cofactor route for every
    ``M`` while costing ``m`` determinants instead of ``m**2``.
    """
    m = M.shape[0]
    out = np.empty(m)
    work = np.empty((m, m))
    for i in range(m):
        for r in range(m):
            for c in range(m):
                work[r, c] = M[r, c]
            work[r, i] = b[r]
        out[i] = det_lu(work)
    return out


@njit(cache=True)
def matvec(M, v):
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc
    return out


@njit(cache=True)
def matmul(A, B):
    out = np.zeros((A.shape[0], B.shape[1]))
    for i in range(A.shape[0]):
        for k in range(A.shape[1]):
            a = A[i, k]
            if a != 0.0:
                for j in range(B.shape[1]):
                    out[i, j] += a * B[k, j]
    return out
