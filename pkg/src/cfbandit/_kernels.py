"""Compiled inner loops for the dense SPD and eigen routines.

Everything here works on float64 C-contiguous arrays and is called through
the checked wrappers in :mod:`cfbandit.numerics`.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def cholesky_lower(m, pivot_tol):
    """Return ``(L, bad)``; ``bad`` is the failing column or -1."""
    n = m.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        s = m[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if s <= pivot_tol:
            return L, j
        d = np.sqrt(s)
        L[j, j] = d
        for i in range(j + 1, n):
            acc = m[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / d
    return L, -1


@njit(cache=True)
def chol_update(L, x):
    """Rank-one update: returns L' with L' L'^T = L L^T + x x^T."""
    n = L.shape[0]
    out = L.copy()
    w = x.copy()
    for k in range(n):
        lkk = out[k, k]
        r = np.sqrt(lkk * lkk + w[k] * w[k])
        c = r / lkk
        s = w[k] / lkk
        out[k, k] = r
        for i in range(k + 1, n):
            out[i, k] = (out[i, k] + s * w[i]) / c
            w[i] = c * w[i] - s * out[i, k]
    return out


@njit(cache=True)
def forward_sub(L, b):
    """Solve L y = b for lower-triangular L."""
    n = L.shape[0]
    y = np.empty(n)
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= L[i, k] * y[k]
        y[i] = acc / L[i, i]
    return y


@njit(cache=True)
def back_sub_t(L, z):
    """Solve L^T w = z for lower-triangular L."""
    n = L.shape[0]
    w = np.empty(n)
    for i in range(n - 1, -1, -1):
        acc = z[i]
        for k in range(i + 1, n):
            acc -= L[k, i] * w[k]
        w[i] = acc / L[i, i]
    return w


@njit(cache=True)
def jacobi_eigh(a, tol, max_sweeps):
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors_as_columns, sweeps)``. Iteration stops
    once the Frobenius norm of the off-diagonal part drops below ``tol``.
    """
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    sweeps = 0
    while sweeps < max_sweeps:
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += 2.0 * A[p, q] * A[p, q]
        if np.sqrt(off) < tol:
            break
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + np.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    akp = A[k, p]
                    akq = A[k, q]
                    A[k, p] = c * akp - s * akq
                    A[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = A[p, k]
                    aqk = A[q, k]
                    A[p, k] = c * apk - s * aqk
                    A[q, k] = s * apk + c * aqk
                A[p, q] = 0.0
                A[q, p] = 0.0
                for k in range(n):
                    vkp = V[k, p]
                    vkq = V[k, q]
                    V[k, p] = c * vkp - s * vkq
                    V[k, q] = s * vkp + c * vkq
    w = np.empty(n)
    for i in range(n):
        w[i] = A[i, i]
    return w, V, sweeps
