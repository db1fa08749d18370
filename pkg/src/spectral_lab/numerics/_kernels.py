"""Compiled inner loops for the symmetric tridiagonal solvers."""

import math

import numpy as np
from numba import njit

EPS = np.finfo(np.float64).eps


@njit(cache=True)
def ql_implicit(d, e, zt, want_vectors, maxit):
    """Implicit-shift QL on a symmetric tridiagonal matrix, in place.

    ``d`` holds the diagonal, ``e[i]`` couples rows ``i`` and ``i + 1`` and
    ``e[n-1]`` must be zero.  When ``want_vectors`` is set, the rotations are
    applied to the rows of ``zt`` (eigenvectors are stored as rows).

    Returns -1 on success or the index of the eigenvalue that exhausted
    ``maxit`` iterations.
    """
    n = d.shape[0]
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= EPS * dd or e[m] == 0.0:
                    break
                m += 1
            if m == l:
                break
            if it == maxit:
                return l
            it += 1
            # Wilkinson shift from the leading 2x2 block
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                if want_vectors:
                    for k in range(n):
                        f = zt[i + 1, k]
                        zt[i + 1, k] = s * zt[i, k] + c * f
                        zt[i, k] = c * zt[i, k] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return -1


@njit(cache=True)
def shifted_tridiag_solve(d, e, sigma, rhs, tiny):
    """Solve ``(T - sigma I) x = rhs`` by LU with partial pivoting.

    Zero pivots are replaced by ``tiny`` so that the solve stays finite when
    ``sigma`` is an eigenvalue, which is what inverse iteration wants.
    """
    n = d.shape[0]
    u0 = d - sigma
    u1 = np.zeros(max(n - 1, 0))
    u2 = np.zeros(max(n - 2, 0))
    for i in range(n - 1):
        u1[i] = e[i]
    mult = np.zeros(max(n - 1, 0))
    swap = np.zeros(max(n - 1, 0), dtype=np.bool_)
    for i in range(n - 1):
        sub = e[i]
        if abs(u0[i]) >= abs(sub):
            if u0[i] == 0.0:
                u0[i] = tiny
            m = sub / u0[i]
            mult[i] = m
            u0[i + 1] -= m * u1[i]
        else:
            swap[i] = True
            m = u0[i] / sub
            mult[i] = m
            old_diag = u0[i + 1]
            old_sup = u1[i + 1] if i + 1 < n - 1 else 0.0
            u0[i + 1] = u1[i] - m * old_diag
            if i + 1 < n - 1:
                u1[i + 1] = -m * old_sup
            u0[i] = sub
            u1[i] = old_diag
            if i < n - 2:
                u2[i] = old_sup
    if u0[n - 1] == 0.0:
        u0[n - 1] = tiny

    x = rhs.copy()
    for i in range(n - 1):
        if swap[i]:
            t = x[i]
            x[i] = x[i + 1]
            x[i + 1] = t
        x[i + 1] -= mult[i] * x[i]
    x[n - 1] /= u0[n - 1]
    if n >= 2:
        x[n - 2] = (x[n - 2] - u1[n - 2] * x[n - 1]) / u0[n - 2]
    for i in range(n - 3, -1, -1):
        x[i] = (x[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / u0[i]
    return x


@njit(cache=True)
def tridiag_matvec(d, e, x):
    n = d.shape[0]
    y = d * x
    for i in range(n - 1):
        y[i] += e[i] * x[i + 1]
        y[i + 1] += e[i] * x[i]
    return y
