"""Dense symmetric eigenproblems and the Cholesky-reduced generalized problem."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.linalg import solve_triangular

from .errors import NotPositiveDefiniteError
from .tridiag import DEFAULT_TOL, SymTridiag, _fix_signs, tridiag_eigh


@dataclass(frozen=True)
class DenseSym:
    """Dense symmetric matrix built from the lower triangle of ``entries``.

    Only the lower triangle of the input is read, so the stored matrix is
    symmetric bit for bit.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"expected a nonempty square matrix, got shape {a.shape}")
        low = np.tril(a)
        full = low + np.tril(low, -1).T
        full.flags.writeable = False
        object.__setattr__(self, "entries", full)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


def as_dense_sym(a) -> DenseSym:
    return a if isinstance(a, DenseSym) else DenseSym(a)


def householder_tridiagonalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reduce symmetric ``a`` to tridiagonal form ``Q^T a Q``.

    Returns ``(diag, offdiag, Q)``.
    """
    a = np.array(a, dtype=float, copy=True)
    n = a.shape[0]
    q = np.eye(n)
    for k in range(n - 2):
        x = a[k + 1 :, k]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        if x[0] > 0:
            alpha = -alpha
        v = x.copy()
        v[0] -= alpha
        vnorm2 = v @ v
        if vnorm2 == 0.0:
            continue
        beta = 2.0 / vnorm2
        sub = a[k + 1 :, k + 1 :]
        p = beta * (sub @ v)
        w = p - (0.5 * beta * (p @ v)) * v
        sub -= np.outer(v, w) + np.outer(w, v)
        a[k + 1, k] = a[k, k + 1] = alpha
        a[k + 2 :, k] = 0.0
        a[k, k + 2 :] = 0.0
        qs = q[:, k + 1 :]
        qs -= beta * np.outer(qs @ v, v)
    diag = np.diag(a).copy()
    offdiag = np.diag(a, -1).copy()
    return diag, offdiag, q


def dense_eigh(
    A,
    *,
    count: int | None = None,
    largest: bool = False,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    ``count`` restricts the output to the ``count`` smallest pairs, or the
    ``count`` largest when ``largest`` is set (still returned ascending).
    """
    A = as_dense_sym(A)
    n = A.n
    if n == 1:
        return A.entries[0].copy(), np.ones((1, 1))
    diag, offdiag, q = householder_tridiagonalize(A.entries)
    sign = -1.0 if largest else 1.0
    T = SymTridiag(sign * diag, sign * offdiag)
    if count is None:
        w, y = tridiag_eigh(T, tol=tol)
    else:
        w, y = tridiag_eigh(T, count=count, tol=tol)
    vecs = _fix_signs(q @ y)
    w = sign * w
    if largest:
        w, vecs = w[::-1].copy(), vecs[:, ::-1].copy()
    return w, vecs


def cholesky(B) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefiniteError` carrying the first failing pivot.
    """
    b = as_dense_sym(B).entries
    n = b.shape[0]
    L = np.zeros_like(b)
    for j in range(n):
        piv = b[j, j] - L[j, :j] @ L[j, :j]
        if not piv > 0.0:
            raise NotPositiveDefiniteError(
                f"matrix is not positive definite: pivot {j} equals {piv:.3e}", pivot=j
            )
        L[j, j] = np.sqrt(piv)
        if j + 1 < n:
            L[j + 1 :, j] = (b[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]
    return L


def gen_eig_extreme(
    A,
    B,
    which: Literal["min", "max"] = "max",
    *,
    tol: float = DEFAULT_TOL,
) -> tuple[float, np.ndarray]:
    """Extreme eigenpair of the pencil ``A v = mu B v`` with ``B`` SPD.

    The pencil is reduced to ``L^-1 A L^-T`` with ``B = L L^T``.  The returned
    vector is B-normalized (``v^T B v = 1``).
    """
    if which not in ("min", "max"):
        raise ValueError(f"which must be 'min' or 'max', got {which!r}")
    A = as_dense_sym(A)
    B = as_dense_sym(B)
    if A.n != B.n:
        raise ValueError(f"order mismatch: A is {A.n}, B is {B.n}")
    L = cholesky(B)
    tmp = solve_triangular(L, A.entries, lower=True)
    C = solve_triangular(L, tmp.T, lower=True)
    w, y = dense_eigh(C, count=1, largest=(which == "max"), tol=tol)
    mu = float(w[0])
    v = solve_triangular(L.T, y[:, 0], lower=False)
    res = np.linalg.norm(A.entries @ v - mu * (B.entries @ v))
    scale = np.linalg.norm(A.entries, 1) + abs(mu) * np.linalg.norm(B.entries, 1)
    if res > max(tol, 1e-8) * scale * max(1.0, np.linalg.norm(v)):
        raise ArithmeticError(f"generalized eigen residual {res:.3e} too large")
    return mu, v
