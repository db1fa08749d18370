"""Symmetric tridiagonal eigensolver (implicit QL + inverse iteration)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import ql_implicit, shifted_tridiag_solve, tridiag_matvec
from .errors import EigenConvergenceError

MAXIT_PER_EIGENVALUE = 50
DEFAULT_TOL = 1e-10
# eigenvalues closer than this (relative to ||T||) are treated as a cluster
CLUSTER_RTOL = 1e-3


@dataclass(frozen=True)
class SymTridiag:
    """Symmetric tridiagonal matrix given by its diagonal and off-diagonal."""

    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        diag = np.array(self.diag, dtype=float).ravel()
        offdiag = np.array(self.offdiag, dtype=float).ravel()
        if diag.size < 1:
            raise ValueError("tridiagonal matrix needs n >= 1")
        if offdiag.size != diag.size - 1:
            raise ValueError(
                f"offdiag must have length n-1={diag.size - 1}, got {offdiag.size}"
            )
        if not (np.all(np.isfinite(diag)) and np.all(np.isfinite(offdiag))):
            raise ValueError("tridiagonal entries must be finite")
        diag.flags.writeable = False
        offdiag.flags.writeable = False
        object.__setattr__(self, "diag", diag)
        object.__setattr__(self, "offdiag", offdiag)

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return tridiag_matvec(self.diag, self.offdiag, x)
        y = self.diag[:, None] * x
        y[:-1] += self.offdiag[:, None] * x[1:]
        y[1:] += self.offdiag[:, None] * x[:-1]
        return y

    __matmul__ = matvec

    def norm(self) -> float:
        """Infinity norm (max absolute row sum)."""
        row = np.abs(self.diag).copy()
        row[:-1] += np.abs(self.offdiag)
        row[1:] += np.abs(self.offdiag)
        return float(row.max())

    def toarray(self) -> np.ndarray:
        a = np.diag(self.diag)
        if self.n > 1:
            idx = np.arange(self.n - 1)
            a[idx, idx + 1] = self.offdiag
            a[idx + 1, idx] = self.offdiag
        return a


def tridiag_eigvalsh(T: SymTridiag) -> np.ndarray:
    """All eigenvalues in ascending order (QL without vector accumulation)."""
    d = T.diag.copy()
    e = np.zeros(T.n)
    e[: T.n - 1] = T.offdiag
    dummy = np.zeros((1, 1))
    fail = ql_implicit(d, e, dummy, False, MAXIT_PER_EIGENVALUE)
    if fail >= 0:
        raise EigenConvergenceError(
            f"QL iteration did not converge for eigenvalue index {fail} "
            f"after {MAXIT_PER_EIGENVALUE} iterations",
            index=int(fail),
        )
    return np.sort(d)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # deterministic sign: largest-magnitude entry of each column is positive
    idx = np.argmax(np.abs(vecs), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def _inverse_iteration(T: SymTridiag, evals: np.ndarray, tol: float) -> np.ndarray:
    n = T.n
    if T.norm() == 0.0:
        return np.eye(n)[:, : evals.size]
    tnorm = T.norm()
    eps = np.finfo(float).eps
    tiny = max(eps * tnorm, np.finfo(float).tiny)
    rng = np.random.default_rng(12345)
    vecs = np.empty((n, evals.size))
    cluster_start = 0
    prev_sigma = None
    for j, lam in enumerate(evals):
        if j > 0 and lam - evals[j - 1] > CLUSTER_RTOL * tnorm:
            cluster_start = j
        sigma = lam
        if prev_sigma is not None and j > cluster_start and sigma - prev_sigma < 10 * eps * tnorm:
            sigma = prev_sigma + 10 * eps * tnorm
        prev_sigma = sigma
        x = rng.standard_normal(n)
        x /= np.linalg.norm(x)
        ok = False
        best, best_res = None, np.inf
        for _ in range(9):
            x = shifted_tridiag_solve(T.diag, T.offdiag, sigma, x, tiny)
            if j > 0:
                # against all earlier vectors, not only the cluster: near-degenerate
                # chains otherwise leak O(eps ||T|| / gap) overlap
                block = vecs[:, :j]
                for _pass in range(2):
                    x -= block @ (block.T @ x)
            nrm = np.linalg.norm(x)
            if not np.isfinite(nrm) or nrm == 0.0:
                x = rng.standard_normal(n)
                x /= np.linalg.norm(x)
                continue
            x /= nrm
            res = np.linalg.norm(T.matvec(x) - lam * x)
            if res < best_res:
                best, best_res = x.copy(), res
            if ok:
                break  # one refinement step past the tolerance
            ok = res <= tol * tnorm
        x, res = best, best_res
        if not ok:
            raise EigenConvergenceError(
                f"inverse iteration failed for eigenvalue index {j} (lambda={lam:.6g}), "
                f"residual {res:.3e} > {tol * tnorm:.3e}",
                index=j,
            )
        vecs[:, j] = x
    return vecs


def tridiag_eigh(
    T: SymTridiag,
    *,
    count: int | None = None,
    upper: float | None = None,
    tol: float = DEFAULT_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of ``T``.

    Without a selection the full decomposition is computed by QL with
    accumulated rotations.  With ``count`` (the smallest ``count`` pairs) or
    ``upper`` (all pairs with eigenvalue <= ``upper``) the eigenvalues come from
    QL alone and the selected vectors from inverse iteration, which keeps the
    cost at O(n^2 + n m) for m selected pairs.
    """
    n = T.n
    if count is None and upper is None:
        d = T.diag.copy()
        e = np.zeros(n)
        e[: n - 1] = T.offdiag
        zt = np.eye(n)
        fail = ql_implicit(d, e, zt, True, MAXIT_PER_EIGENVALUE)
        if fail >= 0:
            raise EigenConvergenceError(
                f"QL iteration did not converge for eigenvalue index {fail} "
                f"after {MAXIT_PER_EIGENVALUE} iterations",
                index=int(fail),
            )
        order = np.argsort(d, kind="stable")
        return d[order], _fix_signs(zt[order].T.copy())

    evals = tridiag_eigvalsh(T)
    keep = evals.size
    if count is not None:
        if not 0 <= count <= n:
            raise ValueError(f"count must lie in [0, {n}], got {count}")
        keep = min(keep, count)
    if upper is not None:
        keep = min(keep, int(np.searchsorted(evals, upper, side="right")))
    evals = evals[:keep]
    if keep == 0:
        return evals, np.zeros((n, 0))
    return evals, _fix_signs(_inverse_iteration(T, evals, tol))
