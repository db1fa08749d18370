"""Block Lanczos with full reorthogonalization for the smallest eigenpairs."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .dense import dense_eigh
from .errors import EigenConvergenceError, LanczosBreakdownError
from .tridiag import DEFAULT_TOL

log = logging.getLogger(__name__)

MAX_RESTARTS = 3


@dataclass(frozen=True)
class SparseSym:
    """Sparse symmetric matrix in CSR storage with a full stored diagonal."""

    matrix: sp.csr_matrix

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix, dtype=float)
        if m.shape[0] != m.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        asym = abs(m - m.T)
        if asym.nnz and asym.max() != 0.0:
            raise ValueError("sparse matrix is not symmetric")
        rows = np.repeat(np.arange(m.shape[0]), np.diff(m.indptr))
        on_diag = np.bincount(rows[rows == m.indices], minlength=m.shape[0])
        if np.any(on_diag == 0):
            raise ValueError("diagonal entries must be present in the sparsity pattern")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x):
        return self.matrix @ x

    __matmul__ = matvec

    def norm(self) -> float:
        return float(abs(self.matrix).sum(axis=1).max())

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _as_operator(A):
    if isinstance(A, SparseSym):
        return A
    if sp.issparse(A):
        return SparseSym(A)
    if hasattr(A, "matvec") and hasattr(A, "n"):
        return A
    return SparseSym(sp.csr_matrix(np.asarray(A, dtype=float)))


def _orthonormalize(W, Q, rng, n):
    """Orthogonalize block ``W`` against ``Q`` (twice) and QR it.

    Returns the new orthonormal block and the number of columns that had to be
    replaced by fresh random directions (a breakdown).
    """
    replaced = 0
    for _ in range(2):
        if Q.shape[1]:
            W -= Q @ (Q.T @ W)
    norms_before = np.linalg.norm(W, axis=0)
    Qb, R = np.linalg.qr(W)
    scale = max(norms_before.max(initial=0.0), 1e-300)
    for j in range(Qb.shape[1]):
        if abs(R[j, j]) <= 1e-10 * scale:
            replaced += 1
            v = rng.standard_normal(n)
            basis = np.hstack([Q, Qb[:, :j]])
            for _ in range(2):
                v -= basis @ (basis.T @ v)
            Qb[:, j] = v / np.linalg.norm(v)
    if replaced:
        for _ in range(2):
            Qb -= Q @ (Q.T @ Qb)
        Qb, _ = np.linalg.qr(Qb)
    return Qb, replaced


def lanczos_smallest(
    A,
    k: int,
    seed: int = 0,
    *,
    block_size: int = 2,
    tol: float = DEFAULT_TOL,
    sigma: float | None = None,
    max_dim: int | None = None,
    check_every: int = 4,
) -> tuple[np.ndarray, np.ndarray]:
    """The ``k`` smallest eigenpairs of a sparse symmetric matrix.

    The Krylov basis is grown blockwise and every new block is
    reorthogonalized against the whole basis, so repeated eigenvalues with
    multiplicity up to ``block_size`` are resolved.  Ritz pairs come from the
    Rayleigh quotient ``Q^T A Q`` and are accepted once
    ``||A y - theta y|| <= tol * ||A||``.

    With ``sigma`` set, the basis is generated from ``(A - sigma I)^{-1}``
    (sparse LU), which converges much faster for the low end of a
    discretized Laplacian; Ritz values are still taken from ``A`` itself.

    On breakdown (the Krylov space becomes invariant before ``k`` pairs have
    converged) the deficient directions are replaced by fresh random vectors
    drawn from ``seed + restart``; after ``MAX_RESTARTS`` such restarts a
    :class:`LanczosBreakdownError` is raised.
    """
    A = _as_operator(A)
    n = A.n
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    b = max(1, min(block_size, n))
    max_dim = n if max_dim is None else min(max_dim, n)
    anorm = max(A.norm(), np.finfo(float).tiny)

    if sigma is None:
        op = A.matvec
    else:
        shifted = (A.matrix - sigma * sp.identity(n, format="csr")).tocsc()
        lu = splu(shifted)
        op = lu.solve

    rng = np.random.default_rng(seed)
    restarts = 0
    Q = np.zeros((n, 0))
    AQ = np.zeros((n, 0))
    block, _ = _orthonormalize(rng.standard_normal((n, b)), Q, rng, n)
    blocks_since_check = 0
    result = None
    while True:
        Q = np.hstack([Q, block])
        AQ = np.hstack([AQ, A.matvec(block)])
        dim = Q.shape[1]
        blocks_since_check += 1
        if dim >= k and (blocks_since_check >= check_every or dim >= max_dim):
            blocks_since_check = 0
            T = Q.T @ AQ
            theta, Y = dense_eigh(0.5 * (T + T.T), count=k)
            X = Q @ Y
            res = np.linalg.norm(AQ @ Y - X * theta, axis=0)
            if np.all(res <= tol * anorm):
                result = (theta, X)
                break
            if dim >= max_dim:
                nconv = int(np.sum(res <= tol * anorm))
                raise EigenConvergenceError(
                    f"Lanczos reached dimension {dim} with {nconv} of {k} pairs converged",
                    converged=nconv,
                )
        if dim >= max_dim:
            # basis is complete but fewer than k columns: cannot happen for k <= n
            raise EigenConvergenceError(f"Krylov basis exhausted at dimension {dim}")
        step = min(b, max_dim - dim)
        W = op(block[:, :step]) if step < block.shape[1] else op(block)
        W = np.asarray(W).reshape(n, -1)
        block, replaced = _orthonormalize(W, Q, np.random.default_rng(seed + restarts + 1), n)
        if replaced:
            restarts += 1
            log.info("Lanczos breakdown at dimension %d, restart %d", dim, restarts)
            if restarts > MAX_RESTARTS:
                raise LanczosBreakdownError(
                    f"Lanczos broke down {restarts} times (dimension {dim}); giving up"
                )
    theta, X = result
    X = X / np.linalg.norm(X, axis=0)
    return theta, X
