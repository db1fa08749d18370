"""Symmetric eigensolvers used throughout the package."""

from .dense import DenseSym, cholesky, dense_eigh, gen_eig_extreme, householder_tridiagonalize
from .errors import EigenConvergenceError, LanczosBreakdownError, NotPositiveDefiniteError
from .lanczos import SparseSym, lanczos_smallest
from .tridiag import DEFAULT_TOL, SymTridiag, tridiag_eigh, tridiag_eigvalsh

__all__ = [
    "DEFAULT_TOL",
    "DenseSym",
    "EigenConvergenceError",
    "LanczosBreakdownError",
    "NotPositiveDefiniteError",
    "SparseSym",
    "SymTridiag",
    "cholesky",
    "dense_eigh",
    "gen_eig_extreme",
    "householder_tridiagonalize",
    "lanczos_smallest",
    "tridiag_eigh",
    "tridiag_eigvalsh",
]
