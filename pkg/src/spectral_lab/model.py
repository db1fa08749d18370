"""Potentials, grids, Hamiltonian assembly and discrete eigensystems.

The operator is ``H = -Laplacian + V`` on the box ``(-L, L)^d`` with Dirichlet
conditions, discretized by the second-order central stencil on the interior
points ``-L + i h``, ``i = 1..n``, ``h = 2L / (n + 1)``.  Grid functions are
weighted by ``h^d``, so the discrete inner product is
``<u, v> = sum h^d u_i v_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .blob import read_blob, write_blob
from .numerics import (
    DEFAULT_TOL,
    EigenConvergenceError,
    SparseSym,
    SymTridiag,
    lanczos_smallest,
    tridiag_eigh,
)

DEFAULT_BUFFER = 0.2

POWER = "power"
ANISOTROPIC = "anisotropic"
TWO_SIDED = "two_sided"
FREE = "free"


class AssemblyError(ValueError):
    pass


def _as_points(points) -> np.ndarray:
    # a flat array is a list of 1D coordinates
    pts = np.asarray(points, dtype=float)
    return pts[:, None] if pts.ndim == 1 else pts


@dataclass(frozen=True)
class PotentialSpec:
    """A confinement potential together with its growth parameters.

    Use the constructors :meth:`power_law`, :meth:`anisotropic`,
    :meth:`two_sided` and :meth:`free` rather than the raw fields.
    ``nu`` and ``M_nu`` bound the gradient, ``e^{-nu|x|} |grad V| <= M_nu``
    outside the unit ball; left as ``None`` they are chosen on the grid by the
    decay checks.
    """

    kind: str
    c1: float = 1.0
    tau1: float = 1.0
    c2: float = 1.0
    tau2: float = 1.0
    d1: int | None = None
    sampler: Callable | None = field(default=None, compare=False)
    nu: float | None = None
    M_nu: float | None = None

    def __post_init__(self):
        if self.kind not in (POWER, ANISOTROPIC, TWO_SIDED, FREE):
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.kind != FREE:
            if not (self.c1 > 0 and self.c2 > 0):
                raise ValueError("c1 and c2 must be positive")
            if not (0 < self.tau1 <= self.tau2):
                raise ValueError("need 0 < tau1 <= tau2")
        if self.kind == TWO_SIDED and self.sampler is None:
            raise ValueError("two-sided potential needs a sampler")
        if self.kind == ANISOTROPIC and (self.d1 is None or self.d1 < 1):
            raise ValueError("anisotropic potential needs d1 >= 1")
        if self.nu is not None and self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.M_nu is not None and self.M_nu < 0:
            raise ValueError("M_nu must be nonnegative")

    @classmethod
    def power_law(cls, tau: float, nu=None, M_nu=None) -> "PotentialSpec":
        """``V(x) = |x|^tau``."""
        if not tau > 0:
            raise ValueError("tau must be positive")
        return cls(POWER, 1.0, tau, 1.0, tau, nu=nu, M_nu=M_nu)

    @classmethod
    def anisotropic(cls, tau: float, d1: int = 1, nu=None, M_nu=None) -> "PotentialSpec":
        """``V(x) = |x_1|^tau`` with ``x_1`` the first ``d1`` coordinates."""
        if not tau > 0:
            raise ValueError("tau must be positive")
        return cls(ANISOTROPIC, 1.0, tau, 1.0, tau, d1=d1, nu=nu, M_nu=M_nu)

    @classmethod
    def two_sided(cls, c1, tau1, c2, tau2, sampler, nu=None, M_nu=None) -> "PotentialSpec":
        """A sampled potential with ``c1 |x|^tau1 <= V <= c2 |x|^tau2``."""
        return cls(TWO_SIDED, c1, tau1, c2, tau2, sampler=sampler, nu=nu, M_nu=M_nu)

    @classmethod
    def free(cls) -> "PotentialSpec":
        """``V = 0``; the unconfined factor of an anisotropic splitting."""
        return cls(FREE)

    @property
    def tau(self) -> float:
        return self.tau1

    @property
    def is_harmonic(self) -> bool:
        return self.kind in (POWER, ANISOTROPIC) and self.tau1 == 2.0

    def with_growth(self, nu: float, M_nu: float) -> "PotentialSpec":
        return PotentialSpec(
            self.kind, self.c1, self.tau1, self.c2, self.tau2, self.d1, self.sampler, nu, M_nu
        )

    def confined_coords(self, points: np.ndarray) -> np.ndarray:
        if self.kind == ANISOTROPIC:
            if self.d1 >= points.shape[1]:
                raise ValueError("anisotropic potential needs d1 < d")
            return points[:, : self.d1]
        return points

    def __call__(self, points) -> np.ndarray:
        pts = _as_points(points)
        if self.kind == FREE:
            return np.zeros(pts.shape[0])
        if self.kind == TWO_SIDED:
            return np.asarray(self.sampler(pts), dtype=float).reshape(pts.shape[0])
        r = np.linalg.norm(self.confined_coords(pts), axis=1)
        return r**self.tau1

    def gradient_norm(self, points) -> np.ndarray:
        """``|grad V|`` at the given points (analytic except for samplers)."""
        pts = _as_points(points)
        if self.kind == FREE:
            return np.zeros(pts.shape[0])
        if self.kind == TWO_SIDED:
            step = 1e-6
            g2 = np.zeros(pts.shape[0])
            for j in range(pts.shape[1]):
                e = np.zeros(pts.shape[1])
                e[j] = step
                g2 += ((self(pts + e) - self(pts - e)) / (2 * step)) ** 2
            return np.sqrt(g2)
        r = np.linalg.norm(self.confined_coords(pts), axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            g = self.tau1 * r ** (self.tau1 - 1.0)
        return np.where(r > 0, g, 0.0 if self.tau1 > 1 else np.inf)

    def descriptor(self) -> dict:
        out = {"kind": self.kind}
        if self.kind != FREE:
            out.update(c1=self.c1, tau1=self.tau1, c2=self.c2, tau2=self.tau2)
        if self.kind == ANISOTROPIC:
            out["d1"] = self.d1
        if self.kind == TWO_SIDED:
            out["sampler"] = getattr(self.sampler, "__qualname__", repr(self.sampler))
        if self.nu is not None:
            out["nu"] = self.nu
        if self.M_nu is not None:
            out["M_nu"] = self.M_nu
        return out

    @classmethod
    def from_descriptor(cls, desc: dict) -> "PotentialSpec":
        kind = desc["kind"]
        nu, M_nu = desc.get("nu"), desc.get("M_nu")
        if kind == POWER:
            return cls.power_law(desc["tau1"], nu, M_nu)
        if kind == ANISOTROPIC:
            return cls.anisotropic(desc["tau1"], desc["d1"], nu, M_nu)
        if kind == FREE:
            return cls.free()
        raise ValueError("a sampled potential cannot be rebuilt from its descriptor; pass it explicitly")


@dataclass(frozen=True)
class Grid:
    """Interior points of the Dirichlet box ``(-L, L)^d``."""

    d: int
    L: float
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.d}")
        if not self.L > 0:
            raise ValueError("half-width L must be positive")
        if self.n < 3:
            raise ValueError("need at least 3 points per axis")

    @property
    def h(self) -> float:
        return 2.0 * self.L / (self.n + 1)

    @property
    def weight(self) -> float:
        return self.h**self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(1, self.n + 1)

    @cached_property
    def points(self) -> np.ndarray:
        """Point coordinates, shape ``(n^d, d)``, C order (last axis fastest)."""
        if self.d == 1:
            return self.axis[:, None]
        x1, x2 = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.column_stack([x1.ravel(), x2.ravel()])

    @cached_property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.points, axis=1)

    def inner(self, u, v) -> np.ndarray:
        return self.weight * (np.asarray(u).T @ np.asarray(v))

    def norm(self, u) -> float:
        return float(np.sqrt(self.weight * np.sum(np.asarray(u) ** 2)))

    def gradient(self, f: np.ndarray) -> np.ndarray:
        """Central-difference gradient, shape ``(d,) + f.shape``.

        One-sided second-order stencils are used on the outermost points.
        Extra trailing axes of ``f`` (several functions) are carried along.
        """
        f = np.asarray(f, dtype=float)
        extra = f.shape[1:]
        fg = f.reshape(self.shape + extra)
        grads = []
        for ax in range(self.d):
            g = np.gradient(fg, self.h, axis=ax, edge_order=2)
            grads.append(g.reshape((self.size,) + extra))
        return np.stack(grads)

    def descriptor(self) -> dict:
        return {"d": self.d, "L": self.L, "n": self.n}


@dataclass(frozen=True)
class Hamiltonian:
    """Discretized ``-Laplacian + V``: a :class:`SymTridiag` in 1D, :class:`SparseSym` in 2D."""

    matrix: SymTridiag | SparseSym
    grid: Grid
    potential: PotentialSpec
    diagonal_potential: np.ndarray

    def matvec(self, x):
        return self.matrix.matvec(x)

    __matmul__ = matvec


def localization_halfwidth(lam: float, p: PotentialSpec, margin: float = 2.0) -> float:
    """Box half-width that keeps the weighted-decay radius well inside the box.

    ``L = margin * max(1, ((lam + 2) / c1)^(1/tau1)) + 2``.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    if margin < 1:
        raise ValueError("margin must be >= 1")
    radius = max(1.0, ((lam + 2.0) / p.c1) ** (1.0 / p.tau1))
    return margin * radius + 2.0


def _laplacian_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def assemble(grid: Grid, p: PotentialSpec, *, bound_rtol: float = 1e-12) -> Hamiltonian:
    """Assemble the Dirichlet finite-difference Hamiltonian on ``grid``."""
    V = p(grid.points)
    if p.kind == TWO_SIDED:
        r = grid.radii
        lo = p.c1 * r**p.tau1
        hi = p.c2 * r**p.tau2
        slack = bound_rtol * np.maximum(1.0, np.abs(V))
        bad = np.flatnonzero((V < lo - slack) | (V > hi + slack))
        if bad.size:
            i = int(bad[0])
            raise AssemblyError(
                f"sampled potential violates its bounds at grid point {i} "
                f"x={grid.points[i].tolist()}: V={V[i]:.6g} not in [{lo[i]:.6g}, {hi[i]:.6g}]"
                + (f" ({bad.size} points in total)" if bad.size > 1 else "")
            )
    if not np.all(np.isfinite(V)):
        raise AssemblyError("potential is not finite on the grid")
    h = grid.h
    if grid.d == 1:
        matrix = SymTridiag(2.0 / h**2 + V, np.full(grid.n - 1, -1.0 / h**2))
    else:
        lap = _laplacian_1d(grid.n, h)
        eye = sp.identity(grid.n, format="csr")
        A = sp.kron(lap, eye, format="csr") + sp.kron(eye, lap, format="csr") + sp.diags(V)
        matrix = SparseSym(A.tocsr())
    return Hamiltonian(matrix, grid, p, V)


@dataclass(frozen=True)
class TensorFactors:
    """Bookkeeping of a product eigensystem: pair ``j`` is ``first[i] x second[k]``."""

    first: "Eigensystem"
    second: "Eigensystem"
    index: np.ndarray  # shape (m, 2)


class Eigensystem:
    """Ascending eigenvalues and ``h^d``-weighted orthonormal eigenvectors.

    ``threshold`` is the energy up to which the list is complete: every
    discrete eigenvalue ``<= threshold`` is present.  Product systems from
    :func:`tensor_compose` materialize their vectors lazily.
    """

    def __init__(self, eigenvalues, vectors, grid: Grid, potential: PotentialSpec,
                 threshold: float | None = None, factors: TensorFactors | None = None):
        self.eigenvalues = np.asarray(eigenvalues, dtype=float)
        self.eigenvalues.flags.writeable = False
        if vectors is None and factors is None:
            raise ValueError("need vectors or tensor factors")
        self._vectors = None if vectors is None else np.asarray(vectors, dtype=float)
        self.grid = grid
        self.potential = potential
        self.threshold = float(self.eigenvalues[-1]) if threshold is None else float(threshold)
        self.factors = factors

    def __len__(self):
        return self.eigenvalues.size

    @property
    def vectors(self) -> np.ndarray:
        if self._vectors is None:
            f = self.factors
            a = f.first.vectors[:, f.index[:, 0]]
            b = f.second.vectors[:, f.index[:, 1]]
            self._vectors = np.einsum("im,jm->ijm", a, b).reshape(self.grid.size, -1)
        return self._vectors

    def vector(self, k: int) -> np.ndarray:
        if self._vectors is None:
            i, j = self.factors.index[k]
            return np.outer(self.factors.first.vectors[:, i], self.factors.second.vectors[:, j]).ravel()
        return self._vectors[:, k]

    def pair(self, k: int) -> tuple[float, np.ndarray]:
        return float(self.eigenvalues[k]), self.vector(k)

    def count(self, lam: float) -> int:
        return int(np.searchsorted(self.eigenvalues, lam, side="right"))

    def subspace(self, lam: float) -> "SpectralSubspace":
        return SpectralSubspace(self, lam)

    def residuals(self, ham: Hamiltonian) -> np.ndarray:
        V = self.vectors
        return np.linalg.norm(ham.matvec(V) - V * self.eigenvalues, axis=0) * math.sqrt(self.grid.weight)

    def save(self, path) -> Path:
        meta = {
            "grid": self.grid.descriptor(),
            "potential": self.potential.descriptor(),
            "count": len(self),
            "threshold": self.threshold,
        }
        return write_blob(path, "eigensystem", meta,
                          {"eigenvalues": self.eigenvalues, "vectors": self.vectors})

    @classmethod
    def load(cls, path, potential: PotentialSpec | None = None) -> "Eigensystem":
        meta, arrays = read_blob(path, kind="eigensystem")
        g = meta["grid"]
        grid = Grid(g["d"], g["L"], g["n"])
        if potential is None:
            potential = PotentialSpec.from_descriptor(meta["potential"])
        return cls(arrays["eigenvalues"], arrays["vectors"], grid, potential, meta["threshold"])


class SpectralSubspace:
    """Span of the eigenvectors with eigenvalue ``<= threshold``."""

    def __init__(self, system: Eigensystem, threshold: float):
        if threshold > system.threshold:
            raise ValueError(
                f"threshold {threshold} exceeds the completeness level {system.threshold} "
                "of the eigensystem"
            )
        self.system = system
        self.threshold = float(threshold)
        self.dimension = system.count(threshold)

    @property
    def m(self) -> int:
        return self.dimension

    @property
    def grid(self) -> Grid:
        return self.system.grid

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.system.eigenvalues[: self.dimension]

    @property
    def vectors(self) -> np.ndarray:
        return self.system.vectors[:, : self.dimension]

    def combine(self, coeffs) -> np.ndarray:
        """Grid function ``sum_k coeffs[k] f_k`` (extra trailing axes allowed)."""
        return self.vectors @ np.asarray(coeffs, dtype=float)


def _normalize_weighted(vecs: np.ndarray, grid: Grid) -> np.ndarray:
    return vecs / math.sqrt(grid.weight)


def eigendecompose(
    ham: Hamiltonian,
    lam_max: float,
    *,
    buffer: float = DEFAULT_BUFFER,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> Eigensystem:
    """All eigenpairs with eigenvalue ``<= lam_max * (1 + buffer)``."""
    if buffer < 0:
        raise ValueError("buffer must be nonnegative")
    upper = lam_max * (1.0 + buffer)
    grid = ham.grid
    if isinstance(ham.matrix, SymTridiag):
        w, v = tridiag_eigh(ham.matrix, upper=upper, tol=tol)
        if w.size == 0:
            raise EigenConvergenceError(
                f"no eigenvalue below {upper:.6g} on this grid (converged count 0)", converged=0
            )
        return Eigensystem(w, _normalize_weighted(v, grid), grid, ham.potential, upper)

    n = ham.matrix.n
    k = min(n, 16)
    while True:
        w, v = lanczos_smallest(ham.matrix, k, seed, sigma=0.0, tol=tol, block_size=2)
        if w[-1] > upper or k == n:
            break
        k = min(n, 2 * k)
    keep = int(np.searchsorted(w, upper, side="right"))
    if keep == 0:
        raise EigenConvergenceError(
            f"no eigenvalue below {upper:.6g} on this grid (converged count 0)", converged=0
        )
    return Eigensystem(w[:keep], _normalize_weighted(v[:, :keep], grid), grid, ham.potential, upper)


def tensor_compose(
    sys1: Eigensystem,
    sys2: Eigensystem,
    lam_max: float | None = None,
    potential: PotentialSpec | None = None,
) -> Eigensystem:
    """Eigensystem of ``H1 (x) I + I (x) H2`` from two 1D eigensystems.

    Pairs are all sums ``lambda_i + mu_j <= lam_max``; ``lam_max`` defaults to
    the largest level at which that list is complete given what each factor
    harvested.  Eigenvectors are outer products (axis 0 from ``sys1``).
    """
    g1, g2 = sys1.grid, sys2.grid
    if g1.d != 1 or g2.d != 1:
        raise ValueError("tensor_compose needs two 1D eigensystems")
    if (g1.L, g1.n) != (g2.L, g2.n):
        raise ValueError("factor grids must share L and n")
    complete = min(sys1.threshold + sys2.eigenvalues[0], sys2.threshold + sys1.eigenvalues[0])
    if lam_max is None:
        lam_max = complete
    elif lam_max > complete + 1e-12:
        raise ValueError(f"factors are only complete up to {complete:.6g} < {lam_max:.6g}")
    sums = sys1.eigenvalues[:, None] + sys2.eigenvalues[None, :]
    ii, jj = np.nonzero(sums <= lam_max)
    vals = sums[ii, jj]
    order = np.lexsort((jj, ii, vals))
    index = np.column_stack([ii[order], jj[order]])
    if potential is None:
        if sys2.potential.kind == FREE and sys1.potential.kind == POWER:
            potential = PotentialSpec.anisotropic(sys1.potential.tau1, 1)
        else:
            raise ValueError("pass the 2D potential explicitly for this factor combination")
    grid = Grid(2, g1.L, g1.n)
    return Eigensystem(vals[order], None, grid, potential, lam_max,
                       factors=TensorFactors(sys1, sys2, index))


def counting_function(sys: Eigensystem, lam: float) -> int:
    """Number of eigenvalues ``<= lam``, counted with multiplicity."""
    if lam > sys.threshold:
        raise ValueError(f"lambda {lam} exceeds the completeness level {sys.threshold}")
    return sys.count(lam)


def counting_bound(lam: float, p: PotentialSpec, grid: Grid) -> float:
    """Quadrature of ``max(lam + 1 - V, 0)^(d/2 + 1)`` over the grid box.

    The absolute constant in front is taken as 1.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    V = p(grid.points)
    integrand = np.maximum(lam + 1.0 - V, 0.0) ** (grid.d / 2.0 + 1.0)
    return float(grid.weight * integrand.sum())


def counting_bound_exponent(p: PotentialSpec, d: int) -> float:
    """Growth exponent ``1 + d (1/2 + 1/tau1)`` of the counting bound."""
    return 1.0 + d * (0.5 + 1.0 / p.tau1)
