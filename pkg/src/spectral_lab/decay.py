"""Exponentially weighted norms, eigenfunction decay bounds and H^1 localization."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .model import Eigensystem, Grid, PotentialSpec

log = logging.getLogger(__name__)

# exponent cap for e^{2 mu |x|}; beyond it use log_weighted_l2
MAX_WEIGHT_EXPONENT = 700.0
NU_CANDIDATES = (0.1, 0.25, 0.5, 1.0)


class WeightOverflowError(OverflowError):
    pass


@dataclass(frozen=True)
class WeightedNormReport:
    mu: float
    lhs: float
    rhs: float
    R: float
    lam: float = math.nan
    nu: float | None = None
    M_nu: float | None = None
    note: str = ""

    @property
    def ratio(self) -> float:
        return self.lhs / self.rhs

    @property
    def ok(self) -> bool:
        return self.ratio <= 1.0


def weighted_l2(f, grid: Grid, mu: float) -> float:
    """``|| e^{mu |x|} f ||_{L^2}`` by grid quadrature."""
    f = np.asarray(f, dtype=float)
    rmax = float(grid.radii.max())
    if 2.0 * mu * rmax > MAX_WEIGHT_EXPONENT:
        raise WeightOverflowError(
            f"weight e^(2 mu |x|) overflows (2*mu*max|x| = {2 * mu * rmax:.1f} > "
            f"{MAX_WEIGHT_EXPONENT}); use log_weighted_l2 for log-domain accumulation"
        )
    w = np.exp(2.0 * mu * grid.radii)
    sq = f**2 if f.ndim == 1 else np.sum(f**2, axis=0)
    return float(np.sqrt(grid.weight * np.sum(w * sq)))


def log_weighted_l2(f, grid: Grid, mu: float) -> float:
    """``log || e^{mu |x|} f ||_{L^2}`` accumulated in the log domain."""
    f = np.asarray(f, dtype=float)
    sq = f**2 if f.ndim == 1 else np.sum(f**2, axis=0)
    nz = sq > 0
    if not nz.any():
        return -math.inf
    terms = 2.0 * mu * grid.radii[nz] + np.log(sq[nz])
    return 0.5 * (math.log(grid.weight) + float(logsumexp(terms)))


def gradient_magnitude(f, grid: Grid) -> np.ndarray:
    """``|grad f|`` at each grid point."""
    g = grid.gradient(f)
    return np.sqrt(np.sum(g**2, axis=0))


def prop34_radius(lam: float, p: PotentialSpec) -> float:
    """Smallest ``R >= 1`` with ``R^tau1 >= (lam + 2) / c1``."""
    return max(1.0, ((lam + 2.0) / p.c1) ** (1.0 / p.tau1))


def prop35_radius(lam: float, p: PotentialSpec, nu: float) -> float:
    """Smallest ``R >= 1`` with ``R^tau1 >= ((nu + 1)^2 + lam + 1) / c1``."""
    return max(1.0, (((nu + 1.0) ** 2 + lam + 1.0) / p.c1) ** (1.0 / p.tau1))


def growth_parameters(p: PotentialSpec, grid: Grid) -> tuple[float, float, str]:
    """Gradient growth pair ``(nu, M_nu)`` for ``p`` on the box of ``grid``.

    Explicit values on ``p`` win.  Otherwise ``nu`` is the smallest candidate in
    ``NU_CANDIDATES`` for which ``e^{-nu|x|} |grad V|`` is nonincreasing beyond
    ``|x| = 1`` on the box (falling back to the largest candidate), and ``M_nu``
    is the maximum of that function over box points with ``|x| >= 1``.
    """
    pts = grid.points
    r = grid.radii
    outside = r >= 1.0
    gnorm = p.gradient_norm(pts[outside])
    rr = r[outside]
    note = "explicit"
    nu = p.nu
    if nu is None:
        order = np.argsort(rr, kind="stable")
        nu = NU_CANDIDATES[-1]
        note = f"no candidate in {NU_CANDIDATES} gives a decreasing envelope; nu={nu}"
        for cand in NU_CANDIDATES:
            env = np.exp(-cand * rr[order]) * gnorm[order]
            if np.all(np.diff(env) <= 1e-12 * np.maximum(env[:-1], 1e-300)):
                nu = cand
                note = f"nu={cand}: smallest candidate with a decreasing envelope beyond |x|=1"
                break
    M_nu = p.M_nu
    if M_nu is None:
        M_nu = float(np.max(np.exp(-nu * rr) * gnorm)) if rr.size else 0.0
        note += "; M_nu maximized on the box"
    return float(nu), float(M_nu), note


def _check_box(lam, R, grid: Grid) -> str:
    if grid.L < R + 2.0:
        msg = f"box half-width {grid.L:.3g} < R + 2 = {R + 2:.3g}; near-boundary regime"
        log.warning(msg)
        return msg
    return ""


def check_prop34(lam: float, f, grid: Grid, p: PotentialSpec) -> WeightedNormReport:
    """Compare ``||e^{|x|/2} f||^2`` with ``8 e^{R+1} ||f||^2`` for an eigenpair."""
    R = prop34_radius(lam, p)
    note = _check_box(lam, R, grid)
    lhs = weighted_l2(f, grid, 0.5) ** 2
    rhs = 8.0 * math.exp(R + 1.0) * grid.norm(f) ** 2
    return WeightedNormReport(0.5, lhs, rhs, R, lam, note=note)


def check_prop35(lam: float, f, grid: Grid, p: PotentialSpec) -> WeightedNormReport:
    """Compare ``||e^{|x|/2} |grad f|||^2`` with
    ``(8 lam + (2 nu + 5) M_nu^2) e^{2(1+nu)(R+1)} ||f||^2``.
    """
    nu, M_nu, note = growth_parameters(p, grid)
    R = prop35_radius(lam, p, nu)
    box = _check_box(lam, R, grid)
    if box:
        note = f"{note}; {box}"
    lhs = weighted_l2(gradient_magnitude(f, grid), grid, 0.5) ** 2
    log_rhs = (
        math.log(8.0 * lam + (2.0 * nu + 5.0) * M_nu**2)
        + 2.0 * (1.0 + nu) * (R + 1.0)
        + math.log(grid.norm(f) ** 2)
    )
    return WeightedNormReport(0.5, lhs, math.exp(log_rhs), R, lam, nu, M_nu, note)


def check_eigensystem(sys: Eigensystem, lam_max: float, which: str = "prop34") -> list[WeightedNormReport]:
    check = {"prop34": check_prop34, "prop35": check_prop35}[which]
    out = []
    for k in range(sys.count(lam_max)):
        lam, f = sys.pair(k)
        out.append(check(lam, f, sys.grid, sys.potential))
    return out


def h1_density(f, grid: Grid) -> np.ndarray:
    """Pointwise ``|f|^2 + |grad f|^2`` (summed over trailing function axes)."""
    f = np.asarray(f, dtype=float)
    dens = f**2 + np.sum(grid.gradient(f) ** 2, axis=0)
    return dens


def h1_tail(f, grid: Grid, r: float) -> float:
    """``||f||^2_{H^1}`` restricted to grid points with ``|x| > r``."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    dens = h1_density(f, grid)
    return float(grid.weight * np.sum(dens[grid.radii > r]))


def h1_inside(f, grid: Grid, r: float) -> float:
    dens = h1_density(f, grid)
    return float(grid.weight * np.sum(dens[grid.radii <= r]))


@dataclass
class LocalizationCurve:
    lambdas: np.ndarray
    dims: np.ndarray
    r_star: np.ndarray
    exponent: float
    intercept: float
    effective_constant: float
    theory_exponent: float
    seed: int
    trials: int
    skipped: list = field(default_factory=list)

    @property
    def monotone_after_smoothing(self) -> bool:
        r = self.r_star
        if r.size < 3:
            return True
        smooth = np.convolve(r, np.ones(3) / 3.0, mode="valid")
        return bool(np.all(np.diff(smooth) >= -1e-12))

    def rows(self):
        for lam, m, r in zip(self.lambdas, self.dims, self.r_star):
            yield {"lambda": lam, "subspace_dim": int(m), "r_star": r,
                   "fitted_e": self.exponent, "seed": self.seed}


def _min_radius(tails_fn, target, lo, hi, tol):
    # smallest r (to tol) with tails_fn(r) <= target; tails_fn is nonincreasing
    if tails_fn(lo) <= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if tails_fn(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def localization_scan(
    sys: Eigensystem,
    lambdas,
    trials: int = 16,
    seed: int = 0,
) -> LocalizationCurve:
    """Minimal radius carrying all but half of the L^2 mass in H^1 tail, per lambda.

    For each ``lam`` the scan draws ``trials`` random unit vectors of
    ``Ran P_lam`` (Gaussian coefficients, normalized) and binary-searches, to
    half a grid cell, the least ``r`` such that the largest H^1 tail outside
    ``B(0, r)`` is at most ``1/2``.  The exponent ``e`` in ``r* ~ lam^e`` is
    fitted by least squares in log-log coordinates.
    """
    grid = sys.grid
    rng = np.random.default_rng(seed)
    rmax = float(grid.radii.max())
    order = np.argsort(grid.radii, kind="stable")
    radii_sorted = grid.radii[order]
    lam_out, dims, rstar, skipped = [], [], [], []
    for lam in lambdas:
        m = sys.count(lam)
        if lam > sys.threshold:
            raise ValueError(f"lambda {lam} exceeds the eigensystem threshold {sys.threshold}")
        if m == 0:
            log.warning("empty spectral subspace at lambda=%g, skipped", lam)
            skipped.append(lam)
            continue
        coeffs = rng.standard_normal((m, trials))
        coeffs /= np.linalg.norm(coeffs, axis=0)
        F = sys.vectors[:, :m] @ coeffs
        dens = h1_density(F, grid)  # (N, trials)
        # suffix sums over points sorted by radius give every tail at once
        tail_sorted = grid.weight * np.cumsum(dens[order][::-1], axis=0)[::-1]

        def worst_tail(r):
            i = int(np.searchsorted(radii_sorted, r, side="right"))
            return 0.0 if i >= radii_sorted.size else float(tail_sorted[i].max())

        target = 0.5  # half of the unit L^2 norm
        lam_out.append(float(lam))
        dims.append(m)
        rstar.append(_min_radius(worst_tail, target, 0.0, rmax, grid.h / 2.0))
    lam_arr = np.asarray(lam_out)
    r_arr = np.asarray(rstar)
    theory = 1.0 / sys.potential.tau1
    if lam_arr.size >= 2 and np.all(r_arr > 0):
        slope, intercept = np.polyfit(np.log(lam_arr), np.log(r_arr), 1)
    else:
        slope, intercept = math.nan, math.nan
    c_eff = float(np.max(r_arr / lam_arr**theory)) if r_arr.size else math.nan
    return LocalizationCurve(lam_arr, np.asarray(dims), r_arr, float(slope), float(intercept),
                             c_eff, theory, seed, trials, skipped)
