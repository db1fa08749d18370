"""Ghost-dimension extension ``F(x, t) = sum_k f_k(x) s_t(lambda_k)`` and its checks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .blob import write_blob
from .model import Hamiltonian, PotentialSpec, SpectralSubspace, assemble

SERIES_SWITCH = 1e-4
MIN_T_POINTS = 64


def s_eval(mu, t) -> np.ndarray:
    """``sinh(sqrt(mu) t) / sqrt(mu)``, equal to ``t`` at ``mu = 0``.

    A three-term Taylor series replaces the quotient when ``sqrt(mu) |t| < 1e-4``.
    """
    mu, t = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(t, dtype=float))
    if np.any(mu < 0):
        raise ValueError("mu must be nonnegative")
    r = np.sqrt(mu)
    z = r * np.abs(t)
    small = z < SERIES_SWITCH
    out = np.empty(np.broadcast(mu, t).shape)
    ts, ms = t[small], mu[small]
    out[small] = ts * (1.0 + ms * ts**2 / 6.0 + ms**2 * ts**4 / 120.0)
    big = ~small
    out[big] = np.sinh(r[big] * t[big]) / r[big]
    return out if out.ndim else float(out)


def ds_eval(mu, t) -> np.ndarray:
    """``d/dt s_t(mu) = cosh(sqrt(mu) t)``."""
    return np.cosh(np.sqrt(np.asarray(mu, dtype=float)) * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class GhostField:
    """Tabulated extension on grid x t-grid.

    ``F``, ``dF`` (``d/dt``) and ``d2F`` (``d^2/dt^2``) have shape ``(N, nt)``.
    """

    subspace: SpectralSubspace
    coeffs: np.ndarray
    rho: float
    t: np.ndarray
    F: np.ndarray
    dF: np.ndarray
    d2F: np.ndarray

    @property
    def lam(self) -> float:
        return self.subspace.threshold

    @property
    def source(self) -> np.ndarray:
        return self.subspace.combine(self.coeffs)

    def oddness(self) -> float:
        """``max |F(., t) + F(., -t)|`` over the symmetric t-grid."""
        return float(np.max(np.abs(self.F + self.F[:, ::-1])))

    def save(self, path):
        g = self.subspace.grid
        meta = {"grid": g.descriptor(), "rho": self.rho, "lambda": self.lam}
        return write_blob(path, "ghost_field", meta,
                          {"t": self.t, "F": self.F.reshape(g.shape + (self.t.size,))})


def t_grid(rho: float, points: int = 129) -> np.ndarray:
    if points < MIN_T_POINTS:
        raise ValueError(f"need at least {MIN_T_POINTS} t-points")
    return np.linspace(-rho, rho, points)


def extend(subspace: SpectralSubspace, coeffs, rho: float, t=None) -> GhostField:
    """Tabulate ``F`` and its analytic t-derivatives for ``f = sum coeffs[k] f_k``."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (subspace.m,):
        raise ValueError(f"need {subspace.m} coefficients, got shape {coeffs.shape}")
    if not rho > 0:
        raise ValueError("rho must be positive")
    t = t_grid(rho) if t is None else np.asarray(t, dtype=float)
    lam = subspace.eigenvalues
    S = s_eval(lam[:, None], t[None, :])  # (m, nt)
    dS = ds_eval(lam[:, None], t[None, :])
    V = subspace.vectors
    CF = coeffs[:, None]
    F = V @ (CF * S)
    dF = V @ (CF * dS)
    d2F = V @ (CF * lam[:, None] * S)
    return GhostField(subspace, coeffs, float(rho), t, F, dF, d2F)


@dataclass(frozen=True)
class IdentityReport:
    r1: float  # boundary identity dF(., 0) = f
    r2: float  # elliptic identity H F = d^2F/dt^2
    odd: float


def verify_identities(field: GhostField, ham: Hamiltonian | None = None) -> IdentityReport:
    sub = field.subspace
    grid = sub.grid
    if ham is None:
        ham = assemble(grid, sub.system.potential)
    f = field.source
    fnorm = grid.norm(f)
    zero = np.nonzero(field.t == 0.0)[0]
    if zero.size:
        dF0 = field.dF[:, zero[0]]
    else:
        dF0 = sub.vectors @ (field.coeffs * ds_eval(sub.eigenvalues, 0.0))
    r1 = grid.norm(dF0 - f) / fnorm
    r2 = 0.0
    HF = ham.matvec(field.F)
    for j in range(field.t.size):
        nF = grid.norm(field.F[:, j])
        if nF == 0.0:
            continue
        r2 = max(r2, grid.norm(HF[:, j] - field.d2F[:, j]) / nF)
    return IdentityReport(float(r1), float(r2), field.oddness())


def _trapezoid(y, t):
    return float(np.trapezoid(y, t)) if hasattr(np, "trapezoid") else float(np.trapz(y, t))


def h1_norm_sq(field: GhostField) -> float:
    """``||F||^2`` in H^1 of box x (-rho, rho): spatial gradient by differences,
    t-derivative analytic, t-integral by the trapezoid rule."""
    grid = field.subspace.grid
    w = grid.weight
    per_t = w * (np.sum(field.F**2, axis=0) + np.sum(field.dF**2, axis=0)
                 + np.sum(grid.gradient(field.F) ** 2, axis=(0, 1)))
    return _trapezoid(per_t, field.t)


@dataclass(frozen=True)
class SandwichReport:
    h1: float
    lower: float
    log_upper: float
    lower_slack: float  # (h1 - lower) / lower
    upper_slack: float  # (upper - h1) / upper


def sandwich_log_upper(rho: float, lam: float, fnorm_sq: float) -> float:
    return (math.log(2.0 * rho) + math.log1p((1.0 + lam) * rho**2)
            + 2.0 * rho * math.sqrt(lam) + math.log(fnorm_sq))


def h1_sandwich(field: GhostField, rho: float | None = None, lam: float | None = None) -> SandwichReport:
    """Relative slacks of ``2 rho ||f||^2 <= ||F||^2_{H^1} <= 2 rho (1 + (1+lam) rho^2) e^{2 rho sqrt(lam)} ||f||^2``."""
    rho = field.rho if rho is None else rho
    lam = field.lam if lam is None else lam
    t = field.t
    if t.size < MIN_T_POINTS:
        raise ValueError(f"need at least {MIN_T_POINTS} t-points")
    if not (math.isclose(t[0], -rho) and math.isclose(t[-1], rho)):
        raise ValueError("t-grid must span [-rho, rho]")
    grid = field.subspace.grid
    fsq = grid.norm(field.source) ** 2
    h1 = h1_norm_sq(field)
    lower = 2.0 * rho * fsq
    log_up = sandwich_log_upper(rho, lam, fsq)
    return SandwichReport(h1, lower, log_up, (h1 - lower) / lower,
                          -math.expm1(math.log(h1) - log_up))


@dataclass(frozen=True)
class GeometryConstants:
    side: int
    L: float
    theta: float
    log_inv_theta: float
    R: float
    kappa_proxy: float
    c_d: float


def geometry_constants(lam: float, p: PotentialSpec, delta: float, alpha: float,
                       c_eff: float, d: int = 1, c_d: float = 1.0) -> GeometryConstants:
    """Box, interpolation exponent and radius used by the ghost-dimension argument.

    ``side`` is the smallest integer at least ``max(5, 2 c_eff lam^(1/tau1))``;
    ``theta = delta^(2 (2 sqrt(d) c_eff)^alpha lam^(alpha/tau1))``;
    ``R = 9 e sqrt(d)``; the kappa proxy is ``1 / (c_d log(1/theta))`` with an
    unspecified dimensional ``c_d``.
    """
    if lam < 1:
        raise ValueError("lambda must be >= 1")
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    need = max(5.0, 2.0 * c_eff * lam ** (1.0 / p.tau1))
    side = int(math.ceil(need - 1e-12))
    expo = 2.0 * (2.0 * math.sqrt(d) * c_eff) ** alpha * lam ** (alpha / p.tau1)
    log_inv = expo * math.log(1.0 / delta)
    return GeometryConstants(side, side / 2.0, math.exp(-log_inv), log_inv,
                             9.0 * math.e * math.sqrt(d), 1.0 / (c_d * log_inv), c_d)
