"""Heat semigroup in the eigenbasis, observability constants and minimal-norm null control."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .model import Eigensystem, PotentialSpec
from .numerics import DenseSym, NotPositiveDefiniteError, cholesky, dense_eigh, gen_eig_extreme
from .sensors import SensorMask
from .specineq import gram

log = logging.getLogger(__name__)

CONSTANTS_NOTE = (
    "K and C are existential in the theory; the bound is evaluated with the supplied "
    "values and carries no quantitative meaning beyond its T-dependence"
)


class SingularGramianError(ArithmeticError):
    def __init__(self, message, smallest):
        super().__init__(message)
        self.smallest = smallest


@dataclass(frozen=True)
class HeatState:
    """Spectral coefficients ``a_k = <g, f_k>`` at time ``t``."""

    coeffs: np.ndarray
    eigenvalues: np.ndarray
    t: float = 0.0

    @classmethod
    def from_function(cls, sys: Eigensystem, g, lam: float) -> "HeatState":
        sub = sys.subspace(lam)
        return cls(sys.grid.inner(sub.vectors, g), sub.eigenvalues.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def heat_propagate(state: HeatState, dt: float) -> HeatState:
    """``a_k -> a_k exp(-lambda_k dt)``."""
    if dt < 0:
        raise ValueError("time step must be nonnegative")
    return HeatState(state.coeffs * np.exp(-state.eigenvalues * dt), state.eigenvalues, state.t + dt)


def _phi(s: np.ndarray, T: float) -> np.ndarray:
    # (1 - e^{-sT}) / s, finite at s = 0
    out = np.empty_like(s)
    small = np.abs(s * T) < 1e-12
    out[small] = T
    out[~small] = -np.expm1(-s[~small] * T) / s[~small]
    return out


@dataclass(frozen=True)
class Gramians:
    lam: np.ndarray
    A: np.ndarray  # diagonal of the final-state Gramian
    B: np.ndarray  # observation Gramian
    chol: np.ndarray


def observation_gramians(sys: Eigensystem, mask: SensorMask, T: float, lam: float) -> Gramians:
    if not T > 0:
        raise ValueError("T must be positive")
    sub = sys.subspace(lam)
    if sub.m == 0:
        raise ValueError("empty subspace")
    G = gram(sub, mask).entries
    ev = sub.eigenvalues
    B = G * _phi(ev[:, None] + ev[None, :], T)
    B = 0.5 * (B + B.T)
    try:
        L = cholesky(B)
    except NotPositiveDefiniteError as exc:
        smallest = float(dense_eigh(DenseSym(B), count=1)[0][0])
        raise SingularGramianError(
            f"observation Gramian is numerically singular (smallest eigenvalue {smallest:.3e}, "
            f"pivot {exc.pivot}); the mask is too small or unresolved", smallest
        ) from exc
    return Gramians(ev, np.exp(-2.0 * ev * T), B, L)


@dataclass(frozen=True)
class CobsEstimate:
    T: float
    lam: float
    m: int
    cobs_sq: float
    direction: np.ndarray  # coefficients of the worst initial state
    bound: float | None = None
    K: float | None = None
    C: float | None = None
    pure_power_bound: float | None = None
    D: float | None = None
    note: str = ""

    @property
    def cobs(self) -> float:
        return math.sqrt(self.cobs_sq)


def estimate_cobs(sys: Eigensystem, mask: SensorMask, T: float, lam: float, *,
                  delta: float | None = None, alpha: float | None = None,
                  K: float = 1.0, C: float = 1.0, D: float | None = None) -> CobsEstimate:
    """Observability constant of the heat flow restricted to ``Ran P_lam``.

    With ``A = diag(e^{-2 lambda T})`` and
    ``B_jk = G_jk (1 - e^{-(lambda_j + lambda_k) T}) / (lambda_j + lambda_k)``
    the constant is the top eigenvalue of the pencil ``(A, B)``.  When ``delta``
    and ``alpha`` are given, the theoretical bound is evaluated alongside.
    """
    gm = observation_gramians(sys, mask, T, lam)
    mu, v = gen_eig_extreme(np.diag(gm.A), gm.B, "max")
    # A v = mu B v makes A^{1/2} v the top eigenvector of A^{1/2} B^{-1} A^{1/2}
    a = np.sqrt(gm.A) * v
    a = a / np.linalg.norm(a)
    p = sys.potential
    bound = rem = None
    note = ""
    if delta is not None and alpha is not None:
        try:
            bound = cobs_bound(T, delta, alpha, p, K, C)
            note = CONSTANTS_NOTE
        except ValueError as exc:
            note = str(exc)
        if D is not None and p.tau1 == p.tau2 and alpha < p.tau1 / 3.0:
            rem = pure_power_bound(T, alpha, p.tau1, D)
    return CobsEstimate(T, lam, gm.lam.size, float(mu), a, bound, K, C, rem, D, note)


def bound_exponent(alpha: float, p: PotentialSpec) -> float:
    return (alpha + 2.0 * p.tau2 / 3.0) / p.tau1


def log_cobs_bound(T: float, delta: float, alpha: float, p: PotentialSpec,
                   K: float = 1.0, C: float = 1.0) -> float:
    """Logarithm of ``(K/T) (2 d0 + 1)^K exp[K (d1 / T^s)^(1/(1-s))]``."""
    s = bound_exponent(alpha, p)
    if not s < 1:
        raise ValueError("s >= 1, bound inapplicable")
    if not s > 0:
        raise ValueError("s must be positive")
    if K < 1 or C <= 0 or T <= 0:
        raise ValueError("need K >= 1, C > 0 and T > 0")
    if not 0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    e = C ** (1.0 + alpha)
    log_d0 = -e * math.log(delta)
    d1 = -e * math.log(delta)
    # log(2 d0 + 1) without overflowing d0
    log_2d0p1 = math.log(2.0) + log_d0 + math.log1p(math.exp(-log_d0) / 2.0)
    q = 1.0 / (1.0 - s)
    return (math.log(K) - math.log(T) + K * log_2d0p1
            + K * math.exp(q * (math.log(d1) - s * math.log(T))))


def cobs_bound(T: float, delta: float, alpha: float, p: PotentialSpec,
               K: float = 1.0, C: float = 1.0) -> float:
    """Upper bound on ``C_obs^2``; ``inf`` when it exceeds the float range."""
    v = log_cobs_bound(T, delta, alpha, p, K, C)
    return math.exp(v) if v < 709 else math.inf


def time_exponent(alpha: float, tau: float) -> float:
    """``1 + (2 alpha + tau/3) / (tau/3 - alpha)``, the power of ``T`` in the pure-power form."""
    if not alpha < tau / 3.0:
        raise ValueError("need alpha < tau/3")
    return 1.0 + (2.0 * alpha + tau / 3.0) / (tau / 3.0 - alpha)


def power_form_exponent(alpha: float, tau: float) -> float:
    """``s / (1 - s)`` for ``tau1 = tau2 = tau``."""
    s = (alpha + 2.0 * tau / 3.0) / tau
    return s / (1.0 - s)


def pure_power_bound(T: float, alpha: float, tau: float, D: float) -> float:
    """``(D/T) exp(D / T^(1 + (2 alpha + tau/3)/(tau/3 - alpha)))``."""
    v = math.log(D) - math.log(T) + D * math.exp(-time_exponent(alpha, tau) * math.log(T))
    return math.exp(v) if v < 709 else math.inf


@dataclass(frozen=True)
class ControlResult:
    coeffs: np.ndarray  # c_k
    cost: float
    final_state: np.ndarray
    initial_norm: float
    T: float
    eigenvalues: np.ndarray
    sys: Eigensystem
    mask: SensorMask

    def trajectory(self, t: float) -> np.ndarray:
        """Control ``u(., t) = sqrt(w) sum_k c_k e^{-lambda_k (T - t)} f_k`` on the grid."""
        if not 0 <= t <= self.T:
            raise ValueError("t outside [0, T]")
        m = self.coeffs.size
        phi = self.sys.vectors[:, :m] @ (self.coeffs * np.exp(-self.eigenvalues * (self.T - t)))
        return np.sqrt(self.mask.weights) * phi


def min_norm_control(sys: Eigensystem, mask: SensorMask, T: float, lam: float, g) -> ControlResult:
    """Least-L^2 control on ``omega x [0, T]`` steering ``Ran P_lam g`` to zero.

    The control enters through ``sqrt(w)`` so that its cost and effect are both
    expressed by the mask Gram matrix.  ``g`` is a grid function or, if its length
    equals the subspace dimension, a coefficient vector.
    """
    gm = observation_gramians(sys, mask, T, lam)
    m = gm.lam.size
    g = np.asarray(g, dtype=float)
    a = g if g.shape == (m,) else sys.grid.inner(sys.vectors[:, :m], g)
    b = np.exp(-gm.lam * T) * a
    L = gm.chol

    def solve(r):
        return solve_triangular(L.T, solve_triangular(L, r, lower=True), lower=False)

    c = -solve(b)
    for _ in range(2):  # iterative refinement
        c -= solve(b + gm.B @ c)
    final = b + gm.B @ c
    cost = math.sqrt(max(0.0, float(c @ gm.B @ c)))
    return ControlResult(c, cost, final, float(np.linalg.norm(a)), T, gm.lam, sys, mask)
