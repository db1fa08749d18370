"""Observability ratio on spectral subspaces, its lambda-scaling and exponent fits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    ANISOTROPIC,
    DEFAULT_BUFFER,
    Eigensystem,
    Grid,
    PotentialSpec,
    SpectralSubspace,
    assemble,
    eigendecompose,
    localization_halfwidth,
    tensor_compose,
)
from .numerics import DenseSym, dense_eigh
from .sensors import BallUnion, Cone, EquidistributedDecay, SensorMask, ThickDecay, realize, spec_descriptor

log = logging.getLogger(__name__)

S_GRID = np.round(np.arange(1, 25) * 0.05, 10)
GRAM_TOL = 1e-10
N_CAP = {1: 4000, 2: 1500}


class NoDecayError(ValueError):
    pass


@dataclass(frozen=True)
class GramMatrix:
    """``G_jk = <f_j, 1_omega f_k>`` on a spectral subspace."""

    entries: np.ndarray

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    def leading(self, m: int) -> "GramMatrix":
        return GramMatrix(self.entries[:m, :m])

    def eigenvalues(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros(0)
        return dense_eigh(DenseSym(self.entries))[0]

    def smallest_eigenvalue(self) -> float:
        if self.m == 0:
            raise ValueError("empty subspace")
        return float(dense_eigh(DenseSym(self.entries), count=1)[0][0])


def _symmetrize(G: np.ndarray) -> np.ndarray:
    return 0.5 * (G + G.T)


def _tensor_gram(sys: Eigensystem, m: int, weights: np.ndarray) -> np.ndarray:
    # product vectors a_i (x) b_k are never formed: for each pair (i, i') the
    # x1-sum collapses to a weight on x2, which is then paired with b_k b_k'
    fac = sys.factors
    idx = fac.index[:m]
    n = sys.grid.n
    W = weights.reshape(n, n)
    ia = np.unique(idx[:, 0])
    kb = np.unique(idx[:, 1])
    A = fac.first.vectors[:, ia]
    B = fac.second.vectors[:, kb]
    pos_a = {v: j for j, v in enumerate(ia)}
    pos_b = {v: j for j, v in enumerate(kb)}
    pairs = [(p, q) for p in range(ia.size) for q in range(p, ia.size)]
    U = np.stack([A[:, p] * A[:, q] for p, q in pairs], axis=1)
    Vx2 = W.T @ U  # (n, npairs)
    h2 = sys.grid.weight
    blocks = {}
    for c, (p, q) in enumerate(pairs):
        blk = h2 * (B.T @ (Vx2[:, c : c + 1] * B))
        blocks[(p, q)] = blk
        blocks[(q, p)] = blk
    ai = np.array([pos_a[v] for v in idx[:, 0]])
    bk = np.array([pos_b[v] for v in idx[:, 1]])
    G = np.empty((m, m))
    for j in range(m):
        for p in np.unique(ai):
            cols = np.nonzero(ai == p)[0]
            G[j, cols] = blocks[(ai[j], p)][bk[j], bk[cols]]
    return G


def gram(subspace: SpectralSubspace, mask: SensorMask) -> GramMatrix:
    """Mask-weighted Gram matrix of the subspace basis."""
    sys = subspace.system
    if sys.grid != mask.grid:
        raise ValueError("subspace and mask live on different grids")
    m = subspace.m
    if m == 0:
        return GramMatrix(np.zeros((0, 0)))
    if sys.factors is not None and sys._vectors is None:
        G = _tensor_gram(sys, m, mask.weights)
    else:
        F = subspace.vectors
        G = sys.grid.weight * (F.T @ (mask.weights[:, None] * F))
    return GramMatrix(_symmetrize(G))


def ratio_from_gram(G: GramMatrix) -> float:
    if G.m == 0:
        raise ValueError("empty subspace")
    return math.sqrt(max(0.0, G.smallest_eigenvalue()))


def observability_ratio(subspace: SpectralSubspace, mask: SensorMask) -> float:
    """Best ``c`` with ``||f||_{L^2(omega)} >= c ||f||`` on the subspace."""
    if subspace.m == 0:
        raise ValueError("empty subspace")
    return ratio_from_gram(gram(subspace, mask))


def spec_alpha(spec) -> float:
    return float(getattr(spec, "alpha", 0.0))


def reference_exponents(p: PotentialSpec, alpha: float) -> dict:
    """Exponents of ``lambda`` in ``log(1/c)`` predicted or conjectured for this pair."""
    t1, t2, t = p.tau1, p.tau2, p.tau
    return {
        "thm12": (alpha + 2.0 * t2 / 3.0) / t1,
        "zhuz": alpha / t1 + t2 / (2.0 * t1),
        "conj": alpha / t + 0.5,
        "aniso": alpha / t + 2.0 / 3.0,
    }


@dataclass
class RatioCurve:
    lambdas: np.ndarray
    dims: np.ndarray
    c: np.ndarray
    spec: dict
    potential: dict
    alpha: float
    references: dict
    grids: list = field(default_factory=list)
    unresolved_fraction: float = 0.0
    richardson_delta: np.ndarray | None = None
    fit: "ExponentFit | None" = None

    @property
    def s_hat(self) -> float:
        return math.nan if self.fit is None else self.fit.s

    def monotone_violations(self, rtol: float = 1e-12) -> int:
        return int(np.sum(np.diff(self.c) > rtol * self.c[:-1]))

    def rows(self):
        delta = self.richardson_delta
        for j, (lam, m, c) in enumerate(zip(self.lambdas, self.dims, self.c)):
            yield [float(lam), int(m), float(c), None if delta is None else float(delta[j]),
                   None, None, None, None, None]
        r = self.references
        yield ["fit", None, None, None, self.s_hat, r["thm12"], r["zhuz"], r["conj"], r["aniso"]]

    header = ["lambda", "m", "c", "richardson_delta", "s_hat", "thm12", "zhuz", "conj", "aniso"]


@dataclass(frozen=True)
class ExponentFit:
    s: float
    a: float
    b: float
    residual: float
    residuals: np.ndarray


def _fit_arrays(lambdas, c, s_grid=S_GRID) -> ExponentFit:
    lam = np.asarray(lambdas, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(c <= 0) or np.any(c > 1 + 1e-12):
        raise ValueError("ratios must lie in (0, 1]")
    y = -np.log(np.minimum(c, 1.0))
    if np.all(y <= 1e-14):
        raise NoDecayError("no decay to fit")
    if np.count_nonzero(y > 1e-14) < 4:
        raise NoDecayError("need at least 4 samples with c < 1")
    best = None
    res = np.empty(len(s_grid))
    for j, s in enumerate(s_grid):
        x = lam**s
        X = np.column_stack([np.ones_like(x), x])
        (a, b), *_ = np.linalg.lstsq(X, y, rcond=None)
        if b < 0:
            a, b = float(np.mean(y)), 0.0
        r = float(np.sum((a + b * x - y) ** 2))
        res[j] = r
        # strict improvement beyond roundoff is needed to move to a larger s
        if best is None or r < best[3] - 1e-12 * max(1.0, best[3]):
            best = (float(s), float(a), float(b), r)
    return ExponentFit(*best, res)


def fit_exponent(curve: RatioCurve, s_grid=S_GRID) -> ExponentFit:
    """Least-squares fit of ``log(1/c) ~ a + b lambda^s`` with ``b >= 0`` over ``s_grid``."""
    return _fit_arrays(curve.lambdas, curve.c, s_grid)


def choose_grid(p: PotentialSpec, spec, lam_max: float, d: int, margin: float = 2.0,
                n_cap: int | None = None) -> Grid:
    """Box from :func:`localization_halfwidth`; spacing at most a quarter of the
    smallest sensor radius that can be resolved under the cap, and at most
    ``0.1 / sqrt(lam_max)``."""
    L = max(localization_halfwidth(lam_max, p, margin), 1.5)
    n_cap = N_CAP[d] if n_cap is None else n_cap
    h_cap = 2.0 * L / (n_cap + 1)
    h = 0.1 / math.sqrt(lam_max)
    radii = _spec_radii(spec, L, d)
    if radii.size:
        usable = radii[radii / 4.0 >= h_cap]
        if usable.size:
            h = min(h, float(usable.min()) / 4.0)
    h = max(h, h_cap)
    n = min(n_cap, max(3, int(math.ceil(2.0 * L / h)) - 1))
    return Grid(d, L, n)


def _spec_radii(spec, L: float, d: int) -> np.ndarray:
    K = int(math.floor(L - 0.5 + 1e-12))
    if K < 0 or not isinstance(spec, (EquidistributedDecay, BallUnion)):
        if isinstance(spec, ThickDecay):
            return np.array([spec.rho])
        return np.zeros(0)
    kk = np.arange(-K, K + 1, dtype=float)
    if d == 1:
        ks = kk[:, None]
    else:
        ks = np.stack(np.meshgrid(kk, kk, indexing="ij"), -1).reshape(-1, 2)
    return spec.radius(ks)


def build_eigensystem(p: PotentialSpec, grid: Grid, lam_max: float,
                      buffer: float = DEFAULT_BUFFER, seed: int = 0) -> Eigensystem:
    """Eigensystem up to ``lam_max (1 + buffer)``; anisotropic 2D problems go
    through the separable product of two 1D systems."""
    if grid.d == 2 and p.kind == ANISOTROPIC and p.d1 == 1:
        g1 = Grid(1, grid.L, grid.n)
        s1 = eigendecompose(assemble(g1, PotentialSpec.power_law(p.tau1)), lam_max, buffer=buffer)
        s2 = eigendecompose(assemble(g1, PotentialSpec.free()), lam_max, buffer=buffer)
        upper = lam_max * (1.0 + buffer)
        sys = tensor_compose(s1, s2, potential=p)
        if sys.threshold < upper:
            raise RuntimeError("tensor factors do not cover the requested range")
        return tensor_compose(s1, s2, lam_max=upper, potential=p)
    return eigendecompose(assemble(grid, p), lam_max, buffer=buffer, seed=seed)


def _curve_on_grid(p, spec, lambdas, grid, buffer, seed):
    sys = build_eigensystem(p, grid, lambdas[-1], buffer, seed)
    mask = realize(spec, grid)
    top = sys.subspace(lambdas[-1])
    G = gram(top, mask)
    dims = np.array([sys.count(lam) for lam in lambdas])
    if dims[0] == 0:
        raise ValueError(f"empty subspace at lambda={lambdas[0]}")
    c = np.array([ratio_from_gram(G.leading(m)) for m in dims])
    return dims, c, mask


def ratio_scan(
    p: PotentialSpec,
    spec,
    lambdas,
    *,
    d: int = 1,
    policy: str = "shared",
    margin: float = 2.0,
    buffer: float = DEFAULT_BUFFER,
    n_cap: int | None = None,
    richardson: bool = True,
    seed: int = 0,
) -> RatioCurve:
    """Observability ratio ``c(lambda)`` along an increasing lambda list.

    ``policy="shared"`` sizes one grid for the largest lambda and reads every
    ``c(lambda)`` off leading blocks of a single Gram matrix, so the nested
    subspace monotonicity holds exactly.  ``policy="per_lambda"`` rebuilds box
    and grid for every lambda.  With ``richardson`` the shared curve is
    recomputed at half the resolution and the difference is reported.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.size < 4 or np.any(np.diff(lam) <= 0):
        raise ValueError("need an increasing list of at least 4 lambdas")
    alpha = spec_alpha(spec)
    refs = reference_exponents(p, alpha)
    grids = []
    delta = None
    if policy == "shared":
        grid = choose_grid(p, spec, lam[-1], d, margin, n_cap)
        dims, c, mask = _curve_on_grid(p, spec, lam, grid, buffer, seed)
        grids.append(grid.descriptor())
        unresolved = mask.unresolved_fraction
        if richardson:
            coarse = Grid(d, grid.L, max(3, (grid.n - 1) // 2))
            _, c2, _ = _curve_on_grid(p, spec, lam, coarse, buffer, seed)
            delta = c - c2
    elif policy == "per_lambda":
        dims, c, fr = [], [], []
        for x in lam:
            grid = choose_grid(p, spec, x, d, margin, n_cap)
            sys = build_eigensystem(p, grid, x, buffer, seed)
            mask = realize(spec, grid)
            sub = sys.subspace(x)
            dims.append(sub.m)
            c.append(observability_ratio(sub, mask))
            fr.append(mask.unresolved_fraction)
            grids.append(grid.descriptor())
        dims, c = np.array(dims), np.array(c)
        unresolved = float(max(fr))
    else:
        raise ValueError(f"unknown grid policy {policy!r}")
    if unresolved > 0:
        log.warning("ratio scan: %.1f%% of sensor cells unresolved", 100 * unresolved)
    curve = RatioCurve(lam, dims, c, spec_descriptor(spec), p.descriptor(), alpha, refs,
                       grids, unresolved, delta)
    try:
        curve.fit = fit_exponent(curve)
    except NoDecayError as exc:
        log.warning("exponent fit skipped: %s", exc)
    return curve


def admissible(p: PotentialSpec, alpha: float) -> bool:
    return alpha < p.tau1 - 2.0 * p.tau2 / 3.0


def exponent_report(curve: RatioCurve, tol: float = 0.05) -> dict:
    """Fitted exponent against the reference exponents."""
    r = curve.references
    pd = curve.potential
    bound = pd["tau1"] - 2.0 * pd["tau2"] / 3.0
    alpha = curve.alpha
    s = curve.s_hat
    out = {
        "s_hat": s,
        "a_hat": None if curve.fit is None else curve.fit.a,
        "b_hat": None if curve.fit is None else curve.fit.b,
        "fit_residual": None if curve.fit is None else curve.fit.residual,
        "references": dict(r),
        "alpha": alpha,
        "consistent_with_thm12": bool(s <= r["thm12"] + tol) if not math.isnan(s) else None,
        "distance_to_conj": abs(s - r["conj"]) if not math.isnan(s) else None,
        "near_conj": bool(abs(s - r["conj"]) <= tol) if not math.isnan(s) else None,
        "admissible": alpha < bound,
        "admissibility_bound": bound,
        "unresolved_fraction": curve.unresolved_fraction,
        "monotone_violations": curve.monotone_violations(),
    }
    if pd["kind"] in ("power", "anisotropic") and pd["tau1"] == 2.0:
        out["harmonic_alpha_bound"] = 2.0 / 3.0
    if curve.richardson_delta is not None:
        out["richardson_delta_max"] = float(np.max(np.abs(curve.richardson_delta)))
    return out
