"""Sensor sets and their realization as fractional grid masks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path

import numpy as np

from .blob import write_blob
from .model import Grid

log = logging.getLogger(__name__)

SUBSAMPLES = 3  # per axis, for fractional weights


def _decay_exponent(knorm: np.ndarray, alpha: float) -> np.ndarray:
    # alpha = 0 means no decay: the same set in every cell, including k = 0
    if alpha == 0:
        return np.ones_like(knorm)
    return 1.0 + knorm**alpha


@dataclass(frozen=True)
class EquidistributedDecay:
    """A ball of radius ``delta^(1 + |k|^alpha)`` in every unit cell ``k + (-1/2, 1/2)^d``.

    ``decay_axes`` is ``"all"`` or an axis count ``d1``: then only the first
    ``d1`` components of ``k`` enter ``|k|``.
    """

    delta: float
    alpha: float = 0.0
    placement: str = "center"
    seed: int = 0
    decay_axes: str | int = "all"

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.placement not in ("center", "random"):
            raise ValueError("placement must be 'center' or 'random'")
        if self.decay_axes != "all" and not (isinstance(self.decay_axes, int) and self.decay_axes >= 1):
            raise ValueError("decay_axes must be 'all' or a positive axis count")

    def radius(self, k) -> np.ndarray:
        k = np.atleast_2d(np.asarray(k, dtype=float))
        if self.decay_axes != "all":
            k = k[:, : self.decay_axes]
        return self.delta ** _decay_exponent(np.linalg.norm(k, axis=1), self.alpha)


@dataclass(frozen=True)
class ThickDecay:
    """Measure fraction at least ``gamma^(1 + |k|^alpha)`` in every cell ``rho k + (-rho/2, rho/2)^d``."""

    rho: float
    gamma: float
    alpha: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def fraction(self, k) -> np.ndarray:
        k = np.atleast_2d(np.asarray(k, dtype=float))
        return self.gamma ** _decay_exponent(np.linalg.norm(k, axis=1), self.alpha)


@dataclass(frozen=True)
class BallUnion:
    """Union of the balls ``B(k, 2^-(1 + |k|^alpha))`` over integer ``k``."""

    alpha: float = 0.0

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")

    def radius(self, k) -> np.ndarray:
        k = np.atleast_2d(np.asarray(k, dtype=float))
        return 0.5 ** _decay_exponent(np.linalg.norm(k, axis=1), self.alpha)


@dataclass(frozen=True)
class Cone:
    """Points with ``|x| >= r0`` whose direction lies in a given set.

    In 1D the direction set is a subset of ``signs``; in 2D it is the sector of
    angular half-width ``half_width`` around ``direction`` (radians).
    """

    r0: float
    signs: tuple = (-1, 1)
    half_width: float = math.pi / 4
    direction: float = 0.0

    def __post_init__(self):
        if not self.r0 > 0:
            raise ValueError("r0 must be positive")
        if not set(self.signs) <= {-1, 1} or not self.signs:
            raise ValueError("signs must be a nonempty subset of {-1, 1}")
        if not 0 < self.half_width <= math.pi:
            raise ValueError("half_width must lie in (0, pi]")

    def contains(self, x: np.ndarray) -> np.ndarray:
        r = np.linalg.norm(x, axis=1)
        far = r >= self.r0
        if x.shape[1] == 1:
            s = np.sign(x[:, 0])
            return far & np.isin(s, self.signs)
        ang = np.arctan2(x[:, 1], x[:, 0]) - self.direction
        ang = (ang + math.pi) % (2 * math.pi) - math.pi
        return far & (np.abs(ang) <= self.half_width)


SensorSpec = EquidistributedDecay | ThickDecay | BallUnion | Cone


@dataclass
class CellTable:
    """Per-cell geometry: index ``k``, ball center/radius (``nan`` when not a ball),
    realized measure of the mask inside the cell and the required measure."""

    k: np.ndarray
    center: np.ndarray
    radius: np.ndarray
    measure: np.ndarray
    required: np.ndarray
    resolved: np.ndarray

    def __len__(self):
        return self.k.shape[0]

    def find(self, k) -> int:
        hit = np.nonzero(np.all(self.k == np.asarray(k), axis=1))[0]
        if hit.size == 0:
            raise KeyError(f"no cell {tuple(k)}")
        return int(hit[0])


@dataclass
class SensorMask:
    weights: np.ndarray
    grid: Grid
    spec: object
    cells: CellTable | None
    unresolved: list = field(default_factory=list)

    @property
    def unresolved_fraction(self) -> float:
        if self.cells is None or len(self.cells) == 0:
            return 0.0
        return float(np.mean(~self.cells.resolved))

    def with_weights(self, weights) -> "SensorMask":
        return SensorMask(np.asarray(weights, dtype=float), self.grid, self.spec, self.cells, self.unresolved)


def _cell_range(L: float, side: float) -> int:
    # largest K with the cell of index K (center K*side) inside (-L, L)
    return int(math.floor(L / side - 0.5 + 1e-12))


def _cell_indices(K: int, d: int) -> np.ndarray:
    rng = np.arange(-K, K + 1)
    return np.array(list(product(rng, repeat=d)), dtype=float).reshape(-1, d)


def _flat_cell(j: np.ndarray, K: int) -> tuple[np.ndarray, np.ndarray]:
    # flat cell id of integer cell coordinates j (N, d); -1 where outside [-K, K]^d
    valid = np.all(np.abs(j) <= K, axis=1)
    w = 2 * K + 1
    idx = np.zeros(j.shape[0], dtype=np.int64)
    for ax in range(j.shape[1]):
        idx = idx * w + (j[:, ax].astype(np.int64) + K)
    return np.where(valid, idx, -1), valid


def _subsample_offsets(grid: Grid) -> np.ndarray:
    s = grid.h / SUBSAMPLES
    base = (np.arange(SUBSAMPLES) - (SUBSAMPLES - 1) / 2.0) * s
    return np.array(list(product(base, repeat=grid.d)))


def _point_cells(grid: Grid, K: int, side: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    # every grid point belongs to the cell containing it
    return _flat_cell(np.rint(grid.points / side), K)


def _ball_mask(grid: Grid, K: int, centers: np.ndarray, radii: np.ndarray):
    ncell = centers.shape[0]
    pts = grid.points
    hits = np.zeros(grid.size)
    for off in _subsample_offsets(grid):
        x = pts + off
        cid, valid = _flat_cell(np.rint(x), K)
        c = np.where(valid, cid, 0)
        hits += valid & (np.sum((x - centers[c]) ** 2, axis=1) <= radii[c] ** 2)
    weights = hits / SUBSAMPLES**grid.d
    pcid, pvalid = _point_cells(grid, K)
    measure = np.bincount(pcid[pvalid], weights=weights[pvalid], minlength=ncell) * grid.weight
    return weights, measure


def _ball_volume(r: np.ndarray, d: int) -> np.ndarray:
    return 2.0 * r if d == 1 else math.pi * r**2


def _realize_balls(spec, grid: Grid) -> SensorMask:
    d = grid.d
    K = _cell_range(grid.L, 1.0)
    ks = _cell_indices(K, d)
    radii = spec.radius(ks)
    centers = ks.copy()
    if isinstance(spec, EquidistributedDecay) and spec.placement == "random":
        rng = np.random.default_rng(spec.seed)
        u = rng.uniform(-1.0, 1.0, size=ks.shape)
        # the ball stays inside its cell, with a margin of h/2 when there is room so
        # that no grid point of a neighboring cell sees it through its subsamples
        room = 0.5 - radii - np.minimum(grid.h / 2.0, 0.5 - radii)
        centers = ks + u * room[:, None]
    weights, measure = _ball_mask(grid, K, centers, radii)
    resolved = radii >= grid.h
    unresolved = [tuple(int(v) for v in k) for k in ks[~resolved]]
    if unresolved:
        log.warning("%d of %d sensor cells have radius below the grid spacing h=%.3g",
                    len(unresolved), len(ks), grid.h)
    cells = CellTable(ks.astype(int), centers, radii, measure, _ball_volume(radii, d), resolved)
    return SensorMask(weights, grid, spec, cells, unresolved)


def _realize_thick(spec: ThickDecay, grid: Grid) -> SensorMask:
    d, rho = grid.d, spec.rho
    K = _cell_range(grid.L, rho)
    if K < 0:
        raise ValueError(f"no complete rho-cell fits in the box (rho={rho}, L={grid.L})")
    ks = _cell_indices(K, d)
    ncell = ks.shape[0]
    frac = spec.fraction(ks)
    # dyadic level: fine enough for the smallest fraction, coarse enough to stay above h
    need = math.ceil(math.log2(1.0 / max(frac.min(), 1e-300)) / d) + 1
    cap = max(0, int(math.floor(math.log2(rho / grid.h))) - 1)
    level = max(1, min(need, cap, 6)) if cap >= 1 else 0
    per_axis = 2**level
    nsub = per_axis**d
    side = rho / per_axis
    sub_vol = (grid.h / SUBSAMPLES) ** d
    offsets = _subsample_offsets(grid)

    def locate(x):
        cid, valid = _flat_cell(np.rint(x / rho), K)
        local = x - (np.rint(x / rho) * rho - rho / 2.0)
        sj = np.clip(np.floor(local / side).astype(np.int64), 0, per_axis - 1)
        sid = np.zeros(x.shape[0], dtype=np.int64)
        for ax in range(d):
            sid = sid * per_axis + sj[:, ax]
        return cid, sid, valid

    # sub-cell measure seen by the grid points of the same cell
    pcid, pvalid = _point_cells(grid, K, rho)
    pts = grid.points
    sub_measure = np.zeros(ncell * nsub)
    for off in offsets:
        cid, sid, valid = locate(pts + off)
        own = valid & pvalid & (cid == pcid)
        flat = cid[own] * nsub + sid[own]
        sub_measure += np.bincount(flat, minlength=ncell * nsub) * sub_vol
    sub_measure = sub_measure.reshape(ncell, nsub)

    rng = np.random.default_rng(spec.seed)
    chosen = np.zeros((ncell, nsub), dtype=bool)
    required = frac * rho**d
    for c in range(ncell):
        acc = 0.0
        for sub in rng.permutation(nsub):
            if acc >= required[c]:
                break
            chosen[c, sub] = True
            acc += sub_measure[c, sub]

    hits = np.zeros(grid.size)
    for off in offsets:
        cid, sid, valid = locate(pts + off)
        hits += valid & chosen[np.where(valid, cid, 0), sid]
    weights = hits / SUBSAMPLES**d
    measure = np.bincount(pcid[pvalid], weights=weights[pvalid], minlength=ncell) * grid.weight
    # a cell is resolved when one sub-cell spans at least a grid cell
    resolved = np.full(ncell, side >= grid.h)
    unresolved = [] if resolved.all() else [tuple(int(v) for v in k) for k in ks]
    cells = CellTable(ks.astype(int), ks * rho, np.full(ncell, np.nan), measure, required, resolved)
    return SensorMask(weights, grid, spec, cells, unresolved)


def _realize_cone(spec: Cone, grid: Grid) -> SensorMask:
    hits = np.zeros(grid.size)
    for off in _subsample_offsets(grid):
        hits += spec.contains(grid.points + off)
    return SensorMask(hits / SUBSAMPLES**grid.d, grid, spec, None, [])


def realize(spec, grid: Grid) -> SensorMask:
    """Grid mask of ``spec``: each weight is the fraction of the point's
    ``h``-cell covered by the set, estimated from ``3^d`` subsamples."""
    if grid.L < 1.5:
        raise ValueError(f"box half-width {grid.L} < 3/2: unit cells do not fit")
    if isinstance(spec, (EquidistributedDecay, BallUnion)):
        return _realize_balls(spec, grid)
    if isinstance(spec, ThickDecay):
        return _realize_thick(spec, grid)
    if isinstance(spec, Cone):
        return _realize_cone(spec, grid)
    raise TypeError(f"unknown sensor spec {type(spec).__name__}")


@dataclass
class CellReport:
    passed: np.ndarray
    slack: np.ndarray
    tolerance: np.ndarray
    resolved: np.ndarray

    @property
    def all_resolved_pass(self) -> bool:
        return bool(np.all(self.passed[self.resolved]))

    @property
    def failures(self) -> np.ndarray:
        return np.nonzero(~self.passed)[0]


def verify_cells(mask: SensorMask) -> CellReport:
    """Per-cell check that the realized measure reaches the required measure.

    The measure is recomputed from the current point weights.  Ball cells are
    compared with the ball volume up to the subsampling error band
    ``surface(r) sqrt(d) h / 6``; thick cells are compared exactly, since the
    realization adds sub-cells until the realized measure suffices.
    """
    cells = mask.cells
    if cells is None:
        raise ValueError("mask has no cell structure to verify")
    d, h = mask.grid.d, mask.grid.h
    if isinstance(mask.spec, ThickDecay):
        tol = np.zeros(len(cells))
    else:
        surface = 2.0 * np.ones_like(cells.radius) if d == 1 else 2.0 * math.pi * cells.radius
        tol = surface * math.sqrt(d) * h / 6.0
    slack = cell_measures(mask) - cells.required
    passed = slack >= -tol - 1e-14
    return CellReport(passed, slack, tol, cells.resolved)


def cell_measures(mask: SensorMask) -> np.ndarray:
    """Realized measure per cell from the point weights (a point belongs to the
    cell containing it)."""
    cells = mask.cells
    side = mask.spec.rho if isinstance(mask.spec, ThickDecay) else 1.0
    K = int(np.max(np.abs(cells.k))) if len(cells) else 0
    cid, valid = _point_cells(mask.grid, K, side)
    w = mask.weights[valid] * mask.grid.weight
    return np.bincount(cid[valid], weights=w, minlength=len(cells))


def total_measure(mask: SensorMask) -> float:
    return float(np.sum(mask.weights) * mask.grid.weight)


def export_csv(mask: SensorMask, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    cells = mask.cells
    d = mask.grid.d
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"k{i + 1}" for i in range(d)] + ["radius"]
                   + [f"center{i + 1}" for i in range(d)] + ["measure", "required", "resolved"])
        if cells is not None:
            for j in range(len(cells)):
                w.writerow([int(v) for v in cells.k[j]] + [f"{cells.radius[j]:.12e}"]
                           + [f"{v:.12e}" for v in cells.center[j]]
                           + [f"{cells.measure[j]:.12e}", f"{cells.required[j]:.12e}",
                              int(cells.resolved[j])])
    return path


def export_blob(mask: SensorMask, path) -> Path:
    meta = {"grid": mask.grid.descriptor(), "spec": spec_descriptor(mask.spec)}
    return write_blob(path, "sensor_mask", meta,
                      {"weights": mask.weights.reshape(mask.grid.shape)})


def spec_descriptor(spec) -> dict:
    out = {"variant": type(spec).__name__}
    for name in spec.__dataclass_fields__:
        v = getattr(spec, name)
        out[name] = list(v) if isinstance(v, tuple) else v
    return out
