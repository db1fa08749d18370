"""Command-line experiment runner.

Every subcommand reads one JSON config (see :mod:`spectral_lab.config`) and
writes CSV tables with ``.meta.json`` sidecars into ``<out>/<hash prefix>/``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, load
from .control import estimate_cobs, min_norm_control
from .decay import check_prop34, check_prop35, localization_scan
from .ghost import extend, geometry_constants, h1_sandwich, t_grid, verify_identities
from .model import (
    ANISOTROPIC,
    POWER,
    Eigensystem,
    Grid,
    PotentialSpec,
    assemble,
    localization_halfwidth,
)
from .sensors import EquidistributedDecay, export_blob, export_csv, realize, total_measure, verify_cells
from .specineq import build_eigensystem, exponent_report, ratio_scan
from .tables import read_csv, sidecar, write_csv

log = logging.getLogger("spectral_lab")

SUBCOMMANDS = ("spectrum", "decay", "sensors", "ratio-scan", "ghost-check", "observability", "report")


class RunContext:
    def __init__(self, cfg: ExperimentConfig, out: Path, command: str, jobs: int):
        self.cfg = cfg
        self.command = command
        self.jobs = max(1, jobs)
        self.dir = out / cfg.digest()[:12]
        self.dir.mkdir(parents=True, exist_ok=True)

    def meta(self, **extra) -> dict:
        return {
            "config_hash": self.cfg.digest(),
            "config": self.cfg.raw,
            "seed": self.cfg.seed,
            "command": self.command,
            "versions": {"spectral_lab": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": sys.version.split()[0]},
            "created": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            **extra,
        }

    def table(self, name: str, header, rows, **extra) -> Path:
        path = write_csv(self.dir / name, header, rows, self.meta(**extra))
        print(path)
        return path

    def json(self, name: str, payload: dict) -> Path:
        path = self.dir / name
        path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")
        print(path)
        return path

    def pmap(self, fn, items):
        if self.jobs == 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(self.jobs) as pool:
            return list(pool.map(fn, items))


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _need(value, field: str):
    if value is None:
        raise ConfigError(f"{field}: required by this subcommand")
    return value


def _lambda_max(cfg: ExperimentConfig) -> float:
    scan = cfg.section("scan")
    if scan.get("lambda_max") is not None:
        return float(scan["lambda_max"])
    if cfg.lambdas:
        return cfg.lambdas[-1]
    raise ConfigError("scan.lambda_max: required by this subcommand")


def _grid(cfg: ExperimentConfig, lam_max: float) -> Grid:
    g = cfg.section("grid")
    d = int(g.get("d", 1))
    p = cfg.potential
    L = g.get("L") or localization_halfwidth(lam_max, p, cfg.section("numerics")["margin"])
    n = int(g.get("n") or min(4000 if d == 1 else 300, math.ceil(2 * L / (0.1 / math.sqrt(lam_max)))))
    return Grid(d, float(L), n)


def _eigensystem(ctx: RunContext, grid: Grid, lam_max: float) -> Eigensystem:
    """Eigensystem with an on-disk cache keyed by grid, potential and range."""
    cfg = ctx.cfg
    p = _need(cfg.potential, "potential")
    num = cfg.section("numerics")
    key = json.dumps({"grid": grid.descriptor(), "p": p.descriptor(), "lam": lam_max,
                      "buffer": num["buffer"]}, sort_keys=True)
    cache = ctx.dir.parent / "cache" / (hashlib.sha256(key.encode()).hexdigest()[:16] + ".splb")
    if cache.exists() and not (grid.d == 2 and p.kind == ANISOTROPIC):
        return Eigensystem.load(cache, potential=p)
    sys_ = build_eigensystem(p, grid, lam_max, num["buffer"], cfg.seed)
    if sys_.factors is None:
        sys_.save(cache)
    return sys_


def _analytic(p: PotentialSpec, grid: Grid, count: int) -> np.ndarray:
    out = np.full(count, np.nan)
    if p.kind == POWER and p.tau1 == 2.0 and grid.d == 1:
        out[:] = 2 * np.arange(count) + 1
    elif p.kind == ANISOTROPIC and p.tau1 == 2.0 and grid.d == 2:
        # harmonic levels plus free Dirichlet levels of the box
        a = 2 * np.arange(count) + 1.0
        b = (np.arange(1, count + 1) * math.pi / (2 * grid.L)) ** 2
        out[:] = np.sort((a[:, None] + b[None, :]).ravel())[:count]
    return out


def cmd_spectrum(ctx: RunContext):
    lam_max = _lambda_max(ctx.cfg)
    grid = _grid(ctx.cfg, lam_max)
    sys_ = _eigensystem(ctx, grid, lam_max)
    m = sys_.count(lam_max)
    exact = _analytic(ctx.cfg.potential, grid, m)
    rows = []
    for k in range(m):
        lam = float(sys_.eigenvalues[k])
        rel = abs(lam - exact[k]) / exact[k] if np.isfinite(exact[k]) else None
        rows.append([k, lam, None if np.isnan(exact[k]) else float(exact[k]), rel])
    ctx.table("spectrum.csv", ["k", "lambda", "analytic", "rel_err"], rows, grid=grid.descriptor())


def cmd_decay(ctx: RunContext):
    cfg = ctx.cfg
    lam_max = _lambda_max(cfg)
    grid = _grid(cfg, lam_max)
    sys_ = _eigensystem(ctx, grid, lam_max)
    p = cfg.potential
    rows = []
    for k in range(sys_.count(lam_max)):
        lam, f = sys_.pair(k)
        r34 = check_prop34(lam, f, grid, p)
        r35 = check_prop35(lam, f, grid, p)
        rows.append([k, lam, r34.ratio, r34.R, r35.ratio, r35.R, r35.nu, r35.M_nu])
    ctx.table("decay.csv", ["k", "lambda", "prop34_ratio", "prop34_R", "prop35_ratio",
                            "prop35_R", "nu", "M_nu"], rows, grid=grid.descriptor(),
              growth_note=check_prop35(*sys_.pair(0), grid, p).note)
    lams = cfg.lambdas or [lam_max]
    trials = int(cfg.section("scan").get("trials", 16))
    curve = localization_scan(sys_, lams, trials=trials, seed=cfg.seed)
    cols = ["lambda", "subspace_dim", "r_star", "fitted_e", "seed"]
    ctx.table("localization.csv", cols, [[row[c] for c in cols] for row in curve.rows()], effective_constant=curve.effective_constant,
              theory_exponent=curve.theory_exponent, skipped=curve.skipped)


def cmd_sensors(ctx: RunContext):
    cfg = ctx.cfg
    spec = _need(cfg.sensor, "sensor")
    g = cfg.section("grid")
    d = int(g.get("d", 1))
    L = float(_need(g.get("L"), "grid.L"))
    n = int(_need(g.get("n"), "grid.n"))
    grid = Grid(d, L, n)
    mask = realize(spec, grid)
    path = export_csv(mask, ctx.dir / "sensor_cells.csv")
    sidecar(path).write_text(json.dumps(ctx.meta(total_measure=total_measure(mask)),
                                        indent=2, sort_keys=True, default=_jsonable))
    print(path)
    blob = export_blob(mask, ctx.dir / "sensor_mask.splb")
    print(blob)
    if mask.cells is not None:
        rep = verify_cells(mask)
        ctx.json("sensor_check.json", {
            "total_measure": total_measure(mask),
            "cells": len(mask.cells),
            "unresolved": len(mask.unresolved),
            "failures": rep.failures.tolist(),
            "all_resolved_pass": rep.all_resolved_pass,
        })


def cmd_ratio_scan(ctx: RunContext):
    cfg = ctx.cfg
    p = _need(cfg.potential, "potential")
    spec = _need(cfg.sensor, "sensor")
    lams = _need(cfg.lambdas, "scan.lambdas")
    num = cfg.section("numerics")
    d = int(cfg.section("grid").get("d", 1))
    curve = ratio_scan(p, spec, lams, d=d, policy=num["policy"], margin=num["margin"],
                       buffer=num["buffer"], n_cap=num.get("n_cap"),
                       richardson=bool(num["richardson"]), seed=cfg.seed)
    ctx.table("ratio_scan.csv", curve.header, list(curve.rows()), grids=curve.grids)
    ctx.json("ratio_report.json", exponent_report(curve))
    print(f"s_hat = {curve.s_hat}")


def cmd_ghost_check(ctx: RunContext):
    cfg = ctx.cfg
    lam_max = _lambda_max(cfg)
    grid = _grid(cfg, lam_max)
    sys_ = _eigensystem(ctx, grid, lam_max)
    sub = sys_.subspace(lam_max)
    rhos = cfg.section("scan").get("rho", [0.5, 1.0, 2.0])
    rng = np.random.default_rng(cfg.seed)
    coeffs = rng.standard_normal(sub.m)
    ham = assemble(grid, cfg.potential)

    def one(rho):
        field = extend(sub, coeffs, rho, t_grid(rho))
        ids = verify_identities(field, ham)
        sw = h1_sandwich(field, rho, lam_max)
        return [float(rho), sub.m, ids.r1, ids.r2, ids.odd, sw.lower_slack, sw.upper_slack]

    rows = ctx.pmap(one, rhos)
    ctx.table("ghost.csv", ["rho", "m", "r1", "r2", "odd", "lower_slack", "upper_slack"], rows)
    spec = cfg.sensor
    delta = spec.delta if isinstance(spec, EquidistributedDecay) else 0.25
    alpha = float(getattr(spec, "alpha", 0.0))
    c_eff = localization_scan(sys_, [lam_max], seed=cfg.seed).effective_constant
    geo = geometry_constants(lam_max, cfg.potential, delta, alpha, c_eff, grid.d)
    ctx.json("geometry.json", {**geo.__dict__, "c_eff": c_eff, "lambda": lam_max, "delta": delta,
                               "alpha": alpha, "note": "kappa proxy uses an unspecified c_d"})


def cmd_observability(ctx: RunContext):
    cfg = ctx.cfg
    spec = _need(cfg.sensor, "sensor")
    scan = cfg.section("scan")
    lam = float(_need(scan.get("lambda_trunc"), "scan.lambda_trunc"))
    Ts = sorted(float(t) for t in _need(scan.get("T"), "scan.T"))
    grid = _grid(cfg, lam)
    sys_ = _eigensystem(ctx, grid, lam)
    mask = realize(spec, grid)
    ctl = cfg.section("control")
    delta = getattr(spec, "delta", None)
    alpha = float(getattr(spec, "alpha", 0.0))

    def one(T):
        return estimate_cobs(sys_, mask, T, lam, delta=delta, alpha=alpha,
                             K=ctl["K"], C=ctl["C"], D=ctl["D"])

    ests = ctx.pmap(one, Ts)
    cobs = np.array([e.cobs for e in ests])
    slope = None
    if len(Ts) >= 2 and np.all(cobs > 0):
        k = max(2, len(Ts) // 2)
        slope = float(np.polyfit(np.log(Ts[-k:]), np.log(cobs[-k:]), 1)[0])
    rows = [[e.T, e.m, e.cobs, e.bound, e.pure_power_bound, None] for e in ests]
    rows.append(["slope", None, None, None, None, slope])
    ctx.table("observability.csv", ["T", "m", "cobs_num", "cobs_bound", "pure_power_bound", "slope"],
              rows, note=ests[0].note, K=ctl["K"], C=ctl["C"], D=ctl["D"], truncation=lam,
              columns="cobs_bound and pure_power_bound bound cobs_num squared")
    rng = np.random.default_rng(cfg.seed)
    T = Ts[0]
    worst, final = 0.0, 0.0
    for _ in range(int(ctl["samples"])):
        res = min_norm_control(sys_, mask, T, lam, rng.standard_normal(ests[0].m))
        worst = max(worst, res.cost / res.initial_norm)
        final = max(final, float(np.linalg.norm(res.final_state)) / res.initial_norm)
    ctx.json("control_check.json", {"T": T, "cobs": ests[0].cobs, "max_cost_ratio": worst,
                                    "max_final_ratio": final, "truncation": lam})


def cmd_report(ctx: RunContext):
    """Collect every CSV of previous runs under the output root into one JSON summary."""
    root = ctx.dir.parent
    summary = {"runs": {}}
    for csv_path in sorted(root.glob("*/*.csv")):
        run = csv_path.parent.name
        entry = summary["runs"].setdefault(run, {})
        rows = read_csv(csv_path)
        entry[csv_path.stem] = rows
        rep = csv_path.parent / "ratio_report.json"
        if csv_path.stem == "ratio_scan" and rep.exists():
            entry["exponent_table"] = json.loads(rep.read_text())
    ctx.json("report.json", summary)


COMMANDS = {
    "spectrum": cmd_spectrum,
    "decay": cmd_decay,
    "sensors": cmd_sensors,
    "ratio-scan": cmd_ratio_scan,
    "ghost-check": cmd_ghost_check,
    "observability": cmd_observability,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spectral-lab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON experiment config")
        sp.add_argument("--out", default=None, help="output root (default: config output.dir)")
        sp.add_argument("--jobs", type=int, default=1, help="worker threads for scans")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed: must be an unsigned 64-bit integer")
        if args.jobs < 1:
            raise ConfigError("--jobs: must be >= 1")
        cfg = load(args.config, args.seed)
        out = Path(args.out or cfg.section("output").get("dir", "runs"))
        ctx = RunContext(cfg, out, args.command, args.jobs)
        COMMANDS[args.command](ctx)
    except ConfigError as exc:
        print(f"spectral-lab: invalid config: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report with command context
        print(f"spectral-lab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
