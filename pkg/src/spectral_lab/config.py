"""JSON experiment configuration: parsing, validation and hashing.

Schema (all blocks optional unless a subcommand needs them)::

    {
      "seed": 0,
      "potential": {"kind": "power", "tau": 2.0, "nu": null, "M_nu": null},
      "grid": {"d": 1, "n": 2000, "L": null},
      "sensor": {"variant": "equidistributed", "delta": 0.2, "alpha": 0.0,
                 "placement": "center", "decay_axes": "all"},
      "scan": {"lambdas": [9, 13, 17], "lambda_max": 60, "T": [0.5, 1, 2],
               "trials": 16, "rho": [0.5, 1, 2], "lambda_trunc": 20},
      "numerics": {"tol": 1e-10, "margin": 2.0, "buffer": 0.2, "n_cap": null,
                   "policy": "shared", "richardson": true},
      "control": {"K": 1.0, "C": 1.0, "D": 1.0, "samples": 50},
      "output": {"dir": "runs"}
    }

Potential kinds: ``power`` (``tau``), ``anisotropic`` (``tau``, ``d1``),
``two_sided`` (``c1``, ``tau1``, ``c2``, ``tau2``, ``sampler`` in
``lower|upper|geometric``).  Sensor variants: ``equidistributed``
(``delta``, ``alpha``, ``placement``, ``decay_axes``), ``thick`` (``rho``,
``gamma``, ``alpha``), ``ball_union`` (``alpha``), ``cone`` (``r0``,
``signs``, ``half_width``, ``direction``).  ``scan.lambdas`` may also be
``{"start": a, "stop": b, "step": c}`` (inclusive).
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import PotentialSpec
from .sensors import BallUnion, Cone, EquidistributedDecay, ThickDecay


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending field."""


DEFAULTS = {
    "seed": 0,
    "numerics": {"tol": 1e-10, "margin": 2.0, "buffer": 0.2, "n_cap": None,
                 "policy": "shared", "richardson": True},
    "control": {"K": 1.0, "C": 1.0, "D": 1.0, "samples": 50},
    "output": {"dir": "runs"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _sampler(name: str, c1, tau1, c2, tau2):
    def lower(pts):
        return c1 * np.linalg.norm(pts, axis=1) ** tau1

    def upper(pts):
        return c2 * np.linalg.norm(pts, axis=1) ** tau2

    def geometric(pts):
        return np.sqrt(lower(pts) * upper(pts))

    table = {"lower": lower, "upper": upper, "geometric": geometric}
    if name not in table:
        raise ConfigError(f"potential.sampler: unknown sampler {name!r} (lower|upper|geometric)")
    return table[name]


def _num(block: dict, key: str, path: str, default=None, positive=False, integer=False):
    v = block.get(key, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}.{key}: must be positive")
    if not math.isfinite(v):
        raise ConfigError(f"{path}.{key}: must be finite")
    return int(v) if integer else float(v)


def _wrap(path: str, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_potential(block: dict) -> PotentialSpec:
    kind = block.get("kind")
    nu = _num(block, "nu", "potential")
    M_nu = _num(block, "M_nu", "potential")
    if kind == "power":
        tau = _num(block, "tau", "potential", positive=True)
        if tau is None:
            raise ConfigError("potential.tau: required")
        return _wrap("potential", PotentialSpec.power_law, tau, nu, M_nu)
    if kind == "anisotropic":
        tau = _num(block, "tau", "potential", positive=True)
        if tau is None:
            raise ConfigError("potential.tau: required")
        d1 = _num(block, "d1", "potential", 1, integer=True)
        return _wrap("potential", PotentialSpec.anisotropic, tau, d1, nu, M_nu)
    if kind == "two_sided":
        vals = {}
        for key in ("c1", "tau1", "c2", "tau2"):
            v = _num(block, key, "potential", positive=True)
            if v is None:
                raise ConfigError(f"potential.{key}: required")
            vals[key] = v
        sampler = _sampler(block.get("sampler", "geometric"), **vals)
        return _wrap("potential", PotentialSpec.two_sided, vals["c1"], vals["tau1"],
                     vals["c2"], vals["tau2"], sampler, nu, M_nu)
    raise ConfigError(f"potential.kind: unknown kind {kind!r} (power|anisotropic|two_sided)")


def build_sensor(block: dict, default_seed: int = 0):
    variant = block.get("variant")
    seed = _num(block, "seed", "sensor", default_seed, integer=True)
    if variant == "equidistributed":
        delta = _num(block, "delta", "sensor")
        if delta is None:
            raise ConfigError("sensor.delta: required")
        axes = block.get("decay_axes", "all")
        return _wrap("sensor", EquidistributedDecay,
                     delta, _num(block, "alpha", "sensor", 0.0), block.get("placement", "center"),
                     seed, axes)
    if variant == "thick":
        return _wrap("sensor", ThickDecay, _num(block, "rho", "sensor", 1.0),
                     _num(block, "gamma", "sensor", 0.5), _num(block, "alpha", "sensor", 0.0), seed)
    if variant == "ball_union":
        return _wrap("sensor", BallUnion, _num(block, "alpha", "sensor", 0.0))
    if variant == "cone":
        return _wrap("sensor", Cone, _num(block, "r0", "sensor", 1.0),
                     tuple(block.get("signs", (-1, 1))),
                     _num(block, "half_width", "sensor", math.pi / 4),
                     _num(block, "direction", "sensor", 0.0))
    raise ConfigError(f"sensor.variant: unknown variant {variant!r} "
                      "(equidistributed|thick|ball_union|cone)")


def lambda_list(scan: dict) -> list[float] | None:
    lams = scan.get("lambdas")
    if lams is None:
        return None
    if isinstance(lams, dict):
        a = _num(lams, "start", "scan.lambdas")
        b = _num(lams, "stop", "scan.lambdas")
        s = _num(lams, "step", "scan.lambdas", positive=True)
        if a is None or b is None or s is None:
            raise ConfigError("scan.lambdas: range needs start, stop and step")
        count = int(math.floor((b - a) / s + 1e-9)) + 1
        lams = [a + j * s for j in range(count)]
    if not isinstance(lams, list) or not all(isinstance(x, (int, float)) for x in lams):
        raise ConfigError("scan.lambdas: expected a list of numbers or a range")
    lams = [float(x) for x in lams]
    if any(x < 1 for x in lams):
        raise ConfigError("scan.lambdas: every lambda must be >= 1")
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ConfigError("scan.lambdas: must be strictly increasing")
    return lams


@dataclass
class ExperimentConfig:
    raw: dict
    potential: PotentialSpec | None
    sensor: object | None
    lambdas: list | None

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    def digest(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()

    def require(self, *names: str):
        for name in names:
            if getattr(self, name, None) is None and name not in self.raw:
                raise ConfigError(f"{name}: block required by this subcommand")


def validate(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed: must be an unsigned 64-bit integer")
    pot = build_potential(cfg["potential"]) if "potential" in cfg else None
    sensor = build_sensor(cfg["sensor"], seed) if "sensor" in cfg else None
    grid = cfg.get("grid", {})
    if grid:
        d = _num(grid, "d", "grid", 1, integer=True)
        if d not in (1, 2):
            raise ConfigError("grid.d: must be 1 or 2")
        n = _num(grid, "n", "grid", None, integer=True)
        if n is not None and n < 3:
            raise ConfigError("grid.n: need at least 3 points per axis")
        _num(grid, "L", "grid", None, positive=True)
        if pot is not None and pot.kind == "anisotropic" and d < 2:
            raise ConfigError("grid.d: the anisotropic potential needs d = 2")
    scan = cfg.get("scan", {})
    lams = lambda_list(scan)
    lmax = _num(scan, "lambda_max", "scan", None)
    if lmax is not None and lmax < 1:
        raise ConfigError("scan.lambda_max: must be >= 1")
    for key in ("T", "rho"):
        vals = scan.get(key)
        if vals is not None:
            if not isinstance(vals, list) or not vals or not all(
                    isinstance(x, (int, float)) and x > 0 for x in vals):
                raise ConfigError(f"scan.{key}: expected a nonempty list of positive numbers")
    _num(scan, "trials", "scan", None, positive=True, integer=True)
    _num(scan, "lambda_trunc", "scan", None, positive=True)
    num = cfg["numerics"]
    _num(num, "tol", "numerics", positive=True)
    if _num(num, "margin", "numerics") < 1:
        raise ConfigError("numerics.margin: must be >= 1")
    if _num(num, "buffer", "numerics") < 0:
        raise ConfigError("numerics.buffer: must be nonnegative")
    _num(num, "n_cap", "numerics", None, positive=True, integer=True)
    if num["policy"] not in ("shared", "per_lambda"):
        raise ConfigError("numerics.policy: must be 'shared' or 'per_lambda'")
    ctl = cfg["control"]
    if _num(ctl, "K", "control") < 1:
        raise ConfigError("control.K: must be >= 1")
    _num(ctl, "C", "control", positive=True)
    _num(ctl, "D", "control", positive=True)
    _num(ctl, "samples", "control", positive=True, integer=True)
    return ExperimentConfig(cfg, pot, sensor, lams)


def load(path, seed: int | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config: file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    if seed is not None and isinstance(raw, dict):
        raw["seed"] = seed
    return validate(raw)
