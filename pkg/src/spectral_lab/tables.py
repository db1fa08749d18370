"""CSV tables with a JSON metadata sidecar."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np


def fmt(v) -> str:
    """CSV cell: integers verbatim, reals in scientific notation with 13 digits."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.12e}"


def write_csv(path, header: list[str], rows, meta: dict | None = None) -> Path:
    """Write ``rows`` (sequences or dicts keyed by ``header``) and, when given,
    ``meta`` to ``<path>.meta.json``.  Floats use 13 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            if isinstance(row, dict):
                row = [row.get(h) for h in header]
            w.writerow([fmt(v) for v in row])
    if meta is not None:
        with open(sidecar(path), "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=str)
    return path


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
