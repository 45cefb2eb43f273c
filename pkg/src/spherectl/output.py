"""Deterministic CSV/JSON writers.

Floats are written with 17 significant digits (``format(x, '.17g')``), which
round-trips every IEEE double.  Files are written to a temporary name in the
target directory and renamed into place.
"""

import json
import os
import tempfile
from pathlib import Path

import numpy as np

FAILED = "FAILED"


def fmt(value):
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def atomic_write(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_csv(path, header, rows):
    atomic_write(path, csv_text(header, rows))


def _long_rows(nodes, first, second=None):
    # one row per (t, particle)
    K1, N, _ = first.shape
    for k in range(K1):
        for i in range(N):
            row = [nodes[k], i, *first[k, i]]
            if second is not None:
                row.extend(second[k, i])
            yield row


def write_trajectory(path, traj):
    d = traj.x.shape[-1]
    header = ["t", "particle"] + [f"x{j + 1}" for j in range(d)]
    if traj.v is not None:
        header += [f"v{j + 1}" for j in range(d)]
    write_csv(path, header, _long_rows(traj.grid.nodes, traj.x, traj.v))


def write_control(path, grid, u):
    d = u.shape[-1]
    write_csv(path, ["t", "particle"] + [f"u{j + 1}" for j in range(d)], _long_rows(grid.nodes, u))


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not np.isfinite(value):
        # JSON has no inf/nan literals
        return str(value)
    return value


def write_json(path, mapping):
    clean = {k: _jsonable(v) for k, v in mapping.items()}
    atomic_write(path, json.dumps(clean, indent=2, sort_keys=True) + "\n")
