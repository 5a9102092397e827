"""File formats: CSV tables at full precision and canonical JSON."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .estimation import EstimationRun
from .nn import MlpParams
from .observer import ObserverMatrices


def fmt(v: float) -> str:
    return format(float(v), ".17g")


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in row] for row in reader if row]
    arr = np.asarray(data, dtype=float).reshape(-1, len(header))
    return header, arr


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # repr-based float output round-trips exactly
    with open(path, "w") as fh:
        json.dump(_clean(obj), fh, indent=1, sort_keys=True, allow_nan=False)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def names(prefix: str, n: int) -> list:
    return [f"{prefix}{i + 1}" for i in range(n)]


# --- trajectories -----------------------------------------------------------


def write_trajectory(path, traj) -> None:
    write_csv(path, ["t"] + names("x", traj.dim), np.column_stack([traj.times, traj.states]))


# --- models -----------------------------------------------------------------


def model_document(net: MlpParams, obs: ObserverMatrices, config: dict, extra: dict | None = None) -> dict:
    doc = net.to_dict()
    doc["observer"] = obs.to_dict()
    doc["config"] = config
    if extra:
        doc.update(extra)
    return doc


def load_model(path):
    doc = read_json(path)
    return MlpParams.from_dict(doc), ObserverMatrices.from_dict(doc["observer"]), doc


# --- estimation runs --------------------------------------------------------


def run_header(n_x: int, n_z: int, n_y: int) -> list:
    y = ["y"] if n_y == 1 else names("y", n_y)
    y_noisy = ["y_noisy"] if n_y == 1 else names("y_noisy", n_y)
    return ["t"] + names("x", n_x) + names("xhat", n_x) + names("z", n_z) + y + y_noisy + names("zref", n_z)


def write_run(path, run: EstimationRun) -> None:
    n_x, n_z, n_y = run.x.shape[1], run.z_hat.shape[1], run.y_clean.shape[1]
    table = np.column_stack([run.times, run.x, run.x_hat, run.z_hat, run.y_clean, run.y_noisy, run.z_ref])
    write_csv(path, run_header(n_x, n_z, n_y), table)


def read_run(path, n_x: int, n_z: int, n_y: int = 1, wbar: float = 0.0, vbar: float | None = None) -> EstimationRun:
    header, a = read_csv(path)
    if header != run_header(n_x, n_z, n_y):
        raise ValueError(f"{path}: unexpected columns {header}")
    c = np.cumsum([0, 1, n_x, n_x, n_z, n_y, n_y, n_z])
    cols = [a[:, c[i] : c[i + 1]] for i in range(len(c) - 1)]
    t, x, xh, z, y, yn, zr = cols
    if vbar is None:
        vbar = float(np.max(np.abs(yn - y)))
    return EstimationRun(t[:, 0], x, xh, z, zr, y, yn, wbar, vbar)
