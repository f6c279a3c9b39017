"""Fixed on-disk formats: field CSVs, trajectory CSV, JSON summaries.

Floats are written with repr (shortest round-trip form), so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .spectral import ScalarField

__all__ = [
    "write_field_modal_csv",
    "write_field_collocation_csv",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_json",
    "read_json",
]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_field_modal_csv(path: str | Path, f: ScalarField) -> None:
    """One row per mode: k,coeff."""
    lines = ["k,coeff"]
    lines += [f"{k},{_fmt(c)}" for k, c in enumerate(f.coeffs)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_field_collocation_csv(path: str | Path, f: ScalarField) -> None:
    """One row per node: x,value."""
    lines = ["x,value"]
    lines += [f"{_fmt(x)},{_fmt(v)}" for x, v in zip(f.basis.nodes, f.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_trajectory_csv(path: str | Path, record) -> None:
    """Columns: t, xi_norm, h_norm, physical_norm, mean_y, mean_z, w_1..w_N."""
    n_amp = record.control_amplitudes.shape[1] if record.control_amplitudes.size else 0
    header = "t,xi_norm,h_norm,physical_norm,mean_y,mean_z"
    header += "".join(f",w_{j + 1}" for j in range(n_amp))
    lines = [header]
    for i in range(len(record.times)):
        row = [
            _fmt(record.times[i]),
            _fmt(record.xi_norms[i]),
            _fmt(record.h_norms[i]),
            _fmt(record.physical_norms[i]),
            _fmt(record.mean_y[i]),
            _fmt(record.mean_z[i]),
        ]
        if n_amp:
            row += [_fmt(w) for w in record.control_amplitudes[i]]
        lines.append(",".join(row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    text = Path(path).read_text().strip().splitlines()
    names = text[0].split(",")
    data = np.array([[float(v) for v in line.split(",")] for line in text[1:]])
    return {name: data[:, j] for j, name in enumerate(names)}


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def read_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
