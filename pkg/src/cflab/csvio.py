"""CSV artifact writers and readers.

CSV is the only output format; headers are always present and floats are
printed with 17 significant digits so double precision round-trips losslessly
and identical runs produce byte-identical files.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .bernstein import BernsteinField
from .characteristics import CharacteristicFan
from .errors import CsvFormatError, MissingArtifactError
from .kinetic import Trajectory
from .stochastic import EnsembleMoments

TRAJECTORY_HEADER = ["t", "m0", "m1", "m2", "m3", "m4", "m5", "mass_drift", "top_bin_occupancy"]


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def write_rows(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_trajectory_csv(path, traj: Trajectory):
    series = traj.moments
    occupancy = traj.metadata.get("top_bin_occupancy", np.zeros_like(series.times))
    rows = (
        (series.times[i], *series.moments[i], series.mass_drift[i], occupancy[i])
        for i in range(series.times.size)
    )
    write_rows(path, TRAJECTORY_HEADER, rows)


def read_trajectory_csv(path) -> dict:
    """Columns of a trajectory artifact as float arrays, schema-checked."""
    path = Path(path)
    if not path.is_file():
        raise MissingArtifactError(f"trajectory artifact not found: {path}")
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != TRAJECTORY_HEADER:
                raise CsvFormatError(f"unexpected trajectory header in {path}: {header}")
            data = [[float(v) for v in row] for row in reader if row]
    except (ValueError, IndexError) as exc:
        raise CsvFormatError(f"cannot parse trajectory CSV {path}: {exc}") from exc
    if not data:
        raise CsvFormatError(f"trajectory CSV {path} holds no rows")
    arr = np.asarray(data)
    if arr.shape[1] != len(TRAJECTORY_HEADER):
        raise CsvFormatError(f"trajectory CSV {path} has ragged rows")
    return {name: arr[:, i] for i, name in enumerate(TRAJECTORY_HEADER)}


def write_snapshot_csv(path, dist):
    rows = zip(dist.grid.sizes, dist.counts)
    write_rows(path, ["s", "N"], rows)


def write_field_csv(path, field: BernsteinField, residual: np.ndarray | None = None):
    """Long-format field export: one row per (t, x)."""
    rows = []
    for it, t in enumerate(field.times):
        for ix, x in enumerate(field.x):
            g = np.nan if field.g_eps is None else field.g_eps[it, ix]
            r = np.nan if residual is None else residual[it, ix]
            rows.append((x, t, field.F[it, ix], field.Fx[it, ix], field.Fxx[it, ix], g, r))
    write_rows(path, ["x", "t", "F", "Fx", "Fxx", "G_eps", "residual"], rows)


def write_fan_csv(path, fan: CharacteristicFan):
    rows = []
    for it, t in enumerate(fan.times):
        for jp in range(fan.n_paths):
            rows.append(
                (
                    fan.starts[jp],
                    t,
                    fan.x[it, jp],
                    fan.p[it, jp],
                    fan.z[it, jp],
                    not fan.alive[it, jp],
                )
            )
    write_rows(path, ["start_x", "t", "X", "P", "Z", "terminated"], rows)


def write_ensemble_csv(path, ens: EnsembleMoments):
    header = (
        ["t"]
        + [f"m{k}_mean" for k in range(4)]
        + [f"m{k}_stderr" for k in range(4)]
        + ["replicas"]
    )
    rows = (
        (ens.times[i], *ens.mean[i], *ens.stderr[i], ens.replicas)
        for i in range(ens.times.size)
    )
    write_rows(path, header, rows)


def write_verify_csv(path, reports):
    rows = []
    for rep in reports:
        t = rep.location[0] if len(rep.location) > 0 else ""
        where = rep.location[1] if len(rep.location) > 1 else ""
        rows.append((rep.name, rep.status, rep.worst_margin, t, where))
    write_rows(path, ["name", "status", "worst_margin", "t", "x_or_k"], rows)


def write_convergence_csv(path, eps_values, gaps):
    write_rows(path, ["eps", "sup_gap"], zip(eps_values, gaps))
