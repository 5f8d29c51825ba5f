"""File formats: trajectories (JSON lines), parameters, manifests, reports.

Floats are written with Python's shortest round-trip representation, so
reading a file back reproduces every value bit for bit.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable

import numpy as np

from . import params as pm
from .data import Measurement, Trajectory
from .errors import DataError
from .spin_net import LaunchInfo

VERSION = 1
PARAMS_FORMAT = "ttekf-params"
MANIFEST_FORMAT = "ttekf-manifest"
SPLITS = ("train", "validation", "test")


def _floats(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def launch_to_dict(launch: LaunchInfo | None):
    if launch is None:
        return None
    return {
        "phi_f": float(launch.phi_f), "phi_l": float(launch.phi_l),
        "theta_l": float(launch.theta_l), "s_m": [float(s) for s in launch.s_m],
        "after_impact": bool(launch.after_impact),
    }


def launch_from_dict(d) -> LaunchInfo | None:
    if d is None:
        return None
    try:
        return LaunchInfo(float(d["phi_f"]), float(d["phi_l"]), float(d["theta_l"]),
                          tuple(d["s_m"]), bool(d.get("after_impact", False)))
    except (KeyError, TypeError) as exc:
        raise DataError(f"bad launch record: {exc}") from exc


# trajectories ---------------------------------------------------------------

def trajectory_lines(traj: Trajectory) -> Iterable[str]:
    header = {"version": VERSION, "dt": float(traj.dt), "launch": launch_to_dict(traj.launch),
              "impacts": [int(i) for i in traj.impacts]}
    yield json.dumps(header)
    for i, m in enumerate(traj.measurements):
        rec = {"n": int(m.index), "available": bool(m.available),
               "m": _floats(m.position) if m.available else None}
        if traj.truth is not None:
            rec["truth"] = {"z": _floats(traj.truth[i])}
        yield json.dumps(rec)


def write_trajectory(path, traj: Trajectory) -> None:
    with open(path, "w") as fh:
        for line in trajectory_lines(traj):
            fh.write(line + "\n")


def parse_trajectory(lines: Iterable[str], where: str = "<trajectory>") -> Trajectory:
    records = []
    for k, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(f"{where}:{k}: invalid JSON ({exc})") from exc
    if not records:
        raise DataError(f"{where}: empty trajectory file")
    header, samples = records[0], records[1:]
    if header.get("version") != VERSION:
        raise DataError(f"{where}: unsupported or missing version {header.get('version')!r}")
    measurements, truth = [], []
    for rec in samples:
        try:
            n, avail, m = int(rec["n"]), bool(rec["available"]), rec["m"]
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{where}: bad sample record {rec!r}") from exc
        if avail != (m is not None):
            raise DataError(f"{where}: sample {n}: 'm' must be null exactly when unavailable")
        measurements.append(Measurement(n, m, avail))
        if "truth" in rec:
            truth.append(rec["truth"]["z"])
    if truth and len(truth) != len(measurements):
        raise DataError(f"{where}: truth given for some samples only")
    return Trajectory(
        measurements, launch_from_dict(header.get("launch")),
        float(header.get("dt", 1.0 / 180.0)),
        np.array(truth, dtype=float) if truth else None,
        [int(i) for i in header.get("impacts", [])],
    )


def read_trajectory(path) -> Trajectory:
    with open(path) as fh:
        return parse_trajectory(fh, str(path))


# parameters -------------------------------------------------------------------

def params_to_dict(params: pm.ParameterSet) -> dict:
    return {
        "format": PARAMS_FORMAT,
        "version": VERSION,
        "hidden": params.hidden,
        "blocks": {name: _floats(pm._get(params, name)) for name, _ in pm.layout(params.hidden)},
    }


def params_from_dict(d: dict) -> pm.ParameterSet:
    if d.get("format") != PARAMS_FORMAT or d.get("version") != VERSION:
        raise DataError("not a version-1 parameter file")
    hidden = int(d["hidden"])
    blocks = d["blocks"]
    parts = []
    for name, shape in pm.layout(hidden):
        if name not in blocks:
            raise DataError(f"parameter file lacks block {name!r}")
        arr = np.asarray(blocks[name], dtype=float)
        if arr.shape != shape:
            raise DataError(f"block {name!r} has shape {arr.shape}, expected {shape}")
        parts.append(arr.reshape(-1))
    return pm.unflatten(np.concatenate(parts), hidden)


def write_params(path, params: pm.ParameterSet) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh, indent=1)
        fh.write("\n")


def read_params(path) -> pm.ParameterSet:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return params_from_dict(d)


# manifests --------------------------------------------------------------------

def write_manifest(path, entries: dict[str, list[dict]]) -> None:
    """``entries`` maps split name to records with at least a ``file`` key."""
    doc = {"format": MANIFEST_FORMAT, "version": VERSION,
           "splits": {s: entries.get(s, []) for s in SPLITS}}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_manifest(path) -> dict[str, list[dict]]:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if doc.get("format") != MANIFEST_FORMAT or doc.get("version") != VERSION:
        raise DataError(f"{path}: not a version-1 manifest")
    splits = doc.get("splits", {})
    return {s: list(splits.get(s, [])) for s in SPLITS}


def load_split(manifest_path, split: str) -> list[Trajectory]:
    base = Path(manifest_path).parent
    return [read_trajectory(base / e["file"]) for e in read_manifest(manifest_path)[split]]


# reports ----------------------------------------------------------------------

def write_loss_csv(path, losses) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "loss"])
        for i, v in enumerate(losses, 1):
            w.writerow([i, repr(float(v))])


def read_loss_csv(path) -> list[float]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return [float(r[1]) for r in rows[1:]]


def write_gnuplot(path, columns: dict[str, Iterable[float]]) -> None:
    """Whitespace-separated columns with a commented header line."""
    names = list(columns)
    data = [list(columns[n]) for n in names]
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in zip(*data):
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
