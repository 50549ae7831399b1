"""Log and dataset file formats.

Trajectory/episode logs are JSON lines: a schema header line followed by one
self-describing record per line. Records are built with a fixed key order and
plain floats, so identical runs serialize byte-identically.

Wrench datasets are delimited text with a fixed, documented column order
(SI units):

    t  hydro pose (x y z qw qx qy qz)  object pose (x y z qw qx qy qz)
    wrench (fx fy fz tx ty tz)

The wrench is the load on the hydro body (what a wrist-mounted F/T sensor
behind it measures), torque about the hydro body origin. A timestamp that
does not increase starts a new trajectory.
"""

from __future__ import annotations

import json
import os

import numpy as np

SCHEMA = "hydrosim.log"
SCHEMA_VERSION = 1

__all__ = [
    "SCHEMA",
    "SCHEMA_VERSION",
    "LogError",
    "write_log",
    "read_log",
    "episode_records",
    "trajectory_records",
    "write_wrench_dataset",
    "read_wrench_dataset",
    "export_plot_table",
]


class LogError(ValueError):
    pass


def _round_trip(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    return x


def write_log(path, kind: str, meta: dict, records: list) -> None:
    header = {"schema": SCHEMA, "version": SCHEMA_VERSION, "kind": kind}
    header.update({k: _round_trip(v) for k, v in meta.items()})
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for rec in records:
            fh.write(json.dumps({k: _round_trip(v) for k, v in rec.items()}) + "\n")


def read_log(path):
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise LogError(f"{path}: empty log")
    header = json.loads(lines[0])
    if header.get("schema") != SCHEMA:
        raise LogError(f"{path}: not a {SCHEMA} file")
    if header.get("version") != SCHEMA_VERSION:
        raise LogError(f"{path}: unsupported log version {header.get('version')}")
    return header, [json.loads(ln) for ln in lines[1:]]


def episode_records(log) -> list:
    """EpisodeLog -> serializable records, one per step, fixed key order."""
    out = []
    for r in log.records:
        out.append(
            {
                "step": r.index,
                "time": r.time,
                "obj_pose": np.asarray(r.obj_pose),
                "hydro_poses": np.asarray(r.hydro_poses),
                "control": np.asarray(r.control),
                "body_wrench": np.asarray(r.body_wrench),
                "cost": None if np.isnan(r.cost) else float(r.cost),
                "err_mm": r.err_mm,
                "err_rad": r.err_rad,
            }
        )
    return out


def trajectory_records(system, states, controls, h: float) -> list:
    """Rollout states -> serializable records (no goal, so no cost/error)."""
    from .dynamics import aggregate_wrench
    from .se3 import value_of

    out = []
    for k, state in enumerate(states):
        _, reactions = aggregate_wrench(system, state)
        rec = {
            "step": k,
            "time": k * h,
            "obj_pose": np.concatenate([value_of(state.obj_pose.t), value_of(state.obj_pose.q)]),
            "hydro_poses": np.stack(
                [np.concatenate([value_of(p.t), value_of(p.q)]) for p in state.hydro_poses]
            ),
            "control": np.zeros((len(state.hydro_poses), 6))
            if k == 0
            else np.asarray(controls[k - 1]),
            "body_wrench": np.stack([w.as_vector() for w in reactions]),
            "cost": None,
            "err_mm": None,
            "err_rad": None,
        }
        out.append(rec)
    return out


# ---------------------------------------------------------------------
# wrench datasets

N_COLUMNS = 21


def write_wrench_dataset(path, trajectories) -> None:
    """trajectories: iterable of row lists [t, hydro pose(7), object pose(7), wrench(6)]."""
    with open(path, "w") as fh:
        fh.write("# t hx hy hz hqw hqx hqy hqz ox oy oz oqw oqx oqy oqz fx fy fz tx ty tz\n")
        for rows in trajectories:
            for row in rows:
                row = np.asarray(row, dtype=float)
                fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def read_wrench_dataset(path, max_skip_fraction: float = 0.01):
    """Parse a dataset into trajectories; skips malformed rows, fails if too many."""
    rows = []
    skipped = 0
    total = 0
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            total += 1
            parts = line.split()
            if len(parts) != N_COLUMNS:
                skipped += 1
                continue
            try:
                vals = np.array([float(p) for p in parts])
            except ValueError:
                skipped += 1
                continue
            if not np.all(np.isfinite(vals)):
                skipped += 1
                continue
            rows.append(vals)
    if total == 0 or not rows:
        raise LogError(f"{path}: no usable rows")
    if skipped > max_skip_fraction * total:
        raise LogError(f"{path}: {skipped}/{total} malformed rows exceeds {max_skip_fraction:.0%}")
    trajectories = []
    current = []
    last_t = -np.inf
    for row in rows:
        if row[0] <= last_t and current:
            trajectories.append(np.stack(current))
            current = []
        current.append(row)
        last_t = row[0]
    trajectories.append(np.stack(current))
    return trajectories, skipped


# ---------------------------------------------------------------------
# plot-data export

PLOT_COLUMNS = ["step", "time", "err_mm", "err_rad", "cost"]


def export_plot_table(log_path, out_path) -> int:
    """One delimited table per log: error curves, cost and per-body force magnitudes."""
    header, records = read_log(log_path)
    n_bodies = len(records[0]["body_wrench"]) if records else 0
    cols = PLOT_COLUMNS + [f"force_mag_{j}" for j in range(n_bodies)]
    with open(out_path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            mags = [
                repr(float(np.linalg.norm(np.asarray(w)[0:3]))) for w in rec["body_wrench"]
            ]
            vals = [
                str(rec["step"]),
                repr(float(rec["time"])),
                "" if rec["err_mm"] is None else repr(float(rec["err_mm"])),
                "" if rec["err_rad"] is None else repr(float(rec["err_rad"])),
                "" if rec["cost"] is None else repr(float(rec["cost"])),
            ] + mags
            fh.write(",".join(vals) + "\n")
    return len(records)
