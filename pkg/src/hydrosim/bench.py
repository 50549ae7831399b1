"""Wrench-transmission benchmark: replay recorded pose pairs through a contact
model and score the predicted load on the hydro body against measurements.

The dataset supplies (hydro pose, object pose, measured wrench) streams; the
harness rebuilds the contact state by feeding consecutive pose pairs to the
model exactly as the stepper would, accumulates the net wrench on the hydro
body (force, torque about its origin, the quantity a wrist F/T sensor behind
the mount reports), and reports per-trajectory RMSE over all six wrench
components.
"""

from __future__ import annotations

import numpy as np

from .contact import ContactConfig, get_model
from .se3 import Pose, cross3, transform_point, value_of

__all__ = ["predicted_wrenches", "score_dataset", "hydro_wrench"]


def _pose(row7):
    q = np.asarray(row7[3:7], dtype=float)
    return Pose(np.asarray(row7[0:3], dtype=float), q / np.linalg.norm(q))


def hydro_wrench(samples, grid, obj_pose: Pose, hydro_pose: Pose):
    """Net load on the hydro body from a contact grid (torque about its origin)."""
    origins = value_of(transform_point(obj_pose, samples.points))
    f = value_of(grid.force)
    force = -np.sum(f, axis=-2)
    torque = -np.sum(cross3(origins - value_of(hydro_pose.t), f), axis=-2)
    return np.concatenate([force, torque])


def predicted_wrenches(shape, mat, samples, rows, model, contact_config=None):
    """Replay one trajectory; returns (T-1, 6) predictions for rows 1..T-1."""
    if isinstance(model, str):
        model = get_model(model, contact_config)
    hydro = [_pose(r[1:8]) for r in rows]
    obj = [_pose(r[8:15]) for r in rows]
    grid = model.init_grid(shape, samples, obj[0], hydro[0])
    preds = np.zeros((len(rows) - 1, 6))
    for k in range(1, len(rows)):
        h = max(float(rows[k][0] - rows[k - 1][0]), 1e-9)
        grid = model.update(grid, shape, mat, samples, obj[k - 1], obj[k], hydro[k - 1], hydro[k], h)
        preds[k - 1] = hydro_wrench(samples, grid, obj[k], hydro[k])
    return preds


def score_dataset(shape, mat, samples, trajectories, model_names,
                  contact_config: ContactConfig | None = None):
    """Per-model wrench RMSE over a list of trajectories.

    Returns {model: {"mean": .., "std": .., "per_trajectory": [..]}} where each
    trajectory's RMSE is over its steps and all six wrench components.
    """
    out = {}
    for name in model_names:
        per_traj = []
        for rows in trajectories:
            if len(rows) < 2:
                continue
            preds = predicted_wrenches(shape, mat, samples, rows, name, contact_config)
            meas = np.asarray(rows)[1:, 15:21]
            per_traj.append(float(np.sqrt(np.mean((preds - meas) ** 2))))
        if not per_traj:
            raise ValueError("no trajectory with at least two rows")
        out[name] = {
            "mean": float(np.mean(per_traj)),
            "std": float(np.std(per_traj)),
            "per_trajectory": per_traj,
        }
    return out


def synth_trajectory(shape, mat, samples, obj_pose: Pose, hydro_path, model,
                     h: float = 0.02, contact_config=None):
    """Rows for a scripted hydro-body path over a fixed object, the generating
    model's own wrench predictions as the measured column (closure datasets)."""
    if isinstance(model, str):
        model = get_model(model, contact_config)
    obj7 = np.concatenate([value_of(obj_pose.t), value_of(obj_pose.q)])
    rows = [np.concatenate([[0.0], _pack(hydro_path[0]), obj7, np.zeros(6)])]
    grid = model.init_grid(shape, samples, obj_pose, hydro_path[0])
    for k in range(1, len(hydro_path)):
        grid = model.update(grid, shape, mat, samples, obj_pose, obj_pose,
                            hydro_path[k - 1], hydro_path[k], h)
        w = hydro_wrench(samples, grid, obj_pose, hydro_path[k])
        rows.append(np.concatenate([[k * h], _pack(hydro_path[k]), obj7, w]))
    return np.stack(rows)


def _pack(pose: Pose):
    return np.concatenate([value_of(pose.t), value_of(pose.q)])
