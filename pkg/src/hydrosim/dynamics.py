"""Quasi-dynamic integration of a rigid object against compliant bodies.

One step:
  1. apply the commanded pose increments to the hydro bodies (they are
     kinematic: commanded poses, infinite effective inertia);
  2. aggregate the stored contact forces into an object wrench about the CoM;
  3. displace the object by gain * M^{-1} (wrench + gravity), where the gain
     is h^2/epsilon (a single tunable compliance scale);
  4. recompute the contact force grids from the pose pair (k, k+1) with the
     selected contact model.

States are immutable; step and rollout are pure functions of their inputs,
and everything broadcasts over leading batch axes, so many rollouts (and
dual-number tangent blocks) evaluate in one vectorized pass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contact import contact_normals
from .geometry import SurfaceSamples
from .se3 import (
    InertiaParams,
    Pose,
    Twist,
    Wrench,
    apply_twist,
    cross3,
    gravity_wrench,
    point_wrench,
    quat_rotate,
    solve_inertia,
    transform_point,
    value_of,
)

__all__ = ["HydroBody", "System", "SystemState", "QuasiDynParams", "StepFault",
           "aggregate_wrench", "step", "rollout"]


class StepFault(RuntimeError):
    """Numerical fault during integration (NaN or runaway pose change)."""

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


@dataclass(frozen=True)
class HydroBody:
    """A compliant body: SDF shape + material + whether the planner commands it."""

    name: str
    shape: object
    material: MaterialParams
    controlled: bool = True


@dataclass(frozen=True)
class System:
    """Immutable problem definition: object discretization, inertia, hydro bodies."""

    samples: SurfaceSamples
    inertia: InertiaParams
    bodies: tuple

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)


@dataclass(frozen=True)
class SystemState:
    """x_k: object pose, hydro poses, per-body contact grids."""

    obj_pose: Pose
    hydro_poses: tuple
    contacts: tuple

    def net_contact_force(self, j: int):
        return np.sum(value_of(self.contacts[j].force), axis=-2)


@dataclass(frozen=True)
class QuasiDynParams:
    """Step h [s], regularizer epsilon; gain overrides h*h/epsilon when set."""

    h: float = 0.01
    epsilon: float = 1.0
    gain: float | None = None
    max_step_motion: float = 0.5  # [m], divergence guard on the object translation

    def __post_init__(self):
        if self.h <= 0 or self.epsilon <= 0:
            raise ValueError("h and epsilon must be positive")

    @property
    def motion_gain(self) -> float:
        return self.gain if self.gain is not None else self.h * self.h / self.epsilon


def init_state(system: System, obj_pose: Pose, hydro_poses, model) -> SystemState:
    """Fresh state with zero stored forces and contact bookkeeping initialized."""
    hydro_poses = tuple(hydro_poses)
    contacts = tuple(
        model.init_grid(body.shape, system.samples, obj_pose, pose)
        for body, pose in zip(system.bodies, hydro_poses)
    )
    return SystemState(obj_pose, hydro_poses, contacts)


def aggregate_wrench(system: System, state: SystemState):
    """Object wrench about its CoM plus the reaction wrench per hydro body.

    The object wrench sums J^T f over every contact of every body; each hydro
    body gets the equal-and-opposite forces, with torques taken about its own
    origin.
    """
    obj = state.obj_pose
    com_world = obj.t + quat_rotate(obj.q, system.inertia.com)
    origins = transform_point(obj, system.samples.points)

    force_o = 0.0
    torque_o = 0.0
    reactions = []
    for j in range(system.n_bodies):
        f = state.contacts[j].force
        w = point_wrench(origins, com_world[..., None, :], f)
        fj = np.sum(w.force, axis=-2)
        tj = np.sum(w.torque, axis=-2)
        force_o = force_o + fj
        torque_o = torque_o + tj
        hyd_t = state.hydro_poses[j].t
        torque_h = np.sum(cross3(origins - hyd_t[..., None, :], f), axis=-2)
        reactions.append(Wrench(-fj, -torque_h))
    return Wrench(force_o, torque_o), tuple(reactions)


def step(system: System, state: SystemState, u, params: QuasiDynParams, model,
         check: bool = True, step_index=None) -> SystemState:
    """Advance one quasi-dynamic step under hydro-body pose increments u (..., M, 6)."""
    u = u if not isinstance(u, (list, tuple)) else np.stack([t.as_vector() for t in u], axis=-2)

    hydro_k1 = tuple(
        apply_twist(state.hydro_poses[j], Twist.from_vector(u[..., j, :]))
        for j in range(system.n_bodies)
    )

    w_obj, _ = aggregate_wrench(system, state)
    w_grav = gravity_wrench(system.inertia, state.obj_pose)
    accel = solve_inertia(system.inertia, w_obj + w_grav)
    motion = params.motion_gain * accel
    obj_k1 = apply_twist(state.obj_pose, Twist.from_vector(motion))

    normals = contact_normals(system.samples, obj_k1)  # shared across bodies
    contacts_k1 = tuple(
        model.update(
            state.contacts[j], system.bodies[j].shape, system.bodies[j].material,
            system.samples, state.obj_pose, obj_k1, state.hydro_poses[j], hydro_k1[j],
            params.h, normals=normals,
        )
        for j in range(system.n_bodies)
    )
    new = SystemState(obj_k1, hydro_k1, contacts_k1)

    if check:
        lin = value_of(motion[..., 0:3])
        if not np.all(np.isfinite(value_of(obj_k1.t))) or np.any(
            np.sqrt(np.sum(lin * lin, axis=-1)) > params.max_step_motion
        ):
            raise StepFault("object translation diverged or went non-finite", step_index)
        for j, grid in enumerate(contacts_k1):
            if not np.all(np.isfinite(value_of(grid.force))):
                raise StepFault(f"non-finite contact force on body {j}", step_index)
    return new


def rollout(system: System, x0: SystemState, u_seq, params: QuasiDynParams, model,
            check: bool = True):
    """Repeated step; returns the K+1 visited states (x0 first)."""
    states = [x0]
    n = len(u_seq) if isinstance(u_seq, (list, tuple)) else value_of(u_seq).shape[-3]
    x = x0
    for k in range(n):
        uk = u_seq[k] if isinstance(u_seq, (list, tuple)) else u_seq[..., k, :, :]
        try:
            x = step(system, x, uk, params, model, check=check, step_index=k)
        except StepFault as fault:
            fault.step_index = k
            raise
        states.append(x)
    return states
