"""Benchmark manipulation tasks, goal samplers and the simulated plant.

Four tasks, all driven by compliant bodies dragging or squeezing a rigid
object through friction:

  * planar_pushing:  a compliant pad presses down on a box resting on a
    compliant table and drags it in the plane;
  * planar_rotation: the same rig, but the pad twists about the vertical
    axis to spin the box;
  * rolling:         the pad presses on a horizontal cylinder and drags it
    sideways so it rolls on the table;
  * inhand_rotation: two pads squeeze a box from both sides and shear it
    in opposite directions to rotate it in the grasp (no table).

Dimensions and material values are engineering defaults chosen for a stable
quasi-dynamic discretization at desk scale; every number can be overridden
through the run configuration.

The simulated plant advances ground-truth dynamics with one contact model
(the "reality" knob) while the planner may use another; its feedback applies
Gaussian pose noise and then rebuilds the measured contact forces from the
observed poses with the linear compliance law, anchored at first-contact
reference points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .contact import ContactConfig, ContactGrid, MaterialParams, get_model
from .dynamics import HydroBody, QuasiDynParams, System, SystemState, aggregate_wrench, init_state, step
from .geometry import Ellipsoid, HalfSpace, sample_surface, world_normals
from .se3 import (
    InertiaParams,
    Pose,
    pose_errors,
    quat_conj,
    quat_exp,
    quat_from_axis_angle,
    quat_mul,
    quat_normalize,
    quat_rotate,
    transform_point,
    transform_point_inv,
    value_of,
)

__all__ = [
    "GoalPose",
    "Scenario",
    "SCENARIO_NAMES",
    "make_scenario",
    "make_setup",
    "sample_goals",
    "pose_error",
    "task_error",
    "tactile_force_estimate",
    "TactileEstimator",
    "SimulatedPlant",
    "build_plant",
]

SCENARIO_NAMES = ("planar_pushing", "planar_rotation", "rolling", "inhand_rotation")


@dataclass(frozen=True)
class GoalPose:
    pose: Pose
    tol_mm: float = 1.0
    tol_rad: float = 0.02


@dataclass(frozen=True)
class Scenario:
    name: str
    object_spec: tuple
    n_points: int
    inertia: InertiaParams
    obj_pose0: Pose
    bodies: tuple
    body_poses0: tuple  # commanded poses after the approach phase
    approaches: tuple  # (M, 3) world displacement each body travels to reach its pose
    mask: np.ndarray  # (M, 6), 1.0 on free control coordinates
    ctrl_limit: np.ndarray  # (M, 6) symmetric per-step bound [m] / [rad]
    goal_trans_radius: float
    goal_trans_axes: np.ndarray
    goal_rot_range: float
    goal_rot_axis: np.ndarray
    lever_mm: float
    params: QuasiDynParams
    approach_steps: int = 12
    settle_steps: int = 60
    preload: float = 0.0  # [N] per controlled body; approach continues until reached
    preload_step: float = 5e-4  # [m] extra approach increment while below preload
    preload_travel: float = 0.02  # [m] cap on extra approach travel
    cost_kwargs: dict = field(default_factory=dict)
    sample_seed: int = 0

    @property
    def ctrl_low(self):
        return -self.ctrl_limit

    @property
    def ctrl_high(self):
        return self.ctrl_limit


def _box_inertia(mass, half):
    hx, hy, hz = half
    return mass / 3.0 * np.diag([hy * hy + hz * hz, hx * hx + hz * hz, hx * hx + hy * hy])


def _cylinder_inertia(mass, r, h):
    i_axis = 0.5 * mass * r * r
    i_perp = mass * (3 * r * r + h * h) / 12.0
    return np.diag([i_perp, i_perp, i_axis])


_PAD = dict(semi=np.array([0.05, 0.05, 0.03]),
            material=MaterialParams(8.0e4, 8.0e4, 1.0, 400.0))
_TABLE = dict(material=MaterialParams(5.0e4, 6.0e4, 0.12, 400.0))


def _mask(rows):
    m = np.zeros((len(rows), 6))
    for j, coords in enumerate(rows):
        for c in coords:
            m[j, c] = 1.0
    return m


_CLEAR = 2e-3  # [m] initial out-of-contact clearance before the approach


def make_scenario(name: str, n_points: int = 200, squeeze: float = 8e-3, **overrides) -> Scenario:
    """Build one of the named tasks; keyword overrides replace Scenario fields."""
    if name == "planar_pushing":
        half = np.array([0.03, 0.03, 0.015])
        mass = 0.1
        pad_z = 2 * half[2] + _PAD["semi"][2] - squeeze
        sc = Scenario(
            name=name,
            object_spec=("box", half),
            n_points=n_points,
            inertia=InertiaParams(mass, _box_inertia(mass, half)),
            obj_pose0=Pose.from_parts([0.0, 0.0, half[2]]),
            bodies=(
                HydroBody("pad", Ellipsoid(_PAD["semi"]), _PAD["material"], controlled=True),
                HydroBody("table", HalfSpace([0.0, 0.0, 1.0]), _TABLE["material"], controlled=False),
            ),
            body_poses0=(Pose.from_parts([0.0, 0.0, pad_z]), Pose.identity()),
            approaches=(np.array([0.0, 0.0, -(squeeze + _CLEAR)]), np.zeros(3)),
            mask=_mask([(0, 1), ()]),
            ctrl_limit=_mask([(0, 1), ()]) * 1e-3,
            goal_trans_radius=0.008,
            goal_trans_axes=np.array([1.0, 1.0, 0.0]),
            goal_rot_range=0.0,
            goal_rot_axis=np.array([0.0, 0.0, 1.0]),
            lever_mm=0.0,
            params=QuasiDynParams(h=0.02, epsilon=1.0),
            preload=1.0,
            cost_kwargs=dict(stage_pos=2.0, term_pos=300.0, term_rot=0.0, effort=1e-4),
        )
    elif name == "planar_rotation":
        base = make_scenario("planar_pushing", n_points=n_points, squeeze=squeeze)
        lim = _mask([(0, 1, 5), ()]) * 1e-3
        lim[0, 5] = 0.03  # [rad] twist step bound
        sc = replace(
            base,
            name=name,
            mask=_mask([(0, 1, 5), ()]),
            ctrl_limit=lim,
            goal_trans_radius=0.0,
            goal_rot_range=0.2,
            lever_mm=30.0,
            cost_kwargs=dict(stage_rot=2.0, term_pos=100.0, term_rot=300.0, effort=1e-4),
        )
    elif name == "rolling":
        r, length = 0.025, 0.05
        mass = 0.1
        pad_z = 2 * r + _PAD["semi"][2] - squeeze
        sc = Scenario(
            name=name,
            object_spec=("cylinder", r, length),
            n_points=n_points,
            inertia=InertiaParams(mass, _cylinder_inertia(mass, r, length)),
            obj_pose0=Pose.from_parts([0.0, 0.0, r], quat_from_axis_angle([1.0, 0.0, 0.0], 0.5 * math.pi)),
            bodies=(
                HydroBody("pad", Ellipsoid(_PAD["semi"]), _PAD["material"], controlled=True),
                HydroBody("table", HalfSpace([0.0, 0.0, 1.0]), MaterialParams(2.0e5, 8.0e4, 0.4, 400.0), controlled=False),
            ),
            body_poses0=(Pose.from_parts([0.0, 0.0, pad_z]), Pose.identity()),
            approaches=(np.array([0.0, 0.0, -(squeeze + _CLEAR)]), np.zeros(3)),
            mask=_mask([(0,), ()]),
            ctrl_limit=_mask([(0,), ()]) * 1e-3,
            goal_trans_radius=0.005,
            goal_trans_axes=np.array([1.0, 0.0, 0.0]),
            goal_rot_range=0.0,
            goal_rot_axis=np.array([0.0, 1.0, 0.0]),
            lever_mm=0.0,
            params=QuasiDynParams(h=0.02, epsilon=1.5),
            preload=0.5,
            cost_kwargs=dict(stage_pos=2.0, term_pos=300.0, term_rot=0.0, effort=1e-4),
        )
    elif name == "inhand_rotation":
        half = np.array([0.025, 0.025, 0.025])
        mass = 0.05
        semi = np.array([0.03, 0.05, 0.05])
        grip = MaterialParams(6.0e4, 6.0e4, 1.0, 400.0)
        gap = half[0] + semi[0] - squeeze
        center = np.array([0.0, 0.0, 0.2])
        sc = Scenario(
            name=name,
            object_spec=("box", half),
            n_points=n_points,
            inertia=InertiaParams(mass, _box_inertia(mass, half)),
            obj_pose0=Pose.from_parts(center),
            bodies=(
                HydroBody("pad_left", Ellipsoid(semi), grip, controlled=True),
                HydroBody("pad_right", Ellipsoid(semi), grip, controlled=True),
            ),
            body_poses0=(
                Pose.from_parts(center - [gap, 0.0, 0.0]),
                Pose.from_parts(center + [gap, 0.0, 0.0]),
            ),
            approaches=(
                np.array([squeeze + _CLEAR, 0.0, 0.0]),
                np.array([-(squeeze + _CLEAR), 0.0, 0.0]),
            ),
            mask=_mask([(2,), (2,)]),
            ctrl_limit=_mask([(2,), (2,)]) * 8e-4,
            goal_trans_radius=0.0,
            goal_trans_axes=np.array([0.0, 0.0, 0.0]),
            goal_rot_range=0.15,
            goal_rot_axis=np.array([0.0, 1.0, 0.0]),
            lever_mm=25.0,
            params=QuasiDynParams(h=0.02, epsilon=1.6),
            approach_steps=4,
            settle_steps=80,
            preload=0.5,
            cost_kwargs=dict(stage_rot=2.0, term_pos=50.0, term_rot=600.0, effort=1e-4),
        )
    else:
        raise ValueError(f"unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    if overrides:
        sc = replace(sc, **overrides)
    return sc


def _press_along_approach(system, state, scenario):
    """Per-body contact load projected on each approach direction [N]."""
    _, reactions = aggregate_wrench(system, state)
    out = np.zeros(system.n_bodies)
    for j, a in enumerate(scenario.approaches):
        norm = np.linalg.norm(a)
        if norm > 0:
            out[j] = -float(np.dot(value_of(reactions[j].force), a / norm))
    return out


def make_setup(scenario: Scenario, model, contact_config: ContactConfig | None = None):
    """System + settled initial state for a scenario under a given contact model.

    Bodies start out of contact and drive in along their approach vectors so
    the incremental models accumulate a physical preload. When the scenario
    sets a preload target, the approach continues in small increments until
    every approaching body carries at least that contact force (a compliant
    table sinking under the object would otherwise eat the nominal squeeze).
    The system then relaxes under zero controls to a static equilibrium.
    """
    if isinstance(model, str):
        model = get_model(model, contact_config)
    samples = sample_surface(scenario.object_spec, scenario.n_points, seed=scenario.sample_seed)
    system = System(samples, scenario.inertia, scenario.bodies)
    start_poses = [
        Pose(value_of(p.t) - a, value_of(p.q))
        for p, a in zip(scenario.body_poses0, scenario.approaches)
    ]
    x = init_state(system, scenario.obj_pose0, start_poses, model)
    n_app = scenario.approach_steps
    u_app = np.zeros((system.n_bodies, 6))
    dirs = np.zeros((system.n_bodies, 3))
    for j, a in enumerate(scenario.approaches):
        u_app[j, 0:3] = np.asarray(a) / n_app
        norm = np.linalg.norm(a)
        if norm > 0:
            dirs[j] = np.asarray(a) / norm
    for _ in range(n_app):
        x = step(system, x, u_app, scenario.params, model)

    if scenario.preload > 0.0:
        budget = int(round(scenario.preload_travel / scenario.preload_step))
        for _ in range(budget):
            press = _press_along_approach(system, x, scenario)
            short = (press < scenario.preload) & (np.linalg.norm(dirs, axis=-1) > 0)
            if not np.any(short):
                break
            u_extra = np.zeros((system.n_bodies, 6))
            u_extra[short, 0:3] = scenario.preload_step * dirs[short]
            x = step(system, x, u_extra, scenario.params, model)

    zero_u = np.zeros((system.n_bodies, 6))
    for _ in range(scenario.settle_steps):
        x = step(system, x, zero_u, scenario.params, model)
    return system, x


# ---------------------------------------------------------------------
# goals and error metrics


def sample_goals(scenario: Scenario, n: int, seed: int, x0: SystemState | None = None):
    """n uniformly sampled goal poses inside the scenario's bounds, around the
    settled initial pose when given (else around the nominal placement)."""
    rng = np.random.default_rng(seed)
    base = x0.obj_pose if x0 is not None else scenario.obj_pose0
    goals = []
    for _ in range(n):
        d = rng.uniform(-1.0, 1.0, 3) * scenario.goal_trans_radius * scenario.goal_trans_axes
        ang = rng.uniform(-1.0, 1.0) * scenario.goal_rot_range
        q = quat_normalize(quat_mul(quat_from_axis_angle(scenario.goal_rot_axis, ang), value_of(base.q)))
        goals.append(GoalPose(Pose(value_of(base.t) + d, q)))
    return goals


def pose_error(p: Pose, goal: GoalPose):
    """(translation error [mm], rotation error [rad]) against a goal."""
    return pose_errors(p, goal.pose)


def task_error(scenario: Scenario, p: Pose, goal: GoalPose) -> float:
    """Single [mm] tracking error: translation plus rotation scaled by the
    scenario's lever arm (rotation tasks report boundary-point motion)."""
    mm, rad = pose_error(p, goal)
    return float(mm + rad * scenario.lever_mm)


# ---------------------------------------------------------------------
# tactile force estimation


def tactile_force_estimate(shape, mat: MaterialParams, samples, obj_pose: Pose,
                           hydro_pose: Pose, anchors=None, active=None):
    """Contact forces recovered from observed poses via the linear compliance law.

    Normal deformation is the penetration depth along the contact normal;
    tangential deformation is the drag from a first-contact anchor point
    (reset when contact breaks). A real membrane cannot hold shear beyond the
    friction cone, so when the linear law exceeds it the anchor slips along
    the cone boundary (the virtual reference point translating); within the
    cone the estimate is the exact linear law. Returns (forces, anchors, active).
    """
    p_w = value_of(transform_point(obj_pose, samples.points))
    p_h = value_of(transform_point_inv(hydro_pose, p_w))
    phi = value_of(shape.sdf(p_h))
    in_contact = phi < 0.0
    if anchors is None:
        anchors = p_h.copy()
        active = np.zeros(phi.shape, dtype=bool)
    newly = in_contact & ~active
    anchors = np.where(newly[..., None], p_h, anchors)
    active = in_contact.copy()

    n = -value_of(world_normals(samples, obj_pose))
    d_n = np.maximum(-phi, 0.0)
    q = value_of(hydro_pose.q)
    qq = q[..., None, :] if p_h.ndim > 1 else q
    drag = quat_rotate(qq, anchors - p_h)
    drag_n = np.sum(drag * n, axis=-1)[..., None] * n
    d_t = drag - drag_n

    ka = mat.elastic_tangent * samples.areas
    f_n = mat.elastic_normal * samples.areas * d_n
    ft_norm = np.maximum(ka * np.linalg.norm(d_t, axis=-1), 1e-12)
    slip = np.minimum(1.0, mat.friction * f_n / ft_norm)
    d_t = slip[..., None] * d_t
    # the anchor follows the slip so the stored reference stays on the cone
    slipped = in_contact & (slip < 1.0)
    anchors = np.where(
        slipped[..., None],
        p_h + quat_rotate(quat_conj(qq), drag_n + d_t),
        anchors,
    )

    f = f_n[..., None] * n + ka[..., None] * d_t
    f = np.where(in_contact[..., None], f, 0.0)
    return f, anchors, active


class TactileEstimator:
    """Per-body anchor bookkeeping around tactile_force_estimate."""

    def __init__(self, system: System):
        self.system = system
        self.anchors = [None] * system.n_bodies
        self.active = [None] * system.n_bodies

    def measure_grids(self, obj_pose: Pose, hydro_poses):
        grids = []
        for j, body in enumerate(self.system.bodies):
            f, anchors, active = tactile_force_estimate(
                body.shape, body.material, self.system.samples, obj_pose, hydro_poses[j],
                self.anchors[j], self.active[j],
            )
            self.anchors[j], self.active[j] = anchors, active
            p_w = value_of(transform_point(obj_pose, self.system.samples.points))
            p_h = value_of(transform_point_inv(hydro_poses[j], p_w))
            grids.append(ContactGrid(f, value_of(body.shape.sdf(p_h)), p_h))
        return tuple(grids)


# ---------------------------------------------------------------------
# simulated plant


class SimulatedPlant:
    """Ground-truth dynamics plus noisy, tactile-informed state feedback.

    apply(u) advances the true state with the plant's own contact model.
    measure() perturbs the object pose with Gaussian noise, recomputes the
    contact grids from the observed poses with the compliance law, and
    returns that as the planner's state.
    """

    def __init__(self, system: System, x0: SystemState, model, params: QuasiDynParams,
                 noise_pos: float = 0.0, noise_rot: float = 0.0, seed: int = 0,
                 estimate_forces: bool = True, estimator_system: System | None = None):
        self.system = system
        self.model = model
        self.params = params
        self.true_state = x0
        self.noise_pos = noise_pos
        self.noise_rot = noise_rot
        self.estimate_forces = estimate_forces
        self.rng = np.random.default_rng(seed)
        # force recovery runs on the controller side: it may carry nominal
        # material constants that differ from the (true) plant materials
        self.estimator = TactileEstimator(estimator_system or system)

    def apply(self, u) -> SystemState:
        full = np.zeros((self.system.n_bodies, 6))
        u = np.asarray(u, dtype=float)
        full[: u.shape[0]] = u.reshape(-1, 6)[: self.system.n_bodies]
        self.true_state = step(self.system, self.true_state, full, self.params, self.model)
        return self.true_state

    def measure(self) -> SystemState:
        state = self.true_state
        obj = state.obj_pose
        if self.noise_pos > 0.0 or self.noise_rot > 0.0:
            t = value_of(obj.t) + self.noise_pos * self.rng.standard_normal(3)
            dq = quat_exp(self.noise_rot * self.rng.standard_normal(3))
            obj = Pose(t, quat_normalize(quat_mul(dq, value_of(obj.q))))
        if not self.estimate_forces and obj is state.obj_pose:
            return state
        grids = self.estimator.measure_grids(obj, state.hydro_poses)
        if not self.estimate_forces:
            grids = state.contacts
        return SystemState(obj, state.hydro_poses, grids)

    def net_wrenches(self):
        return aggregate_wrench(self.system, self.true_state)


def build_plant(scenario: Scenario, model="nh", noise: float = 0.0, noise_rot: float = 0.0,
                seed: int = 0, contact_config: ContactConfig | None = None,
                estimate_forces: bool = True, estimator_system: System | None = None) -> SimulatedPlant:
    """Simulated stand-in for the robot: true dynamics under `model`, feedback
    with pose noise `noise` [m] / `noise_rot` [rad] and tactile force estimation."""
    if isinstance(model, str):
        model = get_model(model, contact_config)
    system, x0 = make_setup(scenario, model)
    return SimulatedPlant(system, x0, model, scenario.params, noise, noise_rot, seed,
                          estimate_forces, estimator_system)
