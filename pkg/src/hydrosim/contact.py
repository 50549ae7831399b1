"""Contact force models for compliant (hydroelastic) bodies.

Four models share one interface:

  * ``nh``  -- incremental model with persistent per-point forces. Forces are
    accumulated from in-penetration displacements (normal channel with modulus
    E, tangential with K), projected onto the Coulomb cone every step, and
    reset exactly when a point leaves the body.
  * ``nhs`` -- smoothed variant: the penetration fraction is pinned to 1 and
    every hard in/out gate becomes a sigmoid of the signed distance, which
    makes the whole update differentiable.
  * ``pf``  -- pressure-field baseline: normal force proportional to the
    penetration depth, kinetic friction opposing tangential slip velocity,
    no static friction.
  * ``pff`` -- frictionless pressure field (normal transmission only).

Sign convention: the force-law normal n is the *contact* normal, pointing
from the membrane material into the object (the negative of the object's
outward surface normal). Approach therefore produces positive normal
displacement, and a positive normal force pushes the object out of the
membrane. Forces are stored in the world frame and re-decomposed along the
current contact normal at each update, so rotating objects stay consistent.

The update is vectorized over the sample axis and any leading batch axes and
is written with trailing-axis numpy only, so dual-number tangents propagate
through the smoothed model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SurfaceSamples, sdf_gradient, world_normals
from .se3 import Pose, compose, dot3, inverse, quat_rotate, transform_point, value_of

__all__ = [
    "MaterialParams",
    "ContactGrid",
    "ContactConfig",
    "penetration_fraction",
    "cone_project",
    "pf_force",
    "pff_force",
    "NonholonomicModel",
    "SmoothedModel",
    "PressureFieldModel",
    "get_model",
    "MODEL_NAMES",
]


@dataclass(frozen=True)
class MaterialParams:
    """Compliance moduli: normal E, tangential K [force / (area * depth)],
    friction coefficient mu, and sigmoid sharpness beta [1/m] (smoothed model)."""

    elastic_normal: float
    elastic_tangent: float
    friction: float
    sharpness: float = 300.0

    def __post_init__(self):
        if self.elastic_normal <= 0 or self.elastic_tangent <= 0:
            raise ValueError("elastic moduli must be positive")
        if self.friction < 0:
            raise ValueError("friction coefficient must be nonnegative")
        if self.sharpness <= 0:
            raise ValueError("sigmoid sharpness must be positive")


@dataclass(frozen=True)
class ContactConfig:
    """Shared numerical knobs for the contact models."""

    relative_motion: bool = True  # False reproduces the object-motion-only rate law
    normal_source: str = "object"  # "object" surface normal or hydro "sdf" gradient
    tangent_eps: float = 1e-12  # [N] cone-projection norm guard
    alpha_eps: float = 1e-12  # [m] degenerate penetration-fraction denominator


@dataclass(frozen=True)
class ContactGrid:
    """Per-contact-point persistent state against one hydro body.

    force:   (..., N, 3) world-frame contact force on the object (gated)
    phi:     (..., N)    signed distance at the last update
    p_hydro: (..., N, 3) point positions in the hydro-body frame at the last update
    raw:     (..., N, 3) ungated projected channels the next increment builds on;
             equal to force for the hard and pressure-field models, ungated for
             the smoothed model so its attenuation does not compound step after step
    """

    force: object
    phi: object
    p_hydro: object
    raw: object = None

    def __post_init__(self):
        if self.raw is None:
            object.__setattr__(self, "raw", self.force)


def penetration_fraction(phi_k, phi_k1, eps: float = 1e-12):
    """Fraction of the step's displacement segment spent inside the body.

    Derived from the relu form (relu(-phi_k1) - relu(-phi_k)) / (phi_k - phi_k1),
    clamped to [0, 1]; a vanishing denominator resolves to 1 inside, 0 outside.
    """
    phi_k = np.asarray(phi_k, dtype=float)
    phi_k1 = np.asarray(phi_k1, dtype=float)
    num = np.maximum(-phi_k1, 0.0) - np.maximum(-phi_k, 0.0)
    den = phi_k - phi_k1
    degenerate = np.abs(den) < eps
    alpha = num / np.where(degenerate, 1.0, den)
    alpha = np.where(degenerate, np.where(phi_k <= 0.0, 1.0, 0.0), alpha)
    return np.clip(alpha, 0.0, 1.0)


def cone_project(f, mu: float, eps: float = 1e-12):
    """Project contact-frame forces [fn, ft1, ft2] onto the friction cone."""
    fn = np.maximum(f[..., 0], 0.0)
    ft = f[..., 1:]
    ft_norm = np.maximum(np.sqrt(np.sum(ft * ft, axis=-1)), eps)
    scale = np.minimum(1.0, mu * fn / ft_norm)
    return np.concatenate([fn[..., None], scale[..., None] * ft], axis=-1)


def _sigmoid(x):
    pos = value_of(x) >= 0.0
    ex = np.exp(np.where(pos, -x, x))
    return np.where(pos, 1.0 / (1.0 + ex), ex / (1.0 + ex))


def pf_force(normal, phi, area, v_t, mat: MaterialParams, slip_eps: float = 1e-12):
    """Pressure-field point force: normal from the penetration depth, kinetic
    friction opposing the tangential relative velocity (zero at rest).

    normal (...,3) is the contact normal (into the object), phi [m] the signed
    distance, area [m^2] the sample weight, v_t (...,3) the tangential relative
    velocity of the object point with respect to the compliant body [m/s].
    """
    normal = np.asarray(normal, dtype=float)
    v_t = np.asarray(v_t, dtype=float)
    fn = np.maximum(-mat.elastic_normal * np.asarray(area) * np.asarray(phi), 0.0)
    v_norm = np.sqrt(np.sum(v_t * v_t, axis=-1))
    slip = v_norm > slip_eps
    ft = np.where(
        slip[..., None],
        -mat.friction * fn[..., None] * v_t / np.where(slip, v_norm, 1.0)[..., None],
        0.0,
    )
    return fn[..., None] * normal + ft


def pff_force(normal, phi, area, mat: MaterialParams):
    """Frictionless pressure-field point force: normal transmission only."""
    return pf_force(normal, phi, area, np.zeros(np.shape(np.asarray(normal))), mat)


def contact_normals(samples, obj_pose, shape=None, hydro_pose=None, p_world=None,
                    source: str = "object"):
    """Contact normal pointing from the membrane into the object.

    The default follows the object's surface normals (differentiable). The
    "sdf" alternative uses the hydro body's SDF gradient, which already points
    out of the membrane; it is evaluated on values only.
    """
    if source == "object":
        return -world_normals(samples, obj_pose)
    if p_world is None:
        p_world = value_of(transform_point(obj_pose, samples.points))
    return sdf_gradient(shape, Pose(value_of(hydro_pose.t), value_of(hydro_pose.q)), p_world)


class _ModelBase:
    name = "?"
    smooth = False

    def __init__(self, config: ContactConfig | None = None):
        self.config = config or ContactConfig()

    def init_grid(self, shape, samples: SurfaceSamples, obj_pose: Pose, hydro_pose: Pose) -> ContactGrid:
        p_hydro = transform_point(compose(inverse(hydro_pose), obj_pose), samples.points)
        phi = shape.sdf(p_hydro)
        return ContactGrid(np.zeros(value_of(p_hydro).shape), phi, p_hydro)

    def _kinematics(self, grid, shape, samples, obj_k, obj_k1, hyd_k, hyd_k1):
        """Current/previous point positions in the hydro frame plus signed distances."""
        rel_k1 = compose(inverse(hyd_k1), obj_k1)
        p_h_k1 = transform_point(rel_k1, samples.points)
        phi_k1 = shape.sdf(p_h_k1)
        if self.config.relative_motion:
            p_h_k = grid.p_hydro
        else:
            # literal rate law: only object motion generates displacement
            p_h_k = transform_point(compose(inverse(hyd_k1), obj_k), samples.points)
        return p_h_k, p_h_k1, grid.phi, phi_k1

    def _normals(self, samples, obj_k1, shape, hyd_k1, normals):
        if normals is not None and self.config.normal_source == "object":
            return normals
        return contact_normals(samples, obj_k1, shape, hyd_k1, source=self.config.normal_source)


class NonholonomicModel(_ModelBase):
    """Incremental hard-contact model (persistent forces, exact reset)."""

    name = "nh"
    smooth = False

    def _gate(self, phi_k1, mat):
        return (value_of(phi_k1) <= 0.0).astype(float)

    def _alpha(self, phi_k, phi_k1):
        return penetration_fraction(phi_k, phi_k1, self.config.alpha_eps)

    def update(self, grid: ContactGrid, shape, mat: MaterialParams, samples: SurfaceSamples,
               obj_k: Pose, obj_k1: Pose, hyd_k: Pose, hyd_k1: Pose, h: float,
               normals=None) -> ContactGrid:
        cfg = self.config
        p_h_k, p_h_k1, phi_k, phi_k1 = self._kinematics(grid, shape, samples, obj_k, obj_k1, hyd_k, hyd_k1)

        alpha = self._alpha(phi_k, phi_k1)
        d_world = _rotate_out(hyd_k1, alpha[..., None] * (p_h_k - p_h_k1))
        n = self._normals(samples, obj_k1, shape, hyd_k1, normals)

        d_n = dot3(d_world, n)
        f_prev = grid.raw
        fn_prev = dot3(f_prev, n)
        fn = fn_prev + mat.elastic_normal * samples.areas * d_n
        ft = (f_prev - fn_prev[..., None] * n) + (mat.elastic_tangent * samples.areas)[..., None] * (
            d_world - d_n[..., None] * n
        )

        fn_bar = np.maximum(fn, 0.0)
        ft_norm = np.maximum(np.sqrt(np.sum(ft * ft, axis=-1)), cfg.tangent_eps)
        scale = np.minimum(1.0, mat.friction * fn_bar / ft_norm)
        projected = fn_bar[..., None] * n + scale[..., None] * ft
        gate = self._gate(phi_k1, mat)
        force = gate[..., None] * projected
        return ContactGrid(force, phi_k1, p_h_k1, self._carried(force, projected))

    def _carried(self, force, projected):
        # hard model: the reset force is the state (re-entry starts from zero)
        return force


class SmoothedModel(NonholonomicModel):
    """Smoothed incremental model: alpha pinned to 1, sigmoid in/out gate.

    The ungated projected channels are carried between steps; the sigmoid
    attenuates only the emitted force, so deep-contact behavior tracks the
    hard model without the gate loss compounding over long trajectories.
    """

    name = "nhs"
    smooth = True

    def _gate(self, phi_k1, mat):
        return _sigmoid(-mat.sharpness * phi_k1)

    def _alpha(self, phi_k, phi_k1):
        return np.ones(np.shape(value_of(phi_k1)))

    def _carried(self, force, projected):
        return projected


class PressureFieldModel(_ModelBase):
    """Holonomic baseline: force from current penetration, kinetic friction only."""

    name = "pf"
    smooth = False
    with_friction = True
    slip_eps = 1e-12  # [m/s]

    def update(self, grid, shape, mat, samples, obj_k, obj_k1, hyd_k, hyd_k1, h,
               normals=None):
        p_h_k, p_h_k1, phi_k, phi_k1 = self._kinematics(grid, shape, samples, obj_k, obj_k1, hyd_k, hyd_k1)
        n = self._normals(samples, obj_k1, shape, hyd_k1, normals)

        fn = np.maximum(-mat.elastic_normal * samples.areas * phi_k1, 0.0)
        if self.with_friction:
            v = _rotate_out(hyd_k1, p_h_k1 - p_h_k) / h
            v_t = v - dot3(v, n)[..., None] * n
            v_norm = np.sqrt(np.sum(value_of(v_t) * value_of(v_t), axis=-1))
            slip = v_norm > self.slip_eps
            ft = np.where(
                slip[..., None],
                -mat.friction * fn[..., None] * v_t / np.where(slip, v_norm, 1.0)[..., None],
                0.0,
            )
        else:
            ft = 0.0
        force = fn[..., None] * n + ft
        return ContactGrid(force, phi_k1, p_h_k1)


class PressureFieldFrictionlessModel(PressureFieldModel):
    name = "pff"
    with_friction = False


def _rotate_out(pose: Pose, vec):
    """Rotate hydro-frame vectors (...,N,3) into the world frame."""
    q = pose.q
    if np.ndim(value_of(vec)) > np.ndim(value_of(pose.t)):
        q = q[..., None, :]
    return quat_rotate(q, vec)


MODEL_NAMES = ("nh", "nhs", "pf", "pff")


def get_model(name: str, config: ContactConfig | None = None):
    try:
        cls = {
            "nh": NonholonomicModel,
            "nhs": SmoothedModel,
            "pf": PressureFieldModel,
            "pff": PressureFieldFrictionlessModel,
        }[name]
    except KeyError:
        raise ValueError(f"unknown contact model {name!r}; expected one of {MODEL_NAMES}") from None
    return cls(config)
