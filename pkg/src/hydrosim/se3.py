"""Rigid-body pose algebra, wrenches and generalized inertia.

Conventions, fixed repo-wide:
  * quaternions are scalar-first ``[w, x, y, z]`` unit quaternions and are
    renormalized after every composition;
  * a twist is a 6-vector ``[linear(3), angular(3)]``; applying it adds the
    linear part to the translation and left-multiplies the orientation by
    the exponential of the angular part (world-frame increment);
  * wrenches are world-frame ``[force(3), torque(3)]`` about a stated
    reference point (the dynamics uses the object's center of mass, which
    keeps the generalized inertia block-diagonal).

All functions broadcast over leading axes and only touch trailing axes, so
they accept plain arrays and :class:`hydrosim.dual.Dual` blocks alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

QUAT_TOL = 1e-9


class ConfigurationError(ValueError):
    """Invalid physical configuration (bad inertia, malformed pose, ...)."""


# ---------------------------------------------------------------------
# small vector helpers (trailing-axis only, Dual-safe)


def dot3(a, b):
    return np.sum(a * b, axis=-1)


def norm3(a):
    return np.sqrt(np.sum(a * a, axis=-1))


def cross3(a, b):
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack(
        [ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1
    )


def mat3_apply(m, v):
    """m @ v for a 3x3 matrix and trailing-axis vectors."""
    return np.sum(m * v[..., None, :], axis=-1)


# ---------------------------------------------------------------------
# quaternions


def quat_normalize(q):
    n = np.sqrt(np.sum(q * q, axis=-1))
    return q / n[..., None]


def quat_mul(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q):
    return np.stack([q[..., 0], -q[..., 1], -q[..., 2], -q[..., 3]], axis=-1)


def quat_rotate(q, v):
    """Rotate vectors v by unit quaternion q: v + 2w(u x v) + 2 u x (u x v)."""
    u = q[..., 1:]
    w = q[..., 0:1]
    uv = cross3(u, v)
    return v + 2.0 * (w * uv + cross3(u, uv))


def quat_rotate_inv(q, v):
    return quat_rotate(quat_conj(q), v)


_EXP_EPS2 = 1e-16


def quat_exp(rotvec):
    """Unit quaternion exp([0, rotvec/2]); Taylor branch near zero keeps it smooth."""
    s = np.sum(rotvec * rotvec, axis=-1)
    use_series = value_of(s) < _EXP_EPS2
    theta = np.sqrt(np.where(use_series, 1.0, s))  # dummy 1.0 avoids sqrt'(0)
    w = np.where(use_series, 1.0 - s / 8.0, np.cos(0.5 * theta))
    coef = np.where(use_series, 0.5 - s / 48.0, np.sin(0.5 * theta) / theta)
    return np.concatenate([w[..., None], coef[..., None] * rotvec], axis=-1)


def quat_angle(a, b):
    """Geodesic angle [rad] between two unit quaternions."""
    d = np.abs(np.sum(value_of(a) * value_of(b), axis=-1))
    return 2.0 * np.arccos(np.clip(d, -1.0, 1.0))


def quat_to_matrix(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1),
        ],
        axis=-2,
    )


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis])


def value_of(x):
    """Plain-array view of x (strips a Dual wrapper)."""
    from .dual import value

    return value(x)


# ---------------------------------------------------------------------
# pose / twist / wrench


@dataclass(frozen=True)
class Pose:
    """Rigid transform: translation (...,3) [m] and unit quaternion (...,4)."""

    t: object
    q: object

    @staticmethod
    def identity(batch=()):
        t = np.zeros(batch + (3,))
        q = np.zeros(batch + (4,))
        q[..., 0] = 1.0
        return Pose(t, q)

    @staticmethod
    def from_parts(t, q=None):
        t = np.asarray(t, dtype=float)
        if q is None:
            q = np.concatenate([np.ones(t.shape[:-1] + (1,)), np.zeros(t.shape[:-1] + (3,))], axis=-1)
        q = np.asarray(q, dtype=float)
        return Pose(t, q / np.linalg.norm(q, axis=-1, keepdims=True))


@dataclass(frozen=True)
class Twist:
    """Pose increment: linear (...,3) [m] and angular rotation vector (...,3) [rad]."""

    linear: object
    angular: object

    @staticmethod
    def zero(batch=()):
        return Twist(np.zeros(batch + (3,)), np.zeros(batch + (3,)))

    @staticmethod
    def from_vector(v):
        return Twist(v[..., 0:3], v[..., 3:6])

    def as_vector(self):
        return np.concatenate([self.linear, self.angular], axis=-1)


@dataclass(frozen=True)
class Wrench:
    """World-frame force (...,3) [N] and torque (...,3) [N*m] about a reference point."""

    force: object
    torque: object

    @staticmethod
    def zero(batch=()):
        return Wrench(np.zeros(batch + (3,)), np.zeros(batch + (3,)))

    def __add__(self, other):
        return Wrench(self.force + other.force, self.torque + other.torque)

    def __neg__(self):
        return Wrench(-self.force, -self.torque)

    def as_vector(self):
        return np.concatenate([self.force, self.torque], axis=-1)


@dataclass(frozen=True)
class InertiaParams:
    """Mass [kg], rotational inertia [kg*m^2] about the CoM, gravity [m/s^2],
    CoM offset from the body origin [m]."""

    mass: float
    rotational: np.ndarray
    gravity: np.ndarray
    com: np.ndarray

    def __init__(self, mass, rotational, gravity=(0.0, 0.0, -9.81), com=(0.0, 0.0, 0.0)):
        if mass <= 0.0:
            raise ConfigurationError(f"mass must be positive, got {mass}")
        rotational = np.asarray(rotational, dtype=float)
        if rotational.shape == (3,):
            rotational = np.diag(rotational)
        if rotational.shape != (3, 3):
            raise ConfigurationError("rotational inertia must be 3x3")
        if not np.allclose(rotational, rotational.T, atol=1e-12):
            raise ConfigurationError("rotational inertia must be symmetric")
        try:
            np.linalg.cholesky(rotational)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("rotational inertia must be positive definite") from exc
        object.__setattr__(self, "mass", float(mass))
        object.__setattr__(self, "rotational", rotational)
        object.__setattr__(self, "gravity", np.asarray(gravity, dtype=float))
        object.__setattr__(self, "com", np.asarray(com, dtype=float))
        object.__setattr__(self, "_rot_inv", np.linalg.inv(rotational))


# ---------------------------------------------------------------------
# operations


def compose(a: Pose, b: Pose) -> Pose:
    """Group composition a*b; orientation renormalized."""
    return Pose(a.t + quat_rotate(a.q, b.t), quat_normalize(quat_mul(a.q, b.q)))


def inverse(p: Pose) -> Pose:
    qc = quat_conj(p.q)
    return Pose(-quat_rotate(qc, p.t), qc)


def transform_point(p: Pose, x):
    """Map points from the pose's frame to the world frame.

    x is (N, 3) or batched (..., N, 3); a bare (3,) single point is accepted.
    Pose batch axes broadcast against the leading axes of x.
    """
    single = np.ndim(value_of(x)) == 1
    if single:
        x = x[None, :]
    out = quat_rotate(p.q[..., None, :], x) + p.t[..., None, :]
    return out[..., 0, :] if single else out


def transform_point_inv(p: Pose, x):
    """Map points (see transform_point) from the world frame into the pose's frame."""
    single = np.ndim(value_of(x)) == 1
    if single:
        x = x[None, :]
    out = quat_rotate_inv(p.q[..., None, :], x - p.t[..., None, :])
    return out[..., 0, :] if single else out


def apply_twist(p: Pose, u: Twist) -> Pose:
    """One pose increment: translation add, left-multiplied orientation exp."""
    return Pose(p.t + u.linear, quat_normalize(quat_mul(quat_exp(u.angular), p.q)))


def gravity_wrench(inertia: InertiaParams, p: Pose) -> Wrench:
    """Weight at the CoM, torque taken about the pose origin (the reference point)."""
    f = inertia.mass * inertia.gravity
    r = quat_rotate(p.q, inertia.com)
    return Wrench(np.broadcast_to(f, value_of(r).shape), cross3(r, f))


def solve_inertia(inertia: InertiaParams, w: Wrench):
    """Generalized acceleration 6-vector M^{-1} [force; torque]."""
    lin = w.force / inertia.mass
    ang = mat3_apply(inertia._rot_inv, w.torque)
    return np.concatenate([lin, ang], axis=-1)


def point_wrench(origin, com_world, f) -> Wrench:
    """Wrench of point forces f (...,3) at origins (...,3) about the CoM."""
    return Wrench(f, cross3(origin - com_world, f))


def pose_errors(p: Pose, goal: Pose):
    """Translation error [mm] and geodesic rotation error [rad] to a goal pose."""
    dt = value_of(p.t) - value_of(goal.t)
    return 1000.0 * np.linalg.norm(dt, axis=-1), quat_angle(p.q, goal.q)
