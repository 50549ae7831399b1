"""Signed distance fields, object surface discretization and contact frames.

Hydroelastic bodies are SDF primitives evaluated in their own body frame
(negative inside). Rigid objects are discretized once into surface samples
(object-frame point, area weight, outward normal); brute-force evaluation of
every sample against every hydro body is intentional, point counts stay in
the low thousands.

SDF evaluation is written with trailing-axis numpy only, so penetration
values stay differentiable when positions carry dual-number tangents.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .se3 import Pose, cross3, dot3, quat_rotate, transform_point, transform_point_inv, value_of

_TINY = 1e-18
GRAD_FALLBACK = np.array([0.0, 0.0, 1.0])


class MeshError(ValueError):
    """Mesh ingestion failed (open surface, degenerate faces, parse error)."""


# ---------------------------------------------------------------------
# SDF primitives


@dataclass(frozen=True)
class Sphere:
    radius: float
    exact: bool = True

    def sdf(self, p):
        s = np.sum(p * p, axis=-1)
        return np.sqrt(np.maximum(s, _TINY)) - self.radius

    def grad(self, p):
        n = np.linalg.norm(p, axis=-1, keepdims=True)
        singular = n[..., 0] < 1e-12
        g = np.where(singular[..., None], GRAD_FALLBACK, p / np.where(n < 1e-12, 1.0, n))
        return g, singular


@dataclass(frozen=True)
class HalfSpace:
    """Material fills the side opposite ``normal``; phi = n.p - offset."""

    normal: np.ndarray
    offset: float = 0.0
    exact: bool = True

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        object.__setattr__(self, "normal", n / np.linalg.norm(n))

    def sdf(self, p):
        return np.sum(p * self.normal, axis=-1) - self.offset

    def grad(self, p):
        p = value_of(p)
        g = np.broadcast_to(self.normal, p.shape).copy()
        return g, np.zeros(p.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class Ellipsoid:
    """Approximate SDF k0(k0-1)/k1; exact zero level set, not 1-Lipschitz."""

    semi_axes: np.ndarray
    exact: bool = False

    def __post_init__(self):
        object.__setattr__(self, "semi_axes", np.asarray(self.semi_axes, dtype=float))

    def sdf(self, p):
        r = self.semi_axes
        k0 = np.sqrt(np.maximum(np.sum((p / r) ** 2, axis=-1), _TINY))
        k1 = np.sqrt(np.maximum(np.sum((p / (r * r)) ** 2, axis=-1), _TINY))
        return k0 * (k0 - 1.0) / k1

    def grad(self, p):
        # surface-normal direction of the implicit quadric, normalized
        p = value_of(p)
        g = p / self.semi_axes**2
        n = np.linalg.norm(g, axis=-1, keepdims=True)
        singular = n[..., 0] < 1e-12
        g = np.where(singular[..., None], GRAD_FALLBACK, g / np.where(n < 1e-12, 1.0, n))
        return g, singular


@dataclass(frozen=True)
class Capsule:
    """Capsule along the local z axis."""

    radius: float
    half_length: float
    exact: bool = True

    def sdf(self, p):
        z = np.minimum(np.maximum(p[..., 2], -self.half_length), self.half_length)
        d = np.stack([p[..., 0], p[..., 1], p[..., 2] - z], axis=-1)
        return np.sqrt(np.maximum(np.sum(d * d, axis=-1), _TINY)) - self.radius

    def grad(self, p):
        p = value_of(p)
        z = np.clip(p[..., 2], -self.half_length, self.half_length)
        d = p - np.stack([np.zeros_like(z), np.zeros_like(z), z], axis=-1)
        n = np.linalg.norm(d, axis=-1, keepdims=True)
        singular = n[..., 0] < 1e-12
        g = np.where(singular[..., None], GRAD_FALLBACK, d / np.where(n < 1e-12, 1.0, n))
        return g, singular


@dataclass(frozen=True)
class RoundedBox:
    half_extents: np.ndarray
    corner_radius: float = 0.0
    exact: bool = True

    def __post_init__(self):
        object.__setattr__(self, "half_extents", np.asarray(self.half_extents, dtype=float))

    def sdf(self, p):
        q = np.abs(p) - self.half_extents
        outside = np.sqrt(np.maximum(np.sum(np.maximum(q, 0.0) ** 2, axis=-1), _TINY))
        inside = np.minimum(np.maximum(q[..., 0], np.maximum(q[..., 1], q[..., 2])), 0.0)
        return outside + inside - self.corner_radius

    def grad(self, p):
        p = value_of(p)
        q = np.abs(p) - self.half_extents
        out = np.maximum(q, 0.0)
        n = np.linalg.norm(out, axis=-1, keepdims=True)
        sgn = np.where(p >= 0.0, 1.0, -1.0)
        outside_g = sgn * out / np.where(n < 1e-12, 1.0, n)
        # inside: face of least depth
        face = np.argmax(q, axis=-1)
        inside_g = sgn * np.eye(3)[face]
        g = np.where(n[..., 0][..., None] < 1e-12, inside_g, outside_g)
        return g, np.zeros(p.shape[:-1], dtype=bool)


SHAPE_KINDS = {
    "sphere": Sphere,
    "half_space": HalfSpace,
    "ellipsoid": Ellipsoid,
    "capsule": Capsule,
    "rounded_box": RoundedBox,
}


def sdf_eval(shape, hydro_pose: Pose, p_world):
    """Signed distance [m] of world points to the body's nominal surface."""
    return shape.sdf(transform_point_inv(hydro_pose, p_world))


def sdf_gradient(shape, hydro_pose: Pose, p_world, with_flags: bool = False):
    """World-frame unit SDF gradient; singular points fall back to +z and are flagged."""
    p_local = value_of(transform_point_inv(hydro_pose, p_world))
    g_local, flags = shape.grad(p_local)
    q = value_of(hydro_pose.q)
    if np.ndim(g_local) > np.ndim(value_of(hydro_pose.t)):
        q = q[..., None, :]
    g_world = quat_rotate(q, g_local)
    if with_flags:
        return g_world, flags
    return g_world


# ---------------------------------------------------------------------
# object surface discretization


@dataclass(frozen=True)
class SurfaceSamples:
    """Object-frame surface discretization: points (N,3), outward normals (N,3), areas (N,)."""

    points: np.ndarray
    normals: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        if np.any(self.areas <= 0.0):
            raise MeshError("all sample areas must be positive")

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))


def _face_grid(center, u_axis, v_axis, u_len, v_len, normal, n_target):
    """Regular grid on a rectangle; cell areas sum exactly to the face area."""
    aspect = u_len / v_len
    nv = max(1, int(round(np.sqrt(n_target / aspect))))
    nu = max(1, int(round(n_target / nv)))
    us = (np.arange(nu) + 0.5) / nu * u_len - u_len / 2
    vs = (np.arange(nv) + 0.5) / nv * v_len - v_len / 2
    uu, vv = np.meshgrid(us, vs, indexing="ij")
    pts = center + np.outer(uu.ravel(), u_axis) + np.outer(vv.ravel(), v_axis)
    area = u_len * v_len / (nu * nv)
    return pts, np.broadcast_to(normal, pts.shape).copy(), np.full(len(pts), area)


def sample_box(half_extents, n: int) -> SurfaceSamples:
    hx, hy, hz = np.asarray(half_extents, dtype=float)
    faces = [
        (np.array([hx, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), 2 * hy, 2 * hz, np.array([1.0, 0, 0])),
        (np.array([-hx, 0, 0]), np.array([0, 1.0, 0]), np.array([0, 0, 1.0]), 2 * hy, 2 * hz, np.array([-1.0, 0, 0])),
        (np.array([0, hy, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), 2 * hx, 2 * hz, np.array([0, 1.0, 0])),
        (np.array([0, -hy, 0]), np.array([1.0, 0, 0]), np.array([0, 0, 1.0]), 2 * hx, 2 * hz, np.array([0, -1.0, 0])),
        (np.array([0, 0, hz]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 2 * hx, 2 * hy, np.array([0, 0, 1.0])),
        (np.array([0, 0, -hz]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), 2 * hx, 2 * hy, np.array([0, 0, -1.0])),
    ]
    total = sum(ul * vl for _, _, _, ul, vl, _ in faces)
    pts, nrm, ar = [], [], []
    for center, ua, va, ul, vl, normal in faces:
        n_face = max(1, int(round(n * (ul * vl) / total)))
        p, nn, a = _face_grid(center, ua, va, ul, vl, normal, n_face)
        pts.append(p)
        nrm.append(nn)
        ar.append(a)
    return SurfaceSamples(np.concatenate(pts), np.concatenate(nrm), np.concatenate(ar))


def sample_sphere(radius: float, n: int) -> SurfaceSamples:
    # Fibonacci lattice; every point carries an equal share of the area
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5**0.5) * i
    normals = np.stack(
        [np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta), np.cos(phi)], axis=-1
    )
    areas = np.full(n, 4 * np.pi * radius**2 / n)
    return SurfaceSamples(radius * normals, normals, areas)


def sample_cylinder(radius: float, height: float, n: int) -> SurfaceSamples:
    """Cylinder along local z, centered at the origin, with end caps."""
    lat_area = 2 * np.pi * radius * height
    cap_area = np.pi * radius**2
    total = lat_area + 2 * cap_area
    n_lat = max(4, int(round(n * lat_area / total)))
    n_cap = max(1, int(round(n * cap_area / total)))

    n_th = max(4, int(round(np.sqrt(n_lat * 2 * np.pi * radius / height))))
    n_z = max(1, int(round(n_lat / n_th)))
    th = (np.arange(n_th) + 0.5) / n_th * 2 * np.pi
    zs = (np.arange(n_z) + 0.5) / n_z * height - height / 2
    tt, zz = np.meshgrid(th, zs, indexing="ij")
    lat_n = np.stack([np.cos(tt.ravel()), np.sin(tt.ravel()), np.zeros(tt.size)], axis=-1)
    lat_p = lat_n * radius + np.stack([np.zeros(zz.size), np.zeros(zz.size), zz.ravel()], axis=-1)
    lat_a = np.full(len(lat_p), lat_area / len(lat_p))

    # sunflower lattice on each cap
    k = np.arange(n_cap) + 0.5
    r = radius * np.sqrt(k / n_cap)
    th_c = np.pi * (1 + 5**0.5) * k
    disc = np.stack([r * np.cos(th_c), r * np.sin(th_c)], axis=-1)
    caps_p, caps_n, caps_a = [], [], []
    for zsign in (1.0, -1.0):
        caps_p.append(np.concatenate([disc, np.full((n_cap, 1), zsign * height / 2)], axis=-1))
        caps_n.append(np.broadcast_to([0.0, 0.0, zsign], (n_cap, 3)).copy())
        caps_a.append(np.full(n_cap, cap_area / n_cap))
    return SurfaceSamples(
        np.concatenate([lat_p] + caps_p),
        np.concatenate([lat_n] + caps_n),
        np.concatenate([lat_a] + caps_a),
    )


def sample_surface(spec, n: int, seed: int = 0) -> SurfaceSamples:
    """Discretize a primitive spec or a loaded mesh into ~n area-weighted samples.

    spec is ("box", half_extents) | ("sphere", r) | ("cylinder", r, h)
    | ("mesh", vertices, faces).
    """
    kind = spec[0]
    if kind == "box":
        return sample_box(spec[1], n)
    if kind == "sphere":
        return sample_sphere(spec[1], n)
    if kind == "cylinder":
        return sample_cylinder(spec[1], spec[2], n)
    if kind == "mesh":
        return sample_mesh(spec[1], spec[2], n, seed=seed)
    raise MeshError(f"unknown surface spec kind {kind!r}")


# ---------------------------------------------------------------------
# triangle meshes (ASCII OFF)


def load_off(path):
    """Parse an ASCII OFF mesh into (vertices (V,3), faces (F,3))."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path}: not an OFF file")
    nv, nf = int(tokens[1]), int(tokens[2])
    pos = 4
    verts = np.array(tokens[pos : pos + 3 * nv], dtype=float).reshape(nv, 3)
    pos += 3 * nv
    faces = []
    for _ in range(nf):
        k = int(tokens[pos])
        if k != 3:
            raise MeshError(f"{path}: only triangle faces supported, got {k}-gon")
        faces.append([int(t) for t in tokens[pos + 1 : pos + 4]])
        pos += 1 + k
    return verts, np.array(faces, dtype=int)


def _check_closed(faces):
    edges = {}
    for f in faces:
        for a, b in ((f[0], f[1]), (f[1], f[2]), (f[2], f[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    bad = [e for e, c in edges.items() if c != 2]
    if bad:
        raise MeshError(f"mesh is not closed: {len(bad)} boundary/non-manifold edges")


def sample_mesh(vertices, faces, n: int, seed: int = 0) -> SurfaceSamples:
    """Area-weighted stratified sampling over triangles, deterministic per seed."""
    vertices = np.asarray(vertices, dtype=float)
    faces = np.asarray(faces, dtype=int)
    _check_closed(faces)
    a, b, c = vertices[faces[:, 0]], vertices[faces[:, 1]], vertices[faces[:, 2]]
    cr = np.cross(b - a, c - a)
    tri_area = 0.5 * np.linalg.norm(cr, axis=-1)
    if np.any(tri_area < 1e-16):
        raise MeshError("mesh contains degenerate (zero-area) triangles")
    tri_n = cr / (2 * tri_area[:, None])

    # largest-remainder allocation of samples to triangles
    quota = n * tri_area / tri_area.sum()
    counts = np.floor(quota).astype(int)
    rem = n - counts.sum()
    if rem > 0:
        order = np.argsort(-(quota - counts))
        counts[order[:rem]] += 1
    counts = np.maximum(counts, 1)

    rng = np.random.default_rng(seed)
    pts, nrm, ar = [], [], []
    for i, cnt in enumerate(counts):
        u = rng.random((cnt, 2))
        flip = u.sum(axis=1) > 1.0
        u[flip] = 1.0 - u[flip]
        p = a[i] + u[:, :1] * (b[i] - a[i]) + u[:, 1:] * (c[i] - a[i])
        pts.append(p)
        nrm.append(np.broadcast_to(tri_n[i], (cnt, 3)).copy())
        ar.append(np.full(cnt, tri_area[i] / cnt))
    return SurfaceSamples(np.concatenate(pts), np.concatenate(nrm), np.concatenate(ar))


# ---------------------------------------------------------------------
# contact frames and jacobians


@dataclass(frozen=True)
class ContactFrames:
    """World-frame contact frames: origins (N,3) and rotations (N,3,3), column 0 = normal."""

    origins: np.ndarray
    rotations: np.ndarray

    @property
    def normals(self):
        return self.rotations[..., :, 0]


def world_normals(samples: SurfaceSamples, object_pose: Pose):
    q = object_pose.q
    if np.ndim(value_of(q)) < 2:
        return quat_rotate(q, samples.normals)
    return quat_rotate(q[..., None, :], samples.normals)


def contact_frame(samples: SurfaceSamples, object_pose: Pose) -> ContactFrames:
    """Frames at each sample: origin from the object pose, x column along the
    world-frame surface normal, tangents completed deterministically from the
    world axis least aligned with the normal."""
    origins = value_of(transform_point(object_pose, samples.points))
    n = value_of(world_normals(samples, object_pose))
    axis_idx = np.argmin(np.abs(n), axis=-1)
    e = np.eye(3)[axis_idx]
    t1 = e - dot3(e, n)[..., None] * n
    t1 = t1 / np.linalg.norm(t1, axis=-1, keepdims=True)
    t2 = cross3(n, t1)
    return ContactFrames(origins, np.stack([n, t1, t2], axis=-1))


def contact_jacobian(origin, com_world) -> np.ndarray:
    """6x3 map B with B @ f = [f; (origin - com) x f], wrench about the CoM."""
    r = np.asarray(origin, dtype=float) - np.asarray(com_world, dtype=float)
    skew = np.array([[0.0, -r[2], r[1]], [r[2], 0.0, -r[0]], [-r[1], r[0], 0.0]])
    return np.concatenate([np.eye(3), skew], axis=0)
