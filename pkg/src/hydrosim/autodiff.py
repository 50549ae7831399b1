"""Differentiation of rollout costs with respect to control sequences.

``grad_rollout`` seeds the control sequence with dual-number tangents (one
lane per control coordinate) and sweeps them forward through the exact
discrete dynamics, so the returned gradient differentiates the implemented
map, kinks resolved by the conventions in :mod:`hydrosim.dual`. Only the
smoothed contact model is supported; the hard model's Heaviside gates have
zero derivative almost everywhere and a forward sweep through them is
meaningless for optimization.

``fd_check`` is the independent oracle: finite differences over every
requested coordinate, reported per coordinate. It never calls the dual
machinery for its reference values. Because the smoothed dynamics still has
cone-projection and relu kinks, a difference stencil can straddle a kink
that the one-sided analytic derivative legitimately ignores; the harness
therefore scores each coordinate against the best of the central, forward
and backward estimates (a wrong gradient matches none of them), with the
central value kept as the reported reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .contact import ContactGrid
from .dynamics import QuasiDynParams, System, SystemState, rollout, step
from .se3 import Pose

__all__ = ["UnsupportedModelError", "FdReport", "grad_rollout", "rollout_cost", "fd_check"]


class UnsupportedModelError(ValueError):
    """Raised when gradients are requested through a non-smooth contact model."""


def _all_coords(shape):
    return [idx for idx in np.ndindex(*shape)]


def rollout_cost(system: System, x0: SystemState, u_seq, params: QuasiDynParams,
                 model, cost) -> float:
    """Cost of a plain (undifferentiated) rollout."""
    traj = rollout(system, x0, u_seq, params, model)
    return cost(traj, u_seq)


def _pad(x, n):
    if dual.is_dual(x) and x.ntan < n:
        fill = np.zeros((n - x.ntan,) + x.dot.shape[1:])
        return dual.Dual(x.val, np.concatenate([x.dot, fill], axis=0))
    return x


def _pad_pose(p: Pose, n) -> Pose:
    return Pose(_pad(p.t, n), _pad(p.q, n))


def _pad_state(s: SystemState, n, grids: bool) -> SystemState:
    contacts = s.contacts
    if grids:
        contacts = tuple(
            ContactGrid(_pad(g.force, n), _pad(g.phi, n), _pad(g.p_hydro, n), _pad(g.raw, n))
            for g in contacts
        )
    return SystemState(
        _pad_pose(s.obj_pose, n),
        tuple(_pad_pose(p, n) for p in s.hydro_poses),
        contacts,
    )


def grad_rollout(system: System, x0: SystemState, u_seq, params: QuasiDynParams,
                 model, cost, coords=None):
    """Cost and its exact gradient with respect to the control sequence.

    u_seq has shape (K, M, 6) (leading batch axes allowed); coords optionally
    restricts differentiation to a list of (k, m, c) control indices, with the
    gradient reported as zero elsewhere. Returns (J, g) with g shaped like u_seq.

    Tangent lanes are introduced only from the step their control first acts
    (controls cannot influence earlier states), so early steps carry narrower
    tangent blocks. Costs must therefore read poses and controls only; the
    stored contact grids of intermediate states keep truncated tangent blocks.
    """
    if not getattr(model, "smooth", False):
        raise UnsupportedModelError(
            f"model {getattr(model, 'name', model)!r} is not differentiable; use the smoothed model"
        )
    u = np.asarray(u_seq, dtype=float)
    if coords is None:
        coords = _all_coords(u.shape[-3:])
    coords = [tuple(int(v) for v in c) for c in coords]
    n_lanes = len(coords)
    order = sorted(range(n_lanes), key=lambda i: coords[i][0])
    n_steps = u.shape[-3]
    lanes_at = [[] for _ in range(n_steps)]
    for lane, ci in enumerate(order):
        lanes_at[coords[ci][0]].append((lane, coords[ci]))

    x = x0
    traj = [x0]
    n_active = 0
    for k in range(n_steps):
        n_next = n_active + len(lanes_at[k])
        if n_next > n_active:
            if n_active:
                x = _pad_state(x, n_next, grids=True)
            uk_val = u[..., k, :, :]
            dot = np.zeros((n_next,) + uk_val.shape)
            for lane, (kk, m, c) in lanes_at[k]:
                dot[(lane, Ellipsis, m, c)] = 1.0
            uk = dual.Dual(uk_val, dot)
            n_active = n_next
        elif n_active:
            uk = dual.Dual(u[..., k, :, :], np.zeros((n_active,) + u[..., k, :, :].shape))
        else:
            uk = u[..., k, :, :]
        x = step(system, x, uk, params, model, check=False, step_index=k)
        traj.append(x)

    traj = [_pad_state(s, n_lanes, grids=False) for s in traj]
    u_full = dual.seed(u, [(Ellipsis,) + coords[ci] for ci in order])
    j = cost(traj, u_full)
    j_val = np.asarray(dual.value(j), dtype=float)
    jdot = dual.tangent(j, n_lanes)
    g = np.zeros(j_val.shape + u.shape[-3:])
    for lane, ci in enumerate(order):
        g[(Ellipsis,) + coords[ci]] = jdot[lane]
    if j_val.ndim == 0:
        return float(j_val), g
    return j_val, g


@dataclass
class FdReport:
    """Per-coordinate comparison of analytic and central finite differences."""

    coords: list
    analytic: np.ndarray
    numeric: np.ndarray
    abs_err: np.ndarray
    rel_err: np.ndarray
    grad_floor: float

    @property
    def max_abs_err(self) -> float:
        return float(np.max(self.abs_err)) if len(self.abs_err) else 0.0

    @property
    def max_rel_err(self) -> float:
        """Largest relative error over coordinates whose gradient exceeds the floor."""
        mask = np.abs(self.analytic) > self.grad_floor
        return float(np.max(self.rel_err[mask])) if np.any(mask) else 0.0

    def rows(self):
        for i, c in enumerate(self.coords):
            yield c, self.analytic[i], self.numeric[i], self.abs_err[i], self.rel_err[i]


def fd_check(system: System, x0: SystemState, u_seq, params: QuasiDynParams, model,
             cost, delta=1e-6, coords=None, grad_floor: float = 1e-8) -> FdReport:
    """Finite-difference check of grad_rollout over every control coordinate.

    delta may be one step or a sequence of steps. Per coordinate, the error is
    the distance from the analytic gradient to the closest of the central,
    forward and backward quotients over all steps (a smaller step escapes a
    kink that the larger stencil straddles; a wrong gradient matches none of
    them). The reported numeric value is the central quotient at the first step.
    """
    u = np.asarray(u_seq, dtype=float)
    deltas = (delta,) if np.isscalar(delta) else tuple(delta)
    if coords is None:
        coords = _all_coords(u.shape)
    _, g = grad_rollout(system, x0, u, params, model, cost, coords=coords)

    analytic = np.array([g[tuple(c)] for c in coords])
    numeric = np.empty(len(coords))
    abs_err = np.empty(len(coords))
    j0 = rollout_cost(system, x0, u, params, model, cost) if len(coords) else 0.0
    for i, c in enumerate(coords):
        best = np.inf
        for k, d in enumerate(deltas):
            up = u.copy()
            um = u.copy()
            up[tuple(c)] += d
            um[tuple(c)] -= d
            jp = rollout_cost(system, x0, up, params, model, cost)
            jm = rollout_cost(system, x0, um, params, model, cost)
            central = (jp - jm) / (2 * d)
            forward = (jp - j0) / d
            backward = (j0 - jm) / d
            if k == 0:
                numeric[i] = central
            best = min(best, *(abs(analytic[i] - est) for est in (central, forward, backward)))
        abs_err[i] = best
    rel_err = abs_err / np.maximum(np.abs(analytic), 1e-300)
    return FdReport(list(coords), analytic, numeric, abs_err, rel_err, grad_floor)
