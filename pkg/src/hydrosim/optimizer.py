"""Sampling-based trajectory optimization with gradient refinement, plus the
receding-horizon driver that applies it step by step.

The planner keeps a diagonal Gaussian over control sequences. Each planning
call samples a population of sequences (keeping the incumbent elites), runs a
configurable number of gradient-descent sweeps on every sequence (backtracking
step halving, at most ``max_backtracks`` halvings), refits the distribution
to the elite set, and returns the lowest-cost sequence. Everything is
vectorized over the population, and all stochasticity flows through one
generator, so a seed pins the whole episode.

Masked control coordinates are exactly zero in every emitted plan; bounds are
enforced by clamping after sampling and after every gradient step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import grad_rollout
from .dynamics import QuasiDynParams, StepFault, System, SystemState, rollout
from .se3 import Pose, pose_errors, value_of

__all__ = [
    "OptimizerConfig",
    "CostSpec",
    "ControlDistribution",
    "PlanResult",
    "EpisodeRecord",
    "EpisodeLog",
    "PlanningError",
    "plan",
    "mpc_run",
    "open_loop_run",
]


class PlanningError(RuntimeError):
    """Every candidate rollout faulted; no plan available."""


@dataclass(frozen=True)
class OptimizerConfig:
    n_samples: int = 16  # parallel trajectories
    n_elites: int = 4  # sequences kept for the distribution refit
    grad_iters: int = 10  # gradient-descent sweeps per planning call
    step_size: float = 0.5  # gradient step length, in control-bound units
    horizon: int = 10  # planning horizon K
    episode_len: int = 10  # MPC episode length H
    seed: int = 0
    cem_iters: int = 1  # internal sample/refit rounds per planning call
    sigma_init: float = 2e-3
    sigma_min: float = 1e-4
    max_backtracks: int = 5

    def __post_init__(self):
        if not (1 <= self.n_elites <= self.n_samples):
            raise ValueError("need 1 <= n_elites <= n_samples")
        if self.grad_iters < 0 or self.horizon < 1 or self.cem_iters < 1:
            raise ValueError("grad_iters >= 0, horizon >= 1, cem_iters >= 1")


@dataclass(frozen=True)
class CostSpec:
    """Quadratic pose-tracking cost with control effort and soft state bounds.

    Rotation error uses 1 - <q, q*>^2, which is smooth everywhere and behaves
    like (angle/2)^2 near the goal.
    """

    goal: Pose
    stage_pos: float = 0.0
    stage_rot: float = 0.0
    term_pos: float = 1.0
    term_rot: float = 1.0
    effort: float = 0.0
    pos_low: np.ndarray | None = None  # object translation box, soft
    pos_high: np.ndarray | None = None
    bound_weight: float = 0.0
    body_index: int | None = None  # track a hydro body instead of the object

    def _pose_terms(self, state, wp, wr):
        tracked = state.obj_pose if self.body_index is None else state.hydro_poses[self.body_index]
        t = tracked.t
        q = tracked.q
        dt = t - self.goal.t
        term = wp * np.sum(dt * dt, axis=-1)
        if wr != 0.0:
            dq = np.sum(q * self.goal.q, axis=-1)
            term = term + wr * (1.0 - dq * dq)
        if self.bound_weight and self.pos_low is not None:
            lo = np.maximum(self.pos_low - t, 0.0)
            hi = np.maximum(t - self.pos_high, 0.0)
            term = term + self.bound_weight * (np.sum(lo * lo, axis=-1) + np.sum(hi * hi, axis=-1))
        return term

    def __call__(self, traj, u_seq):
        n = len(traj) - 1
        j = self._pose_terms(traj[-1], self.term_pos, self.term_rot)
        for k in range(n):
            if self.stage_pos or self.stage_rot or self.bound_weight:
                j = j + self._pose_terms(traj[k], self.stage_pos, self.stage_rot)
        if self.effort:
            u = u_seq if not isinstance(u_seq, (list, tuple)) else np.stack(u_seq, axis=-4)
            j = j + self.effort * np.sum(u * u, axis=(-1, -2, -3))
        return j


@dataclass(frozen=True)
class ControlDistribution:
    """Per-step diagonal Gaussian over (M, 6) pose increments."""

    mean: np.ndarray  # (K, M, 6)
    std: np.ndarray  # (K, M, 6)

    @staticmethod
    def prior(horizon: int, n_bodies: int, sigma) -> "ControlDistribution":
        """Zero-mean prior; sigma is a scalar or a per-coordinate (M, 6) array."""
        shape = (horizon, n_bodies, 6)
        return ControlDistribution(np.zeros(shape), np.broadcast_to(np.asarray(sigma, dtype=float), shape).copy())

    @property
    def horizon(self) -> int:
        return self.mean.shape[0]

    def sample(self, rng, n: int, mask, low, high) -> np.ndarray:
        z = rng.standard_normal((n,) + self.mean.shape)
        u = self.mean + self.std * z
        return _project(u, mask, low, high)

    def shifted(self, target_len: int, pad_sigma) -> "ControlDistribution":
        """Drop the consumed head; pad the tail with the prior if needed."""
        mean, std = self.mean[1:], self.std[1:]
        pad = np.broadcast_to(np.asarray(pad_sigma, dtype=float), self.std.shape[1:])
        while mean.shape[0] < target_len:
            mean = np.concatenate([mean, np.zeros_like(mean[-1:])])
            std = np.concatenate([std, pad[None]])
        return ControlDistribution(mean[:target_len], std[:target_len])


def _project(u, mask, low, high):
    u = np.clip(u, low, high)
    return u * mask


def _batch_costs(system, x, u_batch, params, model, cost):
    try:
        traj = rollout(system, x, u_batch, params, model)
    except StepFault as fault:
        raise PlanningError(f"candidate rollouts faulted at step {fault.step_index}") from fault
    return np.asarray(cost(traj, u_batch), dtype=float)


def _refine(system, x, u, costs, cfg, cost, model, params, mask, low, high, coords):
    """Vectorized gradient descent with per-lane backtracking; never worsens a lane.

    The raw gradient mixes units (translations vs rotations), so the step is
    taken along the bound-preconditioned direction with a per-lane length of
    step_size in bound units; backtracking halves lanes that got worse.
    """
    scale = np.where(mask > 0, 0.5 * (np.asarray(high) - np.asarray(low)), 0.0)
    n_bt = 0
    for _ in range(cfg.grad_iters):
        _, g = grad_rollout(system, x, u, params, model, cost, coords=coords)
        s = g * scale
        norm = np.sqrt(np.sum(s * s, axis=(1, 2, 3), keepdims=True))
        direction = scale * s / np.maximum(norm, 1e-300)
        eta = np.full(u.shape[0], cfg.step_size)
        cand = _project(u - eta[:, None, None, None] * direction, mask, low, high)
        cand_costs = _batch_costs(system, x, cand, params, model, cost)
        for _ in range(cfg.max_backtracks):
            worse = cand_costs > costs
            if not np.any(worse):
                break
            n_bt += 1
            eta = np.where(worse, 0.5 * eta, eta)
            cand = _project(u - eta[:, None, None, None] * direction, mask, low, high)
            cand_costs = _batch_costs(system, x, cand, params, model, cost)
        accept = cand_costs <= costs
        u = np.where(accept[:, None, None, None], cand, u)
        costs = np.where(accept, cand_costs, costs)
    return u, costs, n_bt


@dataclass
class PlanResult:
    best: np.ndarray  # (K, M, 6)
    best_cost: float
    dist: ControlDistribution
    elites: np.ndarray  # (n_elites, K, M, 6)
    costs: np.ndarray  # (B,) sorted ascending
    diagnostics: dict


def plan(system: System, x: SystemState, dist: ControlDistribution, cfg: OptimizerConfig,
         cost: CostSpec, model, params: QuasiDynParams, mask, low, high, rng,
         warm_pop=None) -> PlanResult:
    """One planning call: sample, refine with gradients, refit, return the best."""
    b, m_el = cfg.n_samples, cfg.n_elites
    if cfg.grad_iters > 0 and getattr(model, "smooth", False):
        coords = [tuple(idx) for idx in np.argwhere(np.broadcast_to(mask, dist.mean.shape))]
    else:
        coords = None

    if warm_pop is not None and len(warm_pop):
        keep = np.asarray(warm_pop)[: min(len(warm_pop), b)]
        fresh = dist.sample(rng, b - len(keep), mask, low, high)
        u = np.concatenate([_project(keep, mask, low, high), fresh]) if len(fresh) else _project(keep, mask, low, high)
    else:
        u = dist.sample(rng, b, mask, low, high)

    costs = _batch_costs(system, x, u, params, model, cost)
    n_bt = 0
    for it in range(cfg.cem_iters):
        if it > 0:
            order = np.argsort(costs, kind="stable")
            fresh = dist.sample(rng, b - m_el, mask, low, high)
            u = np.concatenate([u[order[:m_el]], fresh])
            costs = np.concatenate([costs[order[:m_el]], _batch_costs(system, x, fresh, params, model, cost)])
        if coords:
            u, costs, bt = _refine(system, x, u, costs, cfg, cost, model, params, mask, low, high, coords)
            n_bt += bt
        order = np.argsort(costs, kind="stable")
        elites = u[order[:m_el]]
        mu = np.mean(elites, axis=0)
        sigma = np.maximum(np.std(elites, axis=0), cfg.sigma_min)
        dist = ControlDistribution(_project(mu, mask, low, high), sigma)

    order = np.argsort(costs, kind="stable")
    if not np.all(np.isfinite(costs)):
        raise PlanningError("all candidate rollouts produced non-finite costs")
    return PlanResult(
        best=u[order[0]].copy(),
        best_cost=float(costs[order[0]]),
        dist=dist,
        elites=u[order[:m_el]].copy(),
        costs=costs[order].copy(),
        diagnostics={"backtracks": n_bt, "elite_mean_cost": float(np.mean(costs[order[:m_el]]))},
    )


# ---------------------------------------------------------------------
# episode execution


@dataclass
class EpisodeRecord:
    index: int
    time: float
    obj_pose: np.ndarray  # (7,) translation + quaternion
    hydro_poses: np.ndarray  # (M, 7)
    control: np.ndarray  # (M, 6)
    body_wrench: np.ndarray  # (M, 6) net contact wrench on each hydro body
    cost: float
    err_mm: float
    err_rad: float


@dataclass
class EpisodeLog:
    records: list
    meta: dict

    @property
    def final_err_mm(self) -> float:
        return self.records[-1].err_mm

    @property
    def final_err_rad(self) -> float:
        return self.records[-1].err_rad


def _pack_pose(p: Pose) -> np.ndarray:
    return np.concatenate([value_of(p.t), value_of(p.q)])


def _record(plant, index, control, cost_val, goal) -> EpisodeRecord:
    state = plant.true_state
    _, reactions = plant.net_wrenches()
    err_mm, err_rad = pose_errors(state.obj_pose, goal)
    return EpisodeRecord(
        index=index,
        time=index * plant.params.h,
        obj_pose=_pack_pose(state.obj_pose),
        hydro_poses=np.stack([_pack_pose(p) for p in state.hydro_poses]),
        control=np.asarray(control, dtype=float),
        body_wrench=np.stack([w.as_vector() for w in reactions]),
        cost=float(cost_val),
        err_mm=float(err_mm),
        err_rad=float(err_rad),
    )


def mpc_run(plant, cfg: OptimizerConfig, cost: CostSpec, model, params: QuasiDynParams,
            mask, low, high, prior_sigma=None, planner_system=None) -> EpisodeLog:
    """Receding-horizon episode: measure, plan, apply the first control, shift.

    The plant is the feedback source (its measure() may add noise and replace
    stored forces with the tactile estimate); the planner rolls its own model,
    and optionally its own nominal system when the plant's is perturbed.
    prior_sigma overrides cfg.sigma_init, optionally per coordinate (M, 6).
    """
    rng = np.random.default_rng(cfg.seed)
    system = planner_system if planner_system is not None else plant.system
    n_bodies = system.n_bodies
    h_len = cfg.episode_len
    sigma0 = cfg.sigma_init if prior_sigma is None else prior_sigma
    dist = ControlDistribution.prior(min(cfg.horizon, h_len), n_bodies, sigma0)
    warm = None
    records = [_record(plant, 0, np.zeros((n_bodies, 6)), np.nan, cost.goal)]
    failures = []
    for step_i in range(h_len):
        x_meas = plant.measure()
        try:
            res = plan(system, x_meas, dist, cfg, cost, model, params, mask, low, high, rng,
                       warm_pop=warm)
        except PlanningError as exc:
            failures.append({"step": step_i, "error": str(exc)})
            break
        u0 = res.best[0]
        plant.apply(u0)
        records.append(_record(plant, step_i + 1, u0, res.best_cost, cost.goal))
        target = min(cfg.horizon, h_len - step_i - 1)
        if target >= 1:
            dist = res.dist.shifted(target, sigma0)
            warm = np.stack([_shift_seq(e, target, res.dist.mean) for e in res.elites])
        else:
            warm = None
    return EpisodeLog(records, {"mode": "closed_loop", "failures": failures})


def _shift_seq(seq, target_len, pad_mean):
    out = seq[1:]
    while out.shape[0] < target_len:
        out = np.concatenate([out, np.zeros_like(out[-1:])])
    return out[:target_len]


def open_loop_run(plant, u_seq, goal: Pose) -> EpisodeLog:
    """Execute a fixed plan on the plant without re-planning; same log format."""
    u_seq = np.asarray(u_seq, dtype=float)
    records = [_record(plant, 0, np.zeros_like(u_seq[0]), np.nan, goal)]
    failures = []
    for step_i in range(u_seq.shape[0]):
        try:
            plant.apply(u_seq[step_i])
        except StepFault as exc:
            failures.append({"step": step_i, "error": str(exc)})
            break
        records.append(_record(plant, step_i + 1, u_seq[step_i], np.nan, goal))
    return EpisodeLog(records, {"mode": "open_loop", "failures": failures})
