"""Run configuration: YAML schema, validation, defaults and echo.

A run config is a nested mapping validated against the DEFAULTS tree below.
Unknown keys and out-of-range values are rejected with the offending field
path. Every command writes the fully-resolved config (defaults filled in)
next to its outputs; re-running from that echoed file reproduces the run
byte for byte given the same seed.
"""

from __future__ import annotations

import copy
import os
from dataclasses import replace

import numpy as np
import yaml

from .contact import MODEL_NAMES, ContactConfig
from .dynamics import HydroBody
from .optimizer import CostSpec, OptimizerConfig
from .scenarios import SCENARIO_NAMES, Scenario, make_scenario

__all__ = ["ConfigError", "RunConfig", "load_config", "resolve", "echo_config", "DEFAULTS"]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the field."""


DEFAULTS = {
    "scenario": {
        "name": "planar_pushing",
        "n_points": 200,
        "squeeze": 8e-3,
        "settle_steps": None,  # scenario default when null
        "goal_trans_radius": None,
        "goal_rot_range": None,
        "preload": None,
    },
    "materials": {},  # per body name: {elastic_normal, elastic_tangent, friction, sharpness}
    "quasidyn": {"h": None, "epsilon": None, "gain": None, "max_step_motion": 0.5},
    "contact": {"relative_motion": True, "normal_source": "object"},
    "models": {"plant": "nh", "planner": "nhs"},
    "noise": {"pos": 0.0, "rot": 0.0},
    "optimizer": {
        "n_samples": 16,
        "n_elites": 4,
        "grad_iters": 10,
        "step_size": 0.5,
        "horizon": 6,
        "episode_len": 14,
        "cem_iters": 1,
        "sigma_init": 5e-4,
        "sigma_min": 1e-4,
        "max_backtracks": 5,
    },
    "cost": {},  # CostSpec weight overrides
    "goals": {"count": 1, "seed": 7},
    "simulate": {"steps": 20, "controls": "zero"},
    "gradcheck": {"horizon": 5, "delta": 1e-6, "threshold": 1e-4, "u_scale": 0.5},
    "seed": 0,
    "out_dir": None,
}

_SCALAR_TYPES = {
    ("seed",): int,
    ("scenario", "n_points"): int,
    ("goals", "count"): int,
    ("goals", "seed"): int,
    ("simulate", "steps"): int,
    ("gradcheck", "horizon"): int,
}


def _merge(defaults, user, path=""):
    out = copy.deepcopy(defaults)
    if user is None:
        return out
    if not isinstance(user, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {type(user).__name__}")
    for key, val in user.items():
        here = f"{path}.{key}" if path else key
        if key not in defaults:
            if path in ("materials", "cost"):
                out[key] = val
                continue
            raise ConfigError(f"unknown config field {here!r}")
        if isinstance(defaults[key], dict) and path not in ("materials",):
            out[key] = _merge(defaults[key], val, here)
        else:
            out[key] = val
    return out


def _check(resolved):
    name = resolved["scenario"]["name"]
    if name not in SCENARIO_NAMES:
        raise ConfigError(f"scenario.name: unknown scenario {name!r}; expected one of {SCENARIO_NAMES}")
    for side in ("plant", "planner"):
        m = resolved["models"][side]
        if m not in MODEL_NAMES:
            raise ConfigError(f"models.{side}: unknown model {m!r}; expected one of {MODEL_NAMES}")
    if resolved["contact"]["normal_source"] not in ("object", "sdf"):
        raise ConfigError("contact.normal_source: expected 'object' or 'sdf'")
    n = resolved["scenario"]["n_points"]
    if not (8 <= int(n) <= 20000):
        raise ConfigError(f"scenario.n_points: {n} outside [8, 20000]")
    opt = resolved["optimizer"]
    if not (1 <= int(opt["n_elites"]) <= int(opt["n_samples"])):
        raise ConfigError("optimizer.n_elites: need 1 <= n_elites <= n_samples")
    if int(opt["horizon"]) < 1 or int(opt["episode_len"]) < 1:
        raise ConfigError("optimizer.horizon/episode_len: must be >= 1")
    for path, typ in _SCALAR_TYPES.items():
        node = resolved
        for p in path[:-1]:
            node = node[p]
        try:
            node[path[-1]] = typ(node[path[-1]])
        except (TypeError, ValueError):
            raise ConfigError(f"{'.'.join(path)}: expected {typ.__name__}") from None
    ctrl = resolved["simulate"]["controls"]
    if not (ctrl == "zero" or isinstance(ctrl, list)):
        raise ConfigError("simulate.controls: expected 'zero' or a nested list of per-step controls")


def resolve(user: dict | None) -> dict:
    resolved = _merge(DEFAULTS, user or {})
    _check(resolved)
    return resolved


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            user = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    if user is not None and not isinstance(user, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve(user)


def echo_config(resolved: dict, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(resolved, fh, sort_keys=True, default_flow_style=False)


class RunConfig:
    """Typed accessors over a resolved config mapping."""

    def __init__(self, resolved: dict):
        self.raw = resolved

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    def out_dir(self, command: str) -> str:
        base = self.raw["out_dir"] or os.environ.get("HYDROSIM_OUT", "runs")
        return os.path.join(base, f"{command}-{self.raw['scenario']['name']}")

    def contact_config(self) -> ContactConfig:
        c = self.raw["contact"]
        return ContactConfig(relative_motion=bool(c["relative_motion"]), normal_source=c["normal_source"])

    def scenario(self) -> Scenario:
        s = self.raw["scenario"]
        sc = make_scenario(s["name"], n_points=int(s["n_points"]), squeeze=float(s["squeeze"]))
        over = {}
        for field in ("settle_steps", "goal_trans_radius", "goal_rot_range", "preload"):
            if s[field] is not None:
                over[field] = type(getattr(sc, field))(s[field])
        if over:
            sc = replace(sc, **over)
        sc = self._apply_materials(sc)
        return self._apply_quasidyn(sc)

    def _apply_materials(self, sc: Scenario) -> Scenario:
        mats = self.raw["materials"]
        if not mats:
            return sc
        known = {b.name for b in sc.bodies}
        bodies = []
        for body in sc.bodies:
            if body.name in mats:
                fields = mats[body.name]
                bad = set(fields) - {"elastic_normal", "elastic_tangent", "friction", "sharpness"}
                if bad:
                    raise ConfigError(f"materials.{body.name}: unknown fields {sorted(bad)}")
                mat = replace(body.material, **{k: float(v) for k, v in fields.items()})
                bodies.append(HydroBody(body.name, body.shape, mat, body.controlled))
            else:
                bodies.append(body)
        unknown = set(mats) - known
        if unknown:
            raise ConfigError(f"materials: no body named {sorted(unknown)} in scenario (have {sorted(known)})")
        return replace(sc, bodies=tuple(bodies))

    def _apply_quasidyn(self, sc: Scenario) -> Scenario:
        q = self.raw["quasidyn"]
        params = sc.params
        kw = {}
        if q["h"] is not None:
            kw["h"] = float(q["h"])
        if q["epsilon"] is not None:
            kw["epsilon"] = float(q["epsilon"])
        if q["gain"] is not None:
            kw["gain"] = float(q["gain"])
        kw["max_step_motion"] = float(q["max_step_motion"])
        return replace(sc, params=replace(params, **kw))

    def optimizer_config(self, horizon=None, episode_len=None, seed=None) -> OptimizerConfig:
        o = self.raw["optimizer"]
        return OptimizerConfig(
            n_samples=int(o["n_samples"]),
            n_elites=int(o["n_elites"]),
            grad_iters=int(o["grad_iters"]),
            step_size=float(o["step_size"]),
            horizon=int(horizon if horizon is not None else o["horizon"]),
            episode_len=int(episode_len if episode_len is not None else o["episode_len"]),
            seed=int(seed if seed is not None else self.seed),
            cem_iters=int(o["cem_iters"]),
            sigma_init=float(o["sigma_init"]),
            sigma_min=float(o["sigma_min"]),
            max_backtracks=int(o["max_backtracks"]),
        )

    def cost_for(self, scenario: Scenario, goal_pose) -> CostSpec:
        kw = dict(scenario.cost_kwargs)
        for key, val in self.raw["cost"].items():
            if key not in ("stage_pos", "stage_rot", "term_pos", "term_rot", "effort", "bound_weight"):
                raise ConfigError(f"cost.{key}: unknown cost weight")
            kw[key] = float(val)
        return CostSpec(goal=goal_pose, **kw)

    def simulate_controls(self, scenario: Scenario):
        sim = self.raw["simulate"]
        m = len(scenario.bodies)
        if sim["controls"] == "zero":
            return np.zeros((int(sim["steps"]), m, 6))
        arr = np.asarray(sim["controls"], dtype=float)
        if arr.ndim == 2 and arr.shape[1] == 6 and m == 1:
            arr = arr[:, None, :]
        if arr.ndim != 3 or arr.shape[1] != m or arr.shape[2] != 6:
            raise ConfigError(
                f"simulate.controls: expected shape (steps, {m}, 6), got {list(arr.shape)}"
            )
        return arr
