"""Quasi-dynamic simulation and trajectory optimization for compliant
hydroelastic contact, with an incremental friction model whose forces live
in the state, a smoothed differentiable variant, pressure-field baselines,
and a sampling+gradient MPC planner."""

__version__ = "0.1.0"

from .contact import (
    ContactConfig,
    MaterialParams,
    cone_project,
    get_model,
    penetration_fraction,
    pf_force,
    pff_force,
)
from .dynamics import HydroBody, QuasiDynParams, StepFault, System, SystemState, init_state, rollout, step
from .geometry import Capsule, Ellipsoid, HalfSpace, RoundedBox, Sphere, sample_surface
from .se3 import InertiaParams, Pose, Twist, Wrench
