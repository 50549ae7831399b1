"""Command-line entry points.

Subcommands:
  simulate      roll a scenario under scripted or zero controls, log every step
  optimize      plan and execute each sampled goal closed-loop and open-loop,
                summarize pose-tracking errors
  benchmark     score contact models against a recorded wrench dataset
  gradcheck     compare rollout gradients against central finite differences
  export-plots  turn logs into plain CSV curves for any plotting tool

Exit codes: 0 success, 1 config/input error, 2 numerical fault,
3 threshold breach (gradcheck tolerance, or a non-differentiable model).
Every run writes the fully-resolved config next to its outputs; re-running
from that file with the same seed reproduces the logs byte for byte.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np
import yaml

from .autodiff import UnsupportedModelError, fd_check
from .bench import score_dataset
from .config import ConfigError, RunConfig, echo_config, load_config
from .contact import get_model
from .dynamics import StepFault, rollout
from .logio import (
    LogError,
    episode_records,
    export_plot_table,
    read_log,
    read_wrench_dataset,
    trajectory_records,
    write_log,
)
from .optimizer import (
    ControlDistribution,
    PlanningError,
    mpc_run,
    open_loop_run,
    plan,
)
from .scenarios import build_plant, make_setup, sample_goals, task_error

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_THRESHOLD = 3


def _prepare(args, command):
    cfg = RunConfig(load_config(args.config))
    if args.seed is not None:
        cfg.raw["seed"] = int(args.seed)
    if args.out is not None:
        cfg.raw["out_dir"] = args.out
    out = cfg.out_dir(command)
    os.makedirs(out, exist_ok=True)
    echo_config(cfg.raw, os.path.join(out, "config_echo.yaml"))
    return cfg, out


def cmd_simulate(args) -> int:
    cfg, out = _prepare(args, "simulate")
    sc = cfg.scenario()
    model = get_model(cfg.raw["models"]["plant"], cfg.contact_config())
    system, x0 = make_setup(sc, model)
    controls = cfg.simulate_controls(sc)
    traj = rollout(system, x0, controls, sc.params, model)
    records = trajectory_records(system, traj, controls, sc.params.h)
    path = os.path.join(out, "trajectory.jsonl")
    write_log(path, "trajectory", {"scenario": sc.name, "model": model.name, "seed": cfg.seed}, records)
    print(f"simulate: {len(records)} records -> {path}")
    return EXIT_OK


def _open_loop_for_goal(cfg, sc, planner, goal, seed):
    """Plan the full episode once from the measured start, then run it blind."""
    plant = build_plant(sc, cfg.raw["models"]["plant"], noise=float(cfg.raw["noise"]["pos"]),
                        noise_rot=float(cfg.raw["noise"]["rot"]), seed=seed,
                        contact_config=cfg.contact_config())
    ocfg = cfg.optimizer_config(seed=seed)
    full = dataclasses.replace(ocfg, horizon=ocfg.episode_len)
    cost = cfg.cost_for(sc, goal.pose)
    rng = np.random.default_rng(full.seed)
    dist = ControlDistribution.prior(full.horizon, len(sc.bodies), full.sigma_init)
    res = plan(plant.system, plant.measure(), dist, full, cost, planner, sc.params,
               sc.mask, sc.ctrl_low, sc.ctrl_high, rng)
    log = open_loop_run(plant, res.best, goal.pose)
    return plant, log


def cmd_optimize(args) -> int:
    cfg, out = _prepare(args, "optimize")
    sc = cfg.scenario()
    planner = get_model(cfg.raw["models"]["planner"], cfg.contact_config())
    n_goals = int(cfg.raw["goals"]["count"])
    goal_seed = int(cfg.raw["goals"]["seed"])

    probe = build_plant(sc, cfg.raw["models"]["plant"], seed=cfg.seed,
                        contact_config=cfg.contact_config())
    goals = sample_goals(sc, n_goals, goal_seed, x0=probe.true_state)

    rows = []
    for i, goal in enumerate(goals):
        seed_i = cfg.seed + i
        entry = {"goal": i}
        start = task_error(sc, probe.true_state.obj_pose, goal)
        entry["start_mm"] = round(start, 4)
        try:
            plant_cl = build_plant(sc, cfg.raw["models"]["plant"], noise=float(cfg.raw["noise"]["pos"]),
                                   noise_rot=float(cfg.raw["noise"]["rot"]), seed=seed_i,
                                   contact_config=cfg.contact_config())
            cost = cfg.cost_for(sc, goal.pose)
            log_cl = mpc_run(plant_cl, cfg.optimizer_config(seed=seed_i), cost, planner,
                             sc.params, sc.mask, sc.ctrl_low, sc.ctrl_high)
            entry["cl_mm"] = round(task_error(sc, plant_cl.true_state.obj_pose, goal), 4)
            write_log(os.path.join(out, f"episode_cl_{i}.jsonl"), "episode",
                      {"scenario": sc.name, "mode": "closed_loop", "goal": i, "seed": seed_i},
                      episode_records(log_cl))
            plant_ol, log_ol = _open_loop_for_goal(cfg, sc, planner, goal, seed_i)
            entry["ol_mm"] = round(task_error(sc, plant_ol.true_state.obj_pose, goal), 4)
            write_log(os.path.join(out, f"episode_ol_{i}.jsonl"), "episode",
                      {"scenario": sc.name, "mode": "open_loop", "goal": i, "seed": seed_i},
                      episode_records(log_ol))
        except (PlanningError, StepFault) as exc:
            entry["error"] = str(exc)
        rows.append(entry)

    ok = [r for r in rows if "error" not in r]
    summary = {"scenario": sc.name, "planner": planner.name, "plant": cfg.raw["models"]["plant"],
               "goals": rows}
    if ok:
        for key in ("ol_mm", "cl_mm"):
            vals = [r[key] for r in ok]
            summary[key.replace("_mm", "")] = {"mean_mm": round(float(np.mean(vals)), 4),
                                               "std_mm": round(float(np.std(vals)), 4)}
        start_mean = float(np.mean([r["start_mm"] for r in ok]))
        cl_mean = summary["cl"]["mean_mm"]
        reduction = (start_mean - cl_mean) / start_mean if start_mean > 0 else 0.0
        summary["error_reduction"] = round(float(reduction), 4)
        summary["no_meaningful_motion"] = bool(reduction < 0.10)
    with open(os.path.join(out, "summary.yaml"), "w") as fh:
        yaml.safe_dump(summary, fh, sort_keys=False)
    print(yaml.safe_dump(summary, sort_keys=False))
    return EXIT_OK


def cmd_benchmark(args) -> int:
    cfg, out = _prepare(args, "benchmark")
    sc = cfg.scenario()
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    from .geometry import sample_surface

    samples = sample_surface(sc.object_spec, sc.n_points, seed=sc.sample_seed)
    trajectories, skipped = read_wrench_dataset(args.data)
    pad = sc.bodies[0]
    table = score_dataset(pad.shape, pad.material, samples, trajectories, models,
                          cfg.contact_config())
    report = {"dataset": os.path.abspath(args.data), "trajectories": len(trajectories),
              "skipped_rows": skipped, "models": table}
    with open(os.path.join(out, "rmse.yaml"), "w") as fh:
        yaml.safe_dump(report, fh, sort_keys=False)
    print(f"{'model':<8} {'RMSE mean [N]':>14} {'std':>10}   (over {len(trajectories)} trajectories)")
    for name in models:
        print(f"{name:<8} {table[name]['mean']:>14.6g} {table[name]['std']:>10.3g}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg, out = _prepare(args, "gradcheck")
    sc = cfg.scenario()
    gc = cfg.raw["gradcheck"]
    threshold = float(args.threshold if args.threshold is not None else gc["threshold"])
    model = get_model(args.model or cfg.raw["models"]["planner"], cfg.contact_config())
    system, x0 = make_setup(sc, model)
    horizon = int(gc["horizon"])
    rng = np.random.default_rng(cfg.seed)
    u = rng.uniform(-1.0, 1.0, (horizon, len(sc.bodies), 6)) * sc.ctrl_limit * float(gc["u_scale"]) * sc.mask
    goal = sample_goals(sc, 1, int(cfg.raw["goals"]["seed"]), x0=x0)[0]
    cost = cfg.cost_for(sc, goal.pose)
    coords = [tuple(c) for c in np.argwhere(np.broadcast_to(sc.mask, u.shape))]
    report_path = os.path.join(out, "fd_report.tsv")
    try:
        rep = fd_check(system, x0, u, sc.params, model, cost, delta=float(gc["delta"]), coords=coords)
    except UnsupportedModelError as exc:
        with open(report_path, "w") as fh:
            fh.write(f"# unsupported model: {exc}\n")
        print(f"gradcheck: {exc} (expected for non-smooth models)")
        return EXIT_THRESHOLD
    with open(report_path, "w") as fh:
        fh.write("coord\tanalytic\tnumeric\tabs_err\trel_err\n")
        for c, a, n, ae, re in rep.rows():
            fh.write(f"{tuple(int(v) for v in c)}\t{a!r}\t{n!r}\t{ae!r}\t{re!r}\n")
    print(f"gradcheck: {len(coords)} coordinates, max rel err {rep.max_rel_err:.3g} "
          f"(threshold {threshold:g}) -> {report_path}")
    if len(coords) and rep.max_rel_err > threshold:
        offenders = [c for c, a, n, ae, re in rep.rows()
                     if abs(a) > rep.grad_floor and re > threshold]
        print(f"gradcheck: threshold exceeded on {len(offenders)} coordinates: {offenders[:10]}")
        return EXIT_THRESHOLD
    return EXIT_OK


def cmd_export_plots(args) -> int:
    if not args.logs:
        print("export-plots: no logs given, nothing to do")
        return EXIT_OK
    out = args.out or os.environ.get("HYDROSIM_OUT", "runs")
    os.makedirs(out, exist_ok=True)
    kinds = set()
    for path in args.logs:
        header, _ = read_log(path)
        kinds.add((header.get("schema"), header.get("version")))
    if len(kinds) > 1:
        raise LogError(f"mixed log schemas: {sorted(kinds)}")
    for path in args.logs:
        stem = os.path.splitext(os.path.basename(path))[0]
        dest = os.path.join(out, f"{stem}_curves.csv")
        n = export_plot_table(path, dest)
        print(f"export-plots: {n} rows -> {dest}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hydrosim", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=None, help="override config seed")
        sp.add_argument("--out", default=None, help="output root (default $HYDROSIM_OUT or ./runs)")

    common(sub.add_parser("simulate", help="roll a scenario under scripted controls"))
    common(sub.add_parser("optimize", help="closed- and open-loop goal tracking evaluation"))

    b = sub.add_parser("benchmark", help="wrench RMSE of contact models on a dataset")
    common(b)
    b.add_argument("--data", required=True, help="wrench dataset file")
    b.add_argument("--models", default="nh,nhs,pf,pff", help="comma-separated model list")

    g = sub.add_parser("gradcheck", help="finite-difference check of rollout gradients")
    common(g)
    g.add_argument("--model", default=None, help="override the planner model")
    g.add_argument("--threshold", type=float, default=None, help="max relative error")

    e = sub.add_parser("export-plots", help="emit CSV curves from logs")
    e.add_argument("logs", nargs="*", help="trajectory/episode log files")
    e.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "optimize": cmd_optimize,
        "benchmark": cmd_benchmark,
        "gradcheck": cmd_gradcheck,
        "export-plots": cmd_export_plots,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, LogError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepFault, PlanningError, FloatingPointError) as exc:
        print(f"numerical fault: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
