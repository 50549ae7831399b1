"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -s` to see the lines as they
complete. The goal-tracking trend evaluation (criterion 7) runs dozens of
planning episodes and dominates the runtime; e.g.
`pytest -k "not trend"` runs everything else in well under a minute.
"""

import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np
import pytest
import yaml

sys.path.insert(0, os.path.dirname(__file__))
from trend_helpers import run_goal  # noqa: E402

from hydrosim.autodiff import fd_check
from hydrosim.bench import score_dataset, synth_trajectory
from hydrosim.cli import main as cli_main
from hydrosim.contact import MaterialParams, get_model, penetration_fraction
from hydrosim.dynamics import HydroBody, QuasiDynParams, System, init_state, step
from hydrosim.geometry import HalfSpace, SurfaceSamples, sample_surface
from hydrosim.optimizer import CostSpec
from hydrosim.scenarios import build_plant, make_scenario, sample_goals
from hydrosim.se3 import InertiaParams, Pose


def report(num, name, ok, detail):
    line = f"ACCEPTANCE {num} {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    print(line, flush=True)
    assert ok, line


# ---------------------------------------------------------------------
# 1. friction-cone containment on randomized update streams


def test_1_cone_containment():
    t0 = time.time()
    n_pts, n_steps = 2500, 20
    rng = np.random.default_rng(0)
    normals = rng.standard_normal((n_pts, 3))
    normals /= np.linalg.norm(normals, axis=-1, keepdims=True)
    samples = SurfaceSamples(rng.uniform(-0.02, 0.02, (n_pts, 3)), normals,
                             rng.uniform(5e-5, 2e-4, n_pts))
    mat = MaterialParams(8e4, 8e4, 0.6, 400.0)
    shape = HalfSpace([0.0, 0.0, 1.0])
    worst = 0.0
    checked = 0
    for model_name in ("nh", "nhs"):
        model = get_model(model_name)
        obj = Pose.from_parts(rng.uniform(-0.003, 0.003, 3))
        hyd = Pose.identity()
        grid = model.init_grid(shape, samples, obj, hyd)
        for _ in range(n_steps):
            obj2 = Pose.from_parts(np.asarray(obj.t) + rng.uniform(-2e-3, 2e-3, 3))
            hyd2 = Pose.from_parts(np.asarray(hyd.t) + rng.uniform(-1e-3, 1e-3, 3))
            grid = model.update(grid, shape, mat, samples, obj, obj2, hyd, hyd2, 0.02)
            obj, hyd = obj2, hyd2
            n_c = -samples.normals
            fn = np.sum(grid.force * n_c, axis=-1)
            ft = np.linalg.norm(grid.force - fn[:, None] * n_c, axis=-1)
            assert np.all(fn >= -1e-15)
            worst = max(worst, float(np.max(ft - mat.friction * fn)))
            checked += n_pts
    elapsed = time.time() - t0
    report(1, "cone containment", worst <= 1e-9 and elapsed < 10,
           f"{checked} point-updates, worst cone excess {worst:.2e} N, {elapsed:.1f}s")


# ---------------------------------------------------------------------
# 2. stick and slip laws


def test_2_stick_slip_laws():
    t0 = time.time()
    mat = MaterialParams(1e4, 1e4, 0.5, 400.0)
    area = 1e-4
    samples = SurfaceSamples(np.zeros((1, 3)), np.array([[0.0, 0.0, -1.0]]), np.array([area]))
    shape = HalfSpace([0.0, 0.0, 1.0])
    nh = get_model("nh")
    depth, drag = 0.004, 0.0015  # K*A*drag < mu*E*A*depth

    def run(points):
        poses = [Pose.from_parts(p) for p in points]
        grid = nh.init_grid(shape, samples, poses[0], Pose.identity())
        for a, b in zip(poses[:-1], poses[1:]):
            grid = nh.update(grid, shape, mat, samples, a, b, Pose.identity(), Pose.identity(), 0.02)
        return grid.force[0]

    f1 = run([[0, 0, 0.001], [0, 0, -depth], [drag, 0, -depth]])
    f100 = run([[0, 0, 0.001], [0, 0, -depth]] + [[drag * (i + 1) / 100, 0, -depth] for i in range(100)])
    stick_target = np.array([-mat.elastic_tangent * area * drag, 0.0, mat.elastic_normal * area * depth])
    stick_err = max(np.max(np.abs(f1 - stick_target)), np.max(np.abs(f100 - f1)))

    slip_pts = [[0, 0, 0.001], [0, 0, -depth]] + [[0.002 * (i + 1), 0, -depth] for i in range(10)]
    poses = [Pose.from_parts(p) for p in slip_pts]
    grid = nh.init_grid(shape, samples, poses[0], Pose.identity())
    slip_err = 0.0
    fn = mat.elastic_normal * area * depth
    for k, (a, b) in enumerate(zip(poses[:-1], poses[1:])):
        grid = nh.update(grid, shape, mat, samples, a, b, Pose.identity(), Pose.identity(), 0.02)
        if k >= 3:  # past the stick limit
            slip_err = max(slip_err, abs(np.linalg.norm(grid.force[0][:2]) - mat.friction * fn))
    elapsed = time.time() - t0
    report(2, "stick and slip laws", stick_err <= 1e-9 and slip_err <= 1e-9 and elapsed < 1,
           f"stick err {stick_err:.2e} N (1 vs 100 substeps), slip cone err {slip_err:.2e} N, {elapsed:.2f}s")


# ---------------------------------------------------------------------
# 3. path dependence: closed shear loop


def test_3_path_dependence():
    t0 = time.time()
    mat = MaterialParams(1e4, 1e4, 0.5, 400.0)
    samples = SurfaceSamples(np.zeros((1, 3)), np.array([[0.0, 0.0, -1.0]]), np.array([1e-4]))
    shape = HalfSpace([0.0, 0.0, 1.0])
    depth = 0.004
    loop = (
        [[0, 0, 0.001], [0, 0, -depth]]
        + [[0.002 * (i + 1), 0, -depth] for i in range(8)]  # slip out
        + [[0.002 * (7 - i), 0, -depth] for i in range(8)]  # return
        + [[0, 0, -depth], [0, 0, -depth]]  # back at start, at rest
    )

    def terminal(model):
        poses = [Pose.from_parts(p) for p in loop]
        grid = model.init_grid(shape, samples, poses[0], Pose.identity())
        for a, b in zip(poses[:-1], poses[1:]):
            grid = model.update(grid, shape, mat, samples, a, b, Pose.identity(), Pose.identity(), 0.02)
        return grid.force[0]

    f_nh = terminal(get_model("nh"))
    f_pf = terminal(get_model("pf"))
    fn = f_nh[2]
    ft_nh = np.linalg.norm(f_nh[:2])
    ft_pf = np.linalg.norm(f_pf[:2])
    elapsed = time.time() - t0
    ok = ft_nh > 0.5 * mat.friction * fn and ft_pf == 0.0 and elapsed < 1
    report(3, "path dependence", ok,
           f"NH |f_t|={ft_nh:.4g} > 0.5*mu*fn={0.5*mat.friction*fn:.4g}; PF static |f_t|={ft_pf}, {elapsed:.2f}s")


# ---------------------------------------------------------------------
# 4. penetration-fraction grid vs segment-clipping oracle


def test_4_alpha_oracle():
    t0 = time.time()
    grid = np.linspace(-0.05, 0.05, 200)
    pa, pb = np.meshgrid(grid, grid, indexing="ij")
    got = penetration_fraction(pa, pb)

    # oracle: 1000 exact sub-segment clips against phi <= 0
    n_sub = 1000
    inside = np.zeros_like(pa)
    for i in range(n_sub):
        p0 = pa + (pb - pa) * i / n_sub
        p1 = pa + (pb - pa) * (i + 1) / n_sub
        both_in = (p0 <= 0) & (p1 <= 0)
        crossing = ~both_in & ((p0 < 0) | (p1 < 0))
        denom = np.where(crossing, p0 - p1, 1.0)
        tcross = np.where(crossing, p0 / denom, 0.0)
        frac = np.where(p1 < 0, 1.0 - tcross, tcross)
        inside += np.where(both_in, 1.0, np.where(crossing, frac, 0.0))
    expected = inside / n_sub
    err = float(np.max(np.abs(got - expected)))
    elapsed = time.time() - t0
    report(4, "penetration-fraction oracle", err <= 1e-6 and elapsed < 10,
           f"200x200 grid, max |alpha - oracle| = {err:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------
# 5. gradient fidelity on all four scenarios


def test_5_gradient_fidelity():
    t0 = time.time()
    results = {}
    for name in ("planar_pushing", "planar_rotation", "rolling", "inhand_rotation"):
        sc = make_scenario(name, n_points=200)
        model = get_model("nhs")
        plant = build_plant(sc, "nhs", seed=0)
        x0 = plant.measure()
        goal = sample_goals(sc, 10, 5, x0=plant.true_state)[0]
        weights = {k: v / 50.0 for k, v in sc.cost_kwargs.items()}  # keep J = O(1e-2)
        cost = CostSpec(goal=goal.pose, **weights)
        rng = np.random.default_rng(3)
        u = rng.uniform(-1, 1, (10, len(sc.bodies), 6)) * sc.ctrl_limit * 0.5 * sc.mask
        coords = [tuple(c) for c in np.argwhere(np.broadcast_to(sc.mask, u.shape))]
        rep = fd_check(plant.system, x0, u, sc.params, model, cost, delta=(1e-6, 1e-7),
                       coords=coords)
        results[name] = rep.max_rel_err
    elapsed = time.time() - t0
    worst = max(results.values())
    report(5, "gradient fidelity", worst <= 1e-4 and elapsed < 120,
           "; ".join(f"{k}: {v:.2e}" for k, v in results.items()) + f"; {elapsed:.0f}s")


# ---------------------------------------------------------------------
# 6. static equilibrium against the analytic force balance


def test_6_static_equilibrium():
    t0 = time.time()
    mat = MaterialParams(2e5, 5e4, 0.4, 400.0)
    samples = sample_surface(("box", [0.03, 0.03, 0.015]), 240)
    system = System(samples, InertiaParams(0.1, np.eye(3) * 1e-4),
                    (HydroBody("table", HalfSpace([0, 0, 1.0]), mat, controlled=False),))
    model = get_model("nh")
    x = init_state(system, Pose.from_parts([0, 0, 0.015]), [Pose.identity()], model)
    params = QuasiDynParams(h=0.02, epsilon=4.0)
    for _ in range(400):
        x = step(system, x, np.zeros((1, 6)), params, model)
    grid = x.contacts[0]
    in_contact = grid.force[:, 2] > 0
    depth = -np.mean(grid.phi[in_contact])
    area = np.sum(system.samples.areas[in_contact])
    weight = system.inertia.mass * 9.81
    resid = abs(mat.elastic_normal * area * depth - weight) / weight
    elapsed = time.time() - t0
    report(6, "static equilibrium", resid < 0.02 and elapsed < 10,
           f"E*A*d = {mat.elastic_normal * area * depth:.4f} N vs mg = {weight:.4f} N "
           f"({resid:.2%}), {elapsed:.1f}s")


# ---------------------------------------------------------------------
# 7. goal-tracking trends (closed vs open loop, baselines)

TASKS = ("planar_pushing", "planar_rotation", "rolling", "inhand_rotation")
N_GOALS = 10
SEEDS = (0, 1, 2)  # planner/plant seeds cycled across the goals


@pytest.fixture(scope="module")
def trend_rows():
    jobs = []
    for task in TASKS:
        for g in range(N_GOALS):
            jobs.append((task, "nhs", g, SEEDS[g % len(SEEDS)]))
    for task in ("planar_pushing", "planar_rotation", "rolling"):
        for g in range(N_GOALS):
            jobs.append((task, "pff", g, SEEDS[g % len(SEEDS)]))
    for task in ("planar_rotation", "rolling"):
        for g in range(N_GOALS):
            jobs.append((task, "pf", g, SEEDS[g % len(SEEDS)]))
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=2) as pool:
        rows = list(pool.map(run_goal, *zip(*jobs)))
    print(f"\n[trend evaluation: {len(rows)} goal runs in {time.time() - t0:.0f}s]", flush=True)
    return rows


def _mean(rows, planner, task, key):
    vals = [r[key] for r in rows if r["planner"] == planner and r["task"] == task]
    return float(np.mean(vals))


def test_7a_closed_loop_beats_open_loop(trend_rows):
    detail = []
    ok = True
    for task in TASKS:
        cl = _mean(trend_rows, "nhs", task, "cl")
        ol = _mean(trend_rows, "nhs", task, "ol")
        detail.append(f"{task}: CL {cl:.2f} < OL {ol:.2f}")
        ok &= cl < ol
    report("7a", "closed loop beats open loop", ok, "; ".join(detail))


def test_7b_frictionless_fails_to_move(trend_rows):
    detail = []
    ok = True
    for task in ("planar_pushing", "planar_rotation", "rolling"):
        start = _mean(trend_rows, "pff", task, "start")
        cl = _mean(trend_rows, "pff", task, "cl")
        reduction = (start - cl) / start
        detail.append(f"{task}: reduction {reduction:.1%}")
        ok &= reduction < 0.10
    report("7b", "frictionless model moves nothing", ok, "; ".join(detail))


def test_7c_incremental_beats_pressure_field(trend_rows):
    detail = []
    ok = True
    for task in ("planar_rotation", "rolling"):
        nh_cl = _mean(trend_rows, "nhs", task, "cl")
        pf_cl = _mean(trend_rows, "pf", task, "cl")
        detail.append(f"{task}: NH {nh_cl:.2f} < PF {pf_cl:.2f}")
        ok &= nh_cl < pf_cl
    report("7c", "incremental model beats pressure field", ok, "; ".join(detail))


# ---------------------------------------------------------------------
# 8. benchmark-harness closure and ordering


def test_8_benchmark_closure(tmp_path):
    t0 = time.time()
    sc = make_scenario("planar_pushing", n_points=120)
    samples = sample_surface(sc.object_spec, 120)
    pad = sc.bodies[0]
    obj = Pose.from_parts([0, 0, 0.015])
    trajs = []
    for amp in (0.004, 0.006, 0.008):
        path = [Pose.from_parts([0, 0, 0.062])]
        for _ in range(8):
            path.append(Pose.from_parts([0, 0, path[-1].t[2] - 0.00125]))
        for i in range(12):
            path.append(Pose.from_parts([amp * (i + 1) / 12, 0, path[-1].t[2]]))
        trajs.append(synth_trajectory(pad.shape, pad.material, samples, obj, path, "nh"))
    table = score_dataset(pad.shape, pad.material, samples, trajs, ["nh", "pff"])
    elapsed = time.time() - t0
    ok = table["nh"]["mean"] < 1e-9 and table["pff"]["mean"] > table["nh"]["mean"] and elapsed < 60
    report(8, "benchmark closure", ok,
           f"NH self-RMSE {table['nh']['mean']:.2e} N; PFF {table['pff']['mean']:.4g} N on shear-rich data, "
           f"{elapsed:.1f}s")


# ---------------------------------------------------------------------
# 9. determinism: echoed config reruns are byte-identical


def test_9_determinism(tmp_path):
    cfgd = {
        "scenario": {"name": "planar_pushing", "n_points": 80},
        "simulate": {"steps": 4},
        "optimizer": {"n_samples": 4, "n_elites": 2, "grad_iters": 2, "horizon": 3, "episode_len": 3},
        "goals": {"count": 1, "seed": 5},
        "seed": 11,
    }
    cfg_path = tmp_path / "run.yaml"
    cfg_path.write_text(yaml.safe_dump(cfgd))

    identical = []
    for command, produced in (("simulate", ["trajectory.jsonl"]),
                              ("optimize", ["episode_cl_0.jsonl", "episode_ol_0.jsonl", "summary.yaml"])):
        out1 = tmp_path / f"{command}-a"
        out2 = tmp_path / f"{command}-b"
        assert cli_main([command, "--config", str(cfg_path), "--out", str(out1)]) == 0
        echo = out1 / f"{command}-planar_pushing" / "config_echo.yaml"
        assert cli_main([command, "--config", str(echo), "--out", str(out2)]) == 0
        for fname in produced:
            a = (out1 / f"{command}-planar_pushing" / fname).read_bytes()
            b = (out2 / f"{command}-planar_pushing" / fname).read_bytes()
            identical.append((f"{command}/{fname}", a == b))
    ok = all(flag for _, flag in identical)
    report(9, "determinism", ok, "; ".join(f"{name}: {'ok' if f else 'DIFFERS'}" for name, f in identical))
