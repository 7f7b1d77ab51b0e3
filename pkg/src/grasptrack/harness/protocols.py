"""Experiment protocols: static refinement with a paired open-loop baseline,
the turntable speed x adaptivity grid, scripted handover, flow-bias tracking
error, and the throughput benchmark."""

from __future__ import annotations

import copy
import json
import math
import statistics
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..se3 import Pose, compose, quat_to_matrix
from ..sim import adjudicate_grasp, oracle_best_grasp
from ..sim.adjudicate import feasible_world_grasps
from ..tracker import Phase
from .config import HarnessConfig, build_gripper, build_scene, object_from_spec
from .loop import ClosedLoopTrial
from .telemetry import binomial_ci, write_csv, write_trial_jsonl

TOPDOWN = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


def _trial_seed(master: int, *path: int) -> int:
    return int(np.random.SeedSequence([master, *path]).generate_state(1)[0])


def perturbed_seed(oracle: Pose, rng: np.random.Generator, t_max: float, r_max: float) -> Pose:
    """Initial-proposal error model: translation uniform in a ball of radius
    t_max, rotation about a uniform axis with angle uniform in [0, r_max]."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    t = d * (t_max * rng.random() ** (1.0 / 3.0))
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = r_max * rng.random()
    q = np.array([math.cos(ang / 2.0), *(math.sin(ang / 2.0) * axis)])
    return compose(oracle, Pose(quat_to_matrix(q), t))


def _topdown_near(position, height: float = 0.10) -> Pose:
    return Pose(TOPDOWN, np.array([position[0], position[1], height]))


# --- static tabletop refinement (paired baseline vs closed loop) ---


def run_static(cfg: HarnessConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    proto = cfg.static_protocol
    run_cfg = copy.deepcopy(cfg)
    run_cfg.evaluator.kind = proto.evaluator_kind
    run_cfg.evaluator.k = proto.k
    run_cfg.sampler.n_nominal = proto.n_nominal

    rows = []
    summary = {"objects": {}, "baseline": 0, "closed_loop": 0, "trials": 0}
    for obj_idx, spec in enumerate(cfg.scene_objects):
        scene_cfg = copy.deepcopy(run_cfg)
        scene_cfg.scene_objects = [spec]
        scene = build_scene(scene_cfg)
        obj = scene.objects[0]
        oracle = oracle_best_grasp(scene, _topdown_near(spec.get("position", [0.42, 0.0])), radius=0.3)
        nb = nc = 0
        for t_idx in range(proto.trials):
            rng = np.random.default_rng(_trial_seed(cfg.seed, obj_idx, t_idx))
            seed0 = perturbed_seed(
                oracle, rng, proto.perturb_t_max, math.radians(proto.perturb_r_max_deg)
            )
            # baseline arm: execute the perturbed proposal open loop
            base_ok = adjudicate_grasp(scene, seed0, build_gripper(scene_cfg)).success
            nb += base_ok
            # closed-loop arm: same seed, tracked
            trial = ClosedLoopTrial(
                scene_cfg, scene, seed0, master_seed=_trial_seed(cfg.seed, obj_idx, t_idx, 1)
            )
            res = trial.run(timeout_s=proto.timeout_s)
            closed_ok = res.outcome == "success"
            nc += closed_ok
            write_trial_jsonl(
                out / "trials" / f"static_{obj.obj_id}_{t_idx:03d}.jsonl",
                res.telemetry,
                include_timing=cfg.telemetry_timing,
            )
        summary["objects"][obj.obj_id] = {"baseline": nb, "closed_loop": nc, "trials": proto.trials}
        summary["baseline"] += nb
        summary["closed_loop"] += nc
        summary["trials"] += proto.trials
        for arm, wins in (("baseline", nb), ("closed_loop", nc)):
            rows.append(
                [obj.obj_id, arm, wins, proto.trials, wins / proto.trials,
                 binomial_ci(wins, proto.trials), cfg.seed, cfg.digest()]
            )
    for arm in ("baseline", "closed_loop"):
        wins = summary[arm]
        rows.append(
            ["total", arm, wins, summary["trials"], wins / summary["trials"],
             binomial_ci(wins, summary["trials"]), cfg.seed, cfg.digest()]
        )
    write_csv(
        out / "summary.csv",
        ["object", "arm", "successes", "trials", "rate", "ci95", "seed", "config"],
        rows,
    )
    return summary


# --- turntable speed x adaptivity grid ---


def _turntable_cfg(cfg: HarnessConfig, radius: float, extent: float, direction: int) -> HarnessConfig:
    proto = cfg.turntable_protocol
    run_cfg = copy.deepcopy(cfg)
    run_cfg.evaluator.kind = proto.evaluator_kind
    run_cfg.evaluator.k = proto.k
    run_cfg.sampler.n_nominal = proto.n_nominal
    run_cfg.camera.depth_noise_sigma = proto.depth_noise_sigma
    run_cfg.camera.shallow_dropout = proto.shallow_dropout
    run_cfg.camera.outage_prob = proto.outage_prob
    run_cfg.camera.outage_continue = proto.outage_continue
    cx, cy = proto.center
    run_cfg.scene_objects = [
        {
            "id": "target",
            "kind": "sphere",
            "radius": proto.object_radius,
            "position": [cx + radius, cy],
            "script": {
                "kind": "turntable",
                "radius": radius,
                "omega": proto.omega,
                "extent": extent,
                "direction": direction,
                "center": [cx, cy],
            },
        }
    ]
    return run_cfg


def run_turntable(
    cfg: HarnessConfig, out_dir: str | Path, adaptive_arms: tuple[bool, ...] = (True, False)
) -> dict:
    out = Path(out_dir)
    proto = cfg.turntable_protocol
    rows = []
    summary: dict = {"cells": {}}
    for radius in proto.radii:
        speed_cm_s = radius * proto.omega * 100.0
        for adaptive in adaptive_arms:
            wins = 0
            for t_idx in range(proto.trials):
                # same seeds (hence same extent/direction draws) in both arms
                rng = np.random.default_rng(_trial_seed(cfg.seed, int(radius * 1000), t_idx))
                extent = math.radians(rng.uniform(proto.extent_min_deg, proto.extent_max_deg))
                direction = int(rng.choice([-1, 1]))
                run_cfg = _turntable_cfg(cfg, radius, extent, direction)
                scene = build_scene(run_cfg)
                oracle = oracle_best_grasp(
                    scene, _topdown_near([proto.center[0] + radius, proto.center[1]], 0.12), radius=0.3
                )
                trial = ClosedLoopTrial(
                    run_cfg,
                    scene,
                    oracle,
                    master_seed=_trial_seed(cfg.seed, int(radius * 1000), t_idx, 7),
                    adaptive=adaptive,
                    flow=adaptive,
                )
                move_time = extent / proto.omega
                res = trial.run(timeout_s=move_time + proto.settle_timeout_s)
                ok = (
                    res.outcome == "success"
                    and res.adjudication is not None
                    and res.adjudication.contact is not None
                    and res.adjudication.contact.obj_id == "target"
                )
                wins += ok
                arm = "on" if adaptive else "off"
                write_trial_jsonl(
                    out / "trials" / f"turntable_r{int(radius * 100):02d}_{arm}_{t_idx:03d}.jsonl",
                    res.telemetry,
                    include_timing=cfg.telemetry_timing,
                )
            rows.append(
                [f"{radius:.2f}", f"{speed_cm_s:.1f}", "on" if adaptive else "off",
                 wins, proto.trials, wins / proto.trials, binomial_ci(wins, proto.trials),
                 cfg.seed, cfg.digest()]
            )
            summary["cells"][(radius, adaptive)] = wins / proto.trials
    write_csv(
        out / "summary.csv",
        ["radius_m", "speed_cm_s", "adaptive", "successes", "trials", "rate", "ci95", "seed", "config"],
        rows,
    )
    return summary


# --- scripted handover ---


def handover_tool_pose() -> Pose:
    """Fixed arm pose: approach axis horizontal along +x, closure along +y."""
    rot = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    return Pose(rot, np.array([0.15, 0.0, 0.35]))


def run_handover(cfg: HarnessConfig, out_dir: str | Path) -> dict:
    out = Path(out_dir)
    proto = cfg.handover_protocol
    tool0 = handover_tool_pose()
    seed_pose = compose(tool0, Pose.from_translation(0, 0, cfg.tracker.handover_seed_offset))

    wins = 0
    rows = []
    for t_idx in range(proto.trials):
        run_cfg = copy.deepcopy(cfg)
        run_cfg.evaluator.kind = proto.evaluator_kind
        run_cfg.evaluator.k = proto.k
        run_cfg.sampler.n_nominal = proto.n_nominal
        run_cfg.scene_objects = [
            {
                "id": "offered",
                "kind": "sphere",
                "radius": proto.object_radius,
                "position": [float(seed_pose.translation[0]), float(seed_pose.translation[1])],
                "z": float(seed_pose.translation[2]),
                "script": {
                    "kind": "random_walk",
                    "speed_max": proto.walk_speed,
                    "amplitude": proto.walk_amplitude,
                    "seed": _trial_seed(cfg.seed, 0xA0, t_idx),
                },
            }
        ]
        scene = build_scene(run_cfg)
        trial = ClosedLoopTrial(
            run_cfg,
            scene,
            seed_pose,
            master_seed=_trial_seed(cfg.seed, 0xA1, t_idx),
            tool0=tool0,
            phase=Phase.HANDOVER_INIT,
        )
        res = trial.run(timeout_s=proto.init_timeout_s + proto.timeout_s)
        in_time = (
            res.outcome == "success"
            and res.track_entry_t is not None
            and res.closed_t is not None
            and res.closed_t - res.track_entry_t <= proto.timeout_s
        )
        wins += in_time
        rows.append(
            [t_idx, res.outcome,
             -1.0 if res.track_entry_t is None else res.track_entry_t,
             -1.0 if res.closed_t is None else res.closed_t,
             int(in_time), cfg.seed, cfg.digest()]
        )
        write_trial_jsonl(
            out / "trials" / f"handover_{t_idx:03d}.jsonl",
            res.telemetry,
            include_timing=cfg.telemetry_timing,
        )
    write_csv(
        out / "summary.csv",
        ["trial", "outcome", "track_entry_s", "closed_s", "success", "seed", "config"],
        rows,
    )
    return {"successes": wins, "trials": proto.trials}


# --- flow-bias tracking error (linear-motion scenario) ---


def run_flow_error(cfg: HarnessConfig, out_dir: str | Path, trials: int = 20, frames: int = 80) -> dict:
    """Paired bias-on/bias-off tracking error against the nearest feasible
    grasp while the object translates at constant velocity."""
    out = Path(out_dir)

    def one(bias_on: bool, t_idx: int) -> float:
        run_cfg = copy.deepcopy(cfg)
        run_cfg.evaluator.kind = "oracle"
        run_cfg.evaluator.k = 1
        run_cfg.sampler.n_nominal = 24
        run_cfg.tracker.commit_count = 10_000  # measurement run: never commit
        run_cfg.flow.rho = 0.045
        run_cfg.scene_objects = [
            {
                "id": "mover",
                "kind": "sphere",
                "radius": 0.034,
                "position": [0.38, -0.12],
                "script": {"kind": "linear", "velocity": [0.05, 0.0, 0.0]},
            }
        ]
        scene = build_scene(run_cfg)
        oracle = oracle_best_grasp(scene, _topdown_near([0.38, -0.12]), radius=0.3)
        trial = ClosedLoopTrial(
            run_cfg,
            scene,
            oracle,
            master_seed=_trial_seed(cfg.seed, 0xF0, t_idx),
            adaptive=True,
            flow=bias_on,
        )
        errs = []
        for i in range(frames):
            scene_t, _ = trial.step_once(i)
            feas = feasible_world_grasps(scene_t, scene_t.objects[0], trial.gripper)
            ts = np.stack([g.translation for g in feas])
            errs.append(float(np.linalg.norm(ts - trial.state.seed.translation, axis=1).min()))
        return float(np.median(errs))

    on = [one(True, i) for i in range(trials)]
    off = [one(False, i) for i in range(trials)]
    write_csv(
        out / "flow_error.csv",
        ["trial", "bias_on_median_m", "bias_off_median_m"],
        [[i, on[i], off[i]] for i in range(trials)],
    )
    return {
        "on_median": float(np.median(on)),
        "off_median": float(np.median(off)),
        "trials": trials,
    }


# --- throughput benchmark ---


def bench_rate(cfg: HarnessConfig, out_dir: str | Path) -> dict:
    """Median/p95 tracker-step wall time at the configured batch shape."""
    out = Path(out_dir)
    bench = cfg.bench
    run_cfg = copy.deepcopy(cfg)
    run_cfg.evaluator.kind = "heuristic"
    run_cfg.evaluator.k = bench.k
    run_cfg.sampler.n_nominal = bench.n_nominal
    run_cfg.camera.max_points = bench.cloud_points
    run_cfg.tracker.commit_count = 10_000  # keep measuring, never leave Track
    scene = build_scene(run_cfg)
    oracle = oracle_best_grasp(
        scene, _topdown_near(run_cfg.scene_objects[0].get("position", [0.42, 0.0])), radius=0.3
    )
    trial = ClosedLoopTrial(run_cfg, scene, oracle, master_seed=cfg.seed, freeze_tool=True)

    stage_samples: dict[str, list[float]] = {}
    totals = []
    for i in range(bench.steps):
        t = i * run_cfg.tracker.loop_dt
        scene_t, frame = trial.frame_at(t)
        t0 = time.perf_counter()
        from ..tracker import step as tracker_step

        trial.state, _, telem = tracker_step(
            trial.state, frame, trial.tool, trial.services, trial.tracker_cfg
        )
        totals.append((time.perf_counter() - t0) * 1000.0)
        for stage, ms in telem["timing_ms"].items():
            stage_samples.setdefault(stage, []).append(ms)

    def pct(xs, q):
        return float(np.percentile(xs, q))

    rows = [["step_total", statistics.median(totals), pct(totals, 95)]]
    for stage, xs in sorted(stage_samples.items()):
        rows.append([stage, statistics.median(xs), pct(xs, 95)])
    write_csv(out / "timing.csv", ["stage", "median_ms", "p95_ms"], rows)
    report = {
        "steps": bench.steps,
        "n": bench.n_nominal,
        "k": bench.k,
        "cloud_points": bench.cloud_points,
        "median_ms": statistics.median(totals),
        "p95_ms": pct(totals, 95),
    }
    with open(out / "bench.json", "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
    return report
