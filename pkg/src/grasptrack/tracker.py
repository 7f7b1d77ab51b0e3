"""Per-frame closed-loop state machine: bias the seed by the last motion
estimate, sample candidates, evaluate, score, select, rescale the region,
filter the output pose, and drive the grasping phase logic. Also houses the
proportional cartesian servo used to move the simulated tool."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .cloud import CropBox
from .evaluator import EvaluationError, Evaluator, EvaluatorConfig, evaluate_candidates
from .flow import DepthFrame, FlowConfig, FlowProvider, frame_to_cloud, lift_flow, seed_bias
from .gripper import GripperModel
from .pose_filter import FilterState, filter_pose
from .sampler import SamplingRegion, sample_candidates, update_scale
from .scoring import ScoredGrasp, ScoreWeights, score, select_best
from .se3 import Pose, compose, matrix_to_quat, quat_to_matrix, rotation_angle, translation_distance


class Phase(str, Enum):
    HANDOVER_INIT = "handover_init"
    TRACK = "track"
    APPROACH = "approach"
    CLOSED = "closed"
    LOST = "lost"


@dataclass(frozen=True)
class TrackerConfig:
    standoff: float = 0.10  # pre-grasp retraction along the approach axis
    commit_count: int = 5  # consecutive in-tolerance steps before approach
    commit_tol_t: float = 0.01
    commit_tol_r: float = math.radians(5.0)
    handover_seed_offset: float = 0.15  # seed distance ahead of the gripper
    loop_dt: float = 0.05
    lost_frames: int = 40  # frames pinned at max scale before giving up
    approach_v_max: float = 0.15  # open-loop approach speed, m/s
    max_cloud_points: int = 2048

    def __post_init__(self):
        if min(
            self.standoff,
            self.commit_tol_t,
            self.commit_tol_r,
            self.handover_seed_offset,
            self.loop_dt,
        ) <= 0 or self.commit_count < 1:
            raise ValueError("tracker config values must be positive")


@dataclass(frozen=True)
class TrackerServices:
    """Everything a tracker step consults besides its own state."""

    evaluator: Evaluator
    eval_cfg: EvaluatorConfig = field(default_factory=EvaluatorConfig)
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    flow_provider: FlowProvider | None = None
    flow_cfg: FlowConfig = field(default_factory=FlowConfig)
    crop_box: CropBox = field(default_factory=CropBox)
    gripper: GripperModel = field(default_factory=GripperModel)
    points_per_link: int = 16
    master_seed: int = 0
    adaptive_region: bool = True  # ablation switch: freeze region scaling when off


@dataclass(frozen=True)
class TrackerState:
    seed: Pose
    region: SamplingRegion
    phase: Phase = Phase.TRACK
    filter: FilterState = field(default_factory=FilterState)
    in_tol_count: int = 0
    lost_count: int = 0
    last_best: ScoredGrasp | None = None
    pending_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_frame: DepthFrame | None = None
    frame_index: int = 0
    committed: Pose | None = None  # frozen grasp target during open-loop approach
    approach_steps_left: int = 0
    commit_anchor: Pose | None = None  # target when the in-tolerance streak began


def pre_grasp_of(grasp: Pose, standoff: float) -> Pose:
    """Pose retracted by `standoff` along the grasp's own approach (+z) axis."""
    if standoff <= 0:
        raise ValueError("standoff must be positive")
    return compose(grasp, Pose.from_translation(0.0, 0.0, -standoff))


def servo_step(
    tool: Pose, target: Pose, kp: float, v_max: float, w_max: float, dt: float
) -> Pose:
    """One proportional cartesian step toward the target, clamped so neither
    translation nor rotation ever overshoots."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = target.translation - tool.translation
    dist = float(np.linalg.norm(err))
    if dist > 1e-12:
        step = min(min(kp * dist, v_max) * dt, dist)
        new_t = tool.translation + err / dist * step
    else:
        new_t = target.translation.copy()

    r_err = tool.rotation.T @ target.rotation
    q = matrix_to_quat(r_err)
    theta = 2.0 * math.acos(min(1.0, abs(q[0])))
    if theta > 1e-12:
        axis = q[1:] / math.sin(theta / 2.0)
        axis /= np.linalg.norm(axis)
        step_angle = min(min(kp * theta, w_max) * dt, theta)
        half = step_angle / 2.0
        dq = np.array([math.cos(half), *(math.sin(half) * axis)])
        new_r = tool.rotation @ quat_to_matrix(dq)
    else:
        new_r = target.rotation.copy()
    return Pose(new_r, new_t)


def _filtered_pose(state: TrackerState) -> Pose:
    """Last filtered output, or the seed before the filter is initialized."""
    if state.filter.initialized:
        return Pose(quat_to_matrix(state.filter.prev_quat), state.filter.prev_translation)
    return state.seed


def _pose_list(p: Pose) -> list[float]:
    q = p.quat()
    return [*(float(v) for v in p.translation), *(float(v) for v in q)]


def step(
    state: TrackerState,
    frame: DepthFrame,
    tool: Pose,
    services: TrackerServices,
    cfg: TrackerConfig,
) -> tuple[TrackerState, Pose, dict]:
    """Advance the tracker by one frame; returns (state, servo target, telemetry).

    Pipeline per frame: apply the pending motion bias to the seed, sample
    candidates, evaluate, score and select, rescale the region, low-pass the
    best pose for the controller, adopt the unfiltered best as the next seed,
    and derive the next bias from this frame pair. In the handover
    initialization phase the seed is pinned until a good-enough score appears.
    During the open-loop approach no evaluation runs: the camera is assumed
    unreliable that close, so the committed target is driven blind.
    """
    timings: dict[str, float] = {}
    t0 = time.perf_counter()

    if state.phase is Phase.CLOSED:
        target = state.committed if state.committed is not None else tool
        telemetry = _telemetry(
            state, state.last_best, _filtered_pose(state), tool, target, timings,
            frame_index=state.frame_index, t=frame.timestamp,
        )
        return replace(state, frame_index=state.frame_index + 1, prev_frame=frame), target, telemetry

    if state.phase is Phase.APPROACH:
        target = state.committed
        steps_left = state.approach_steps_left - 1
        new_state = replace(
            state,
            approach_steps_left=steps_left,
            phase=Phase.CLOSED if steps_left <= 0 else Phase.APPROACH,
            frame_index=state.frame_index + 1,
            prev_frame=frame,
        )
        telemetry = _telemetry(
            new_state, state.last_best, _filtered_pose(state), tool, target, timings,
            frame_index=state.frame_index, t=frame.timestamp,
        )
        return new_state, target, telemetry

    # (1) motion bias shifts the sampling region center before anything else
    seed = state.seed
    if state.phase is Phase.TRACK and np.any(state.pending_bias):
        seed = Pose(seed.rotation, seed.translation + state.pending_bias)

    seeds = np.random.SeedSequence([services.master_seed, state.frame_index])
    seed_sample, seed_eval = (int(s.generate_state(1)[0]) for s in seeds.spawn(2))

    # (2) candidates
    t1 = time.perf_counter()
    candidates = sample_candidates(seed, state.region, seed_sample)
    timings["sample"] = time.perf_counter() - t1

    # (3) evaluation over the scene cloud
    t1 = time.perf_counter()
    scene_cloud = frame_to_cloud(frame, max_points=cfg.max_cloud_points)
    timings["cloud"] = time.perf_counter() - t1
    t1 = time.perf_counter()
    failure = False
    try:
        results = evaluate_candidates(
            candidates,
            scene_cloud,
            services.evaluator,
            services.eval_cfg,
            seed_eval,
            box=services.crop_box,
            gripper=services.gripper,
            points_per_link=services.points_per_link,
        )
    except EvaluationError:
        failure = True
        results = []
    timings["evaluate"] = time.perf_counter() - t1

    # (4) score and select
    t1 = time.perf_counter()
    if failure:
        best = None
        best_score = -math.inf
    else:
        scored = [score(c, seed, r, services.weights) for c, r in zip(candidates, results)]
        best = select_best(scored)
        best_score = best.score
    timings["score"] = time.perf_counter() - t1

    # (5) region rescaling (frozen at nominal when the ablation disables it)
    region = update_scale(state.region, best_score) if services.adaptive_region else state.region

    phase = state.phase
    filter_state = state.filter
    filtered = _filtered_pose(state)
    new_seed = state.seed
    lost_count = state.lost_count
    in_tol = state.in_tol_count
    committed = state.committed
    approach_steps = state.approach_steps_left
    commit_anchor = state.commit_anchor

    good = best_score > state.region.good_threshold
    if state.phase is Phase.HANDOVER_INIT:
        # seed pinned until the first good grasp appears
        if good:
            phase = Phase.TRACK
            new_seed = best.pose
            filter_state, filtered = filter_pose(state.filter, best.pose, cfg.loop_dt)
        target = tool
    else:
        if not failure:
            # (6) filter for the controller, (7) unfiltered best becomes the seed
            filter_state, filtered = filter_pose(state.filter, best.pose, cfg.loop_dt)
            new_seed = best.pose
        target = pre_grasp_of(filtered, cfg.standoff)

        if state.phase is Phase.TRACK:
            # commit logic: the tool must hold one consistent pre-grasp pose;
            # a target that keeps moving (tracked object in motion) breaks the
            # streak even if the servo is glued to it
            tool_ok = (
                translation_distance(tool, target) <= cfg.commit_tol_t
                and rotation_angle(tool, target) <= cfg.commit_tol_r
            )
            anchor_ok = commit_anchor is not None and (
                translation_distance(commit_anchor, target) <= cfg.commit_tol_t
                and rotation_angle(commit_anchor, target) <= cfg.commit_tol_r
            )
            # only count frames where the current best is actually rated good:
            # a sensor dropout or a lost object must never ripen a commit
            if tool_ok and good and (in_tol == 0 or anchor_ok):
                if in_tol == 0:
                    commit_anchor = target
                in_tol += 1
            else:
                in_tol = 0
                commit_anchor = None
            if in_tol >= cfg.commit_count:
                phase = Phase.APPROACH
                committed = filtered
                approach_steps = max(
                    1, math.ceil(cfg.standoff / (cfg.approach_v_max * cfg.loop_dt))
                )
                target = committed

        # loss of track: region pinned at max scale with no good grasp in sight
        if region.scale >= region.max_scale and not good:
            lost_count += 1
        else:
            lost_count = 0
        if phase is Phase.TRACK and lost_count >= cfg.lost_frames:
            phase = Phase.LOST
        elif state.phase is Phase.LOST and good:
            phase = Phase.TRACK
            lost_count = 0

    # (8) next-frame bias from this frame pair
    t1 = time.perf_counter()
    bias = np.zeros(3)
    if (
        services.flow_provider is not None
        and state.prev_frame is not None
        and phase is Phase.TRACK
    ):
        flow = services.flow_provider.flow2d(state.prev_frame, frame)
        flow3d = lift_flow(flow, state.prev_frame, frame)
        bias = seed_bias(flow3d, Pose(new_seed.rotation, new_seed.translation), services.flow_cfg, cfg.loop_dt)
    timings["flow"] = time.perf_counter() - t1
    timings["total"] = time.perf_counter() - t0

    new_state = replace(
        state,
        seed=new_seed,
        region=region,
        phase=phase,
        filter=filter_state,
        in_tol_count=min(in_tol, cfg.commit_count),
        lost_count=lost_count,
        last_best=best if best is not None else state.last_best,
        pending_bias=bias,
        prev_frame=frame,
        frame_index=state.frame_index + 1,
        committed=committed,
        approach_steps_left=approach_steps,
        commit_anchor=commit_anchor,
    )
    telemetry = _telemetry(
        new_state, best, filtered, tool, target, timings,
        n=len(candidates), frame_index=state.frame_index, t=frame.timestamp,
    )
    return new_state, target, telemetry


def _telemetry(
    state: TrackerState,
    best: ScoredGrasp | None,
    filtered: Pose,
    tool: Pose,
    target: Pose,
    timings: dict,
    n: int = 0,
    frame_index: int = 0,
    t: float = 0.0,
) -> dict:
    rec = {
        "t": t,
        "frame": frame_index,
        "phase": state.phase.value,
        "seed": _pose_list(state.seed),
        "filtered": _pose_list(filtered),
        "tool": _pose_list(tool),
        "target": _pose_list(target),
        "region_scale": state.region.scale,
        "n_candidates": n,
        "bias": [float(v) for v in state.pending_bias],
        "in_tol_count": state.in_tol_count,
    }
    if best is not None:
        rec["best"] = {
            "pose": _pose_list(best.pose),
            "score": best.score,
            "q_mean": best.q_mean,
            "q_spread": best.q_spread,
            "t_dist": best.t_dist,
            "r_dist": best.r_dist,
        }
    rec["timing_ms"] = {k: v * 1000.0 for k, v in timings.items()}
    return rec
