"""Closed-loop trial execution: steps the synthetic world, renders the wrist
camera, advances the tracker, servos the simulated tool, and adjudicates the
final grasp."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..evaluator import Evaluator, HeuristicCloudEvaluator, RemoteEvaluator
from ..flow import DepthFrame
from ..pose_filter import FilterState
from ..se3 import Pose, compose
from ..sim import Scene, SyntheticFlowProvider, adjudicate_grasp, render_depth, step_scene
from ..sim.adjudicate import GraspDiagnostics, OracleEvaluator
from ..tracker import (
    Phase,
    TrackerConfig,
    TrackerServices,
    TrackerState,
    pre_grasp_of,
    servo_step,
    step,
)
from .config import (
    HarnessConfig,
    build_camera,
    build_eval_cfg,
    build_flow_cfg,
    build_gripper,
    build_region,
    build_tracker_cfg,
    build_weights,
)


@dataclass
class TrialResult:
    outcome: str  # success | failure | lost | timeout
    frames: int
    telemetry: list[dict] = field(default_factory=list)
    adjudication: GraspDiagnostics | None = None
    track_entry_t: float | None = None
    closed_t: float | None = None
    final_tool: Pose | None = None


def make_evaluator(cfg: HarnessConfig, gripper) -> Evaluator:
    kind = cfg.evaluator.kind
    if kind == "heuristic":
        return HeuristicCloudEvaluator(gripper)
    if kind == "oracle":
        return OracleEvaluator(gripper=gripper)
    if kind == "remote":
        return RemoteEvaluator(cfg.evaluator.host, cfg.evaluator.port)
    raise ValueError(f"unknown evaluator kind {kind!r}")


class ClosedLoopTrial:
    """One tracked grasp attempt against a scripted scene.

    External pose injection (the bridge) goes through `command_object`, which
    swaps the object's base pose at frame boundaries.
    """

    def __init__(
        self,
        cfg: HarnessConfig,
        scene: Scene,
        seed_pose: Pose,
        master_seed: int,
        adaptive: bool = True,
        flow: bool | None = None,
        evaluator: Evaluator | None = None,
        tool0: Pose | None = None,
        phase: Phase = Phase.TRACK,
        n_nominal: int | None = None,
        k: int | None = None,
        freeze_tool: bool = False,
    ):
        self.cfg = cfg
        self.base_scene = scene
        self.camera = build_camera(cfg)
        self.gripper = build_gripper(cfg)
        self.tracker_cfg: TrackerConfig = build_tracker_cfg(cfg)
        self.evaluator = evaluator if evaluator is not None else make_evaluator(cfg, self.gripper)
        flow_on = cfg.flow.enabled if flow is None else flow
        self.flow_provider = SyntheticFlowProvider(self.camera) if flow_on else None
        self.services = TrackerServices(
            evaluator=self.evaluator,
            eval_cfg=build_eval_cfg(cfg, k=k),
            weights=build_weights(cfg),
            flow_provider=self.flow_provider,
            flow_cfg=build_flow_cfg(cfg),
            gripper=self.gripper,
            points_per_link=cfg.evaluator.points_per_link,
            master_seed=master_seed,
            adaptive_region=adaptive,
        )
        self.state = TrackerState(seed=seed_pose, region=build_region(cfg, n_nominal), phase=phase)
        if tool0 is not None:
            self.tool = tool0
        else:
            # arrive from slightly behind the pre-grasp: the navigation that
            # brought the arm here is not part of the loop, but starting with
            # zero servo error would let the commit window fire spuriously
            self.tool = pre_grasp_of(seed_pose, self.tracker_cfg.standoff + 0.04)
        self.freeze_tool = freeze_tool
        self.master_seed = master_seed
        self._noise_rng = np.random.default_rng(
            np.random.SeedSequence([master_seed, 0xD5]).generate_state(1)[0]
        )
        self._outage = False
        self.command_queue: list[tuple[str, Pose]] = []

    def command_object(self, obj_id: str, pose: Pose) -> None:
        self.command_queue.append((obj_id, pose))

    def _object_speed(self, t: float) -> float:
        eps = 1e-4
        a = step_scene(self.base_scene, t)
        b = step_scene(self.base_scene, t + eps)
        fastest = 0.0
        for oa, ob in zip(a.objects, b.objects):
            fastest = max(
                fastest, float(np.linalg.norm(ob.pose.translation - oa.pose.translation)) / eps
            )
        return fastest

    def frame_at(self, t: float) -> tuple[Scene, DepthFrame]:
        for obj_id, pose in self.command_queue:
            self.base_scene = self.base_scene.with_object_pose(obj_id, pose)
        self.command_queue.clear()
        scene_t = step_scene(self.base_scene, t)
        cam_pose = compose(self.tool, self.camera.mount)
        render = render_depth(scene_t, cam_pose, self.camera)
        depth = render.depth
        if self.cfg.camera.outage_prob > 0:
            # bursty sensor stutter: whole frames go blind for a few cycles,
            # the recovery case the dynamic region scaling exists for
            roll = self._noise_rng.random()
            self._outage = roll < (
                self.cfg.camera.outage_continue if self._outage else self.cfg.camera.outage_prob
            )
            if self._outage:
                depth = np.full_like(depth, np.nan)
        if self.cfg.camera.shallow_dropout:
            # real depth cameras lose returns on grazing surfaces: drop pixels
            # whose surface normal is 80-90 degrees off the viewing ray
            view = cam_pose.rotation[:, 2]
            cos = np.abs(render.normals @ view)
            grazing = np.isfinite(depth) & (cos <= math.cos(math.radians(80.0)))
            drop = grazing & (self._noise_rng.random(depth.shape) < 0.7)
            depth = np.where(drop, np.nan, depth)
        sigma = self.cfg.camera.depth_noise_sigma
        if self.cfg.camera.motion_noise > 0:
            # motion blur analog: depth quality degrades with target speed
            sigma += self.cfg.camera.motion_noise * self._object_speed(t)
        if sigma > 0:
            noise = self._noise_rng.normal(scale=sigma, size=depth.shape)
            depth = np.where(np.isfinite(depth), depth + noise, depth)
        if self.flow_provider is not None:
            self.flow_provider.observe(t, scene_t, cam_pose, render)
        frame = DepthFrame(depth, self.camera.intrinsics, t, cam_pose)
        return scene_t, frame

    def step_once(self, frame_index: int) -> tuple[Scene, dict]:
        t = frame_index * self.tracker_cfg.loop_dt
        scene_t, frame = self.frame_at(t)
        if isinstance(self.evaluator, OracleEvaluator):
            self.evaluator.scene = scene_t
        self.state, target, telem = step(self.state, frame, self.tool, self.services, self.tracker_cfg)
        if not self.freeze_tool:
            servo = self.cfg.servo
            kp = servo.approach_kp if self.state.phase is Phase.APPROACH else servo.kp
            self.tool = servo_step(
                self.tool, target, kp, servo.v_max, servo.w_max, self.tracker_cfg.loop_dt
            )
        return scene_t, telem

    def run(self, timeout_s: float) -> TrialResult:
        n_frames = int(math.ceil(timeout_s / self.tracker_cfg.loop_dt))
        telemetry: list[dict] = []
        track_entry_t = None
        for i in range(n_frames):
            prev_phase = self.state.phase
            scene_t, telem = self.step_once(i)
            telemetry.append(telem)
            t = telem["t"]
            if prev_phase is Phase.HANDOVER_INIT and self.state.phase is Phase.TRACK:
                track_entry_t = t
            if self.state.phase is Phase.CLOSED:
                diag = adjudicate_grasp(scene_t, self.tool, self.gripper)
                outcome = "success" if diag.success else "failure"
                return TrialResult(
                    outcome=outcome,
                    frames=i + 1,
                    telemetry=telemetry,
                    adjudication=diag,
                    track_entry_t=track_entry_t,
                    closed_t=t,
                    final_tool=self.tool,
                )
            if self.state.phase is Phase.LOST:
                return TrialResult(
                    outcome="lost",
                    frames=i + 1,
                    telemetry=telemetry,
                    track_entry_t=track_entry_t,
                    final_tool=self.tool,
                )
        return TrialResult(
            outcome="timeout",
            frames=n_frames,
            telemetry=telemetry,
            track_entry_t=track_entry_t,
            final_tool=self.tool,
        )
