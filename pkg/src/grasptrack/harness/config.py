"""Scenario/run configuration: YAML file over documented defaults, plus the
builders that turn a config into scene, camera, gripper, and tracker pieces."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..cloud import CropBox
from ..evaluator import EvaluatorConfig
from ..flow import FlowConfig
from ..gripper import GripperModel
from ..sampler import SamplingRegion
from ..scoring import ScoreWeights
from ..se3 import Pose, rot_z
from ..sim import Box, Cylinder, External, Linear, RandomWalk, Scene, SimObject, Sphere, Static, Turntable
from ..sim.camera import CameraConfig
from ..flow import Intrinsics
from ..tracker import TrackerConfig


@dataclass
class ServoSection:
    kp: float = 6.0
    v_max: float = 0.15
    w_max: float = 1.5
    approach_kp: float = 60.0  # stiff gain for the open-loop approach leg


@dataclass
class EvaluatorSection:
    kind: str = "heuristic"  # heuristic | oracle | remote
    k: int = 5
    noise_sigma: float = 0.002
    points_per_link: int = 16
    host: str = "127.0.0.1"
    port: int = 7543


@dataclass
class CameraSection:
    width: int = 128
    height: int = 96
    focal: float = 128.0
    near: float = 0.07
    far: float = 0.50
    mount: list = field(default_factory=lambda: [0.0, 0.0, -0.22])
    max_points: int = 2048
    depth_noise_sigma: float = 0.0
    shallow_dropout: bool = False  # emulate depth loss on grazing surfaces
    motion_noise: float = 0.0  # extra depth sigma per m/s of object speed (blur)
    outage_prob: float = 0.0  # chance per frame that a sensor stutter begins
    outage_continue: float = 0.8  # chance each following frame stays blind


@dataclass
class SamplerSection:
    trans_half: list = field(default_factory=lambda: [0.02, 0.02, 0.02])
    angle_half_deg: float = 5.0
    n_nominal: int = 100
    growth: float = 1.3
    max_scale: float = 3.0
    good_threshold: float = 0.5


@dataclass
class ScoreSection:
    k1: float = 5.0
    k2: float = 1.0
    k3: float = 0.5


@dataclass
class FilterSection:
    min_cutoff: float = 1.0
    beta: float = 0.5
    d_cutoff: float = 1.0


@dataclass
class FlowSection:
    enabled: bool = True
    rho: float = 0.06
    min_points: int = 20


@dataclass
class TrackerSection:
    standoff: float = 0.10
    commit_count: int = 5
    commit_tol_t: float = 0.003
    commit_tol_r_deg: float = 5.0
    handover_seed_offset: float = 0.15
    loop_dt: float = 0.05
    lost_frames: int = 40


@dataclass
class GripperSection:
    max_opening: float = 0.08
    finger_length: float = 0.05
    finger_width: float = 0.02
    finger_thickness: float = 0.012
    palm_depth: float = 0.03
    palm_height: float = 0.03


@dataclass
class StaticProtocol:
    trials: int = 100
    perturb_t_max: float = 0.015  # translation inside a ball of this radius
    perturb_r_max_deg: float = 8.0  # rotation angle uniform in [0, this]
    timeout_s: float = 12.0
    evaluator_kind: str = "oracle"
    k: int = 1
    n_nominal: int = 64


@dataclass
class TurntableProtocol:
    radii: list = field(default_factory=lambda: [0.06, 0.10, 0.14])
    omega: float = 2.0 * math.pi / 10.0
    extent_min_deg: float = 60.0
    extent_max_deg: float = 120.0
    trials: int = 40
    settle_timeout_s: float = 10.0
    center: list = field(default_factory=lambda: [0.42, 0.0])
    object_radius: float = 0.034  # sphere on the table
    evaluator_kind: str = "heuristic"
    k: int = 3
    n_nominal: int = 48
    depth_noise_sigma: float = 0.001
    shallow_dropout: bool = True
    outage_prob: float = 0.10
    outage_continue: float = 0.80


@dataclass
class HandoverProtocol:
    timeout_s: float = 20.0
    init_timeout_s: float = 30.0
    trials: int = 10
    evaluator_kind: str = "heuristic"
    k: int = 3
    n_nominal: int = 48
    object_radius: float = 0.034
    walk_speed: float = 0.02
    walk_amplitude: float = 0.04


@dataclass
class BenchSection:
    steps: int = 500
    n_nominal: int = 200
    k: int = 5
    cloud_points: int = 2048


@dataclass
class DatasetSection:
    z_offsets: list = field(default_factory=lambda: [-0.04, -0.02, 0.02, 0.04])
    xy_offsets: list = field(default_factory=lambda: [-0.02, 0.02])
    min_dist: float = 0.01
    max_positives: int = 40
    augment: bool = True
    shards: int = 1


@dataclass
class BridgeSection:
    host: str = "127.0.0.1"
    port: int = 8765
    realtime: bool = True


@dataclass
class HarnessConfig:
    seed: int = 0
    out_dir: str = "runs"
    telemetry_timing: bool = False  # wall times break byte-reproducibility
    scene_objects: list = field(
        default_factory=lambda: [
            {"id": "can", "kind": "cylinder", "radius": 0.034, "height": 0.12, "position": [0.42, 0.0]}
        ]
    )
    table_radius: float = 0.8
    servo: ServoSection = field(default_factory=ServoSection)
    evaluator: EvaluatorSection = field(default_factory=EvaluatorSection)
    camera: CameraSection = field(default_factory=CameraSection)
    sampler: SamplerSection = field(default_factory=SamplerSection)
    score: ScoreSection = field(default_factory=ScoreSection)
    filter: FilterSection = field(default_factory=FilterSection)
    flow: FlowSection = field(default_factory=FlowSection)
    tracker: TrackerSection = field(default_factory=TrackerSection)
    gripper: GripperSection = field(default_factory=GripperSection)
    static_protocol: StaticProtocol = field(default_factory=StaticProtocol)
    turntable_protocol: TurntableProtocol = field(default_factory=TurntableProtocol)
    handover_protocol: HandoverProtocol = field(default_factory=HandoverProtocol)
    bench: BenchSection = field(default_factory=BenchSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)
    bridge: BridgeSection = field(default_factory=BridgeSection)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {f.name: f.type for f in HarnessConfig.__dataclass_fields__.values()}  # type: ignore[attr-defined]


def _apply(dc, data: dict, path: str):
    for key, value in data.items():
        if not hasattr(dc, key):
            raise KeyError(f"unknown config key {path}{key}")
        current = getattr(dc, key)
        if hasattr(current, "__dataclass_fields__") and isinstance(value, dict):
            _apply(current, value, f"{path}{key}.")
        else:
            setattr(dc, key, value)


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> HarnessConfig:
    cfg = HarnessConfig()
    if path is not None:
        with open(path) as f:
            data = yaml.safe_load(f) or {}
        _apply(cfg, data, "")
    if overrides:
        _apply(cfg, overrides, "")
    return cfg


# --- builders ---


def _shape_from_spec(spec: dict):
    kind = spec["kind"]
    if kind == "cylinder":
        return Cylinder(radius=spec["radius"], height=spec["height"])
    if kind == "sphere":
        return Sphere(radius=spec["radius"])
    if kind == "box":
        return Box(*spec["size"])
    raise ValueError(f"unknown object kind {kind!r}")


def _shape_height(shape) -> float:
    if isinstance(shape, Cylinder):
        return shape.height
    if isinstance(shape, Sphere):
        return 2 * shape.radius
    return shape.size_z


def _script_from_spec(spec: dict | None):
    if not spec:
        return Static()
    kind = spec.get("kind", "static")
    if kind == "static":
        return Static()
    if kind == "linear":
        return Linear(velocity=np.asarray(spec["velocity"], dtype=float))
    if kind == "turntable":
        return Turntable(
            radius=spec["radius"],
            omega=spec["omega"],
            extent=spec["extent"],
            direction=spec.get("direction", 1),
            center=np.asarray(spec.get("center", [0.0, 0.0]), dtype=float),
        )
    if kind == "random_walk":
        return RandomWalk(
            speed_max=spec.get("speed_max", 0.02),
            rot_max=spec.get("rot_max", 0.2),
            seed=spec.get("seed", 0),
            amplitude=spec.get("amplitude", 0.05),
        )
    if kind == "external":
        return External()
    raise ValueError(f"unknown script kind {kind!r}")


def object_from_spec(spec: dict) -> SimObject:
    shape = _shape_from_spec(spec)
    pos = spec.get("position", [0.4, 0.0])
    z = spec.get("z", _shape_height(shape) / 2.0)
    yaw = math.radians(spec.get("yaw_deg", 0.0))
    pose = Pose(rot_z(yaw), np.array([pos[0], pos[1], z]))
    return SimObject(spec["id"], shape, pose, script=_script_from_spec(spec.get("script")))


def build_scene(cfg: HarnessConfig) -> Scene:
    return Scene(
        objects=tuple(object_from_spec(s) for s in cfg.scene_objects),
        table_radius=cfg.table_radius,
    )


def build_camera(cfg: HarnessConfig) -> CameraConfig:
    c = cfg.camera
    k = Intrinsics(
        fx=c.focal, fy=c.focal, cx=(c.width - 1) / 2.0, cy=(c.height - 1) / 2.0,
        width=c.width, height=c.height,
    )
    return CameraConfig(
        intrinsics=k, near=c.near, far=c.far, mount=Pose.from_translation(*c.mount)
    )


def build_gripper(cfg: HarnessConfig) -> GripperModel:
    g = cfg.gripper
    return GripperModel(
        max_opening=g.max_opening,
        finger_length=g.finger_length,
        finger_width=g.finger_width,
        finger_thickness=g.finger_thickness,
        palm_depth=g.palm_depth,
        palm_height=g.palm_height,
    )


def build_region(cfg: HarnessConfig, n_nominal: int | None = None) -> SamplingRegion:
    s = cfg.sampler
    return SamplingRegion(
        trans_half_nominal=np.asarray(s.trans_half, dtype=float),
        pitch_half_nominal=math.radians(s.angle_half_deg),
        yaw_half_nominal=math.radians(s.angle_half_deg),
        max_scale=s.max_scale,
        growth=s.growth,
        n_nominal=n_nominal if n_nominal is not None else s.n_nominal,
        good_threshold=s.good_threshold,
    )


def build_weights(cfg: HarnessConfig) -> ScoreWeights:
    return ScoreWeights(k1=cfg.score.k1, k2=cfg.score.k2, k3=cfg.score.k3)


def build_eval_cfg(cfg: HarnessConfig, k: int | None = None) -> EvaluatorConfig:
    return EvaluatorConfig(
        k=k if k is not None else cfg.evaluator.k, noise_sigma=cfg.evaluator.noise_sigma
    )


def build_flow_cfg(cfg: HarnessConfig) -> FlowConfig:
    return FlowConfig(rho=cfg.flow.rho, min_points=cfg.flow.min_points)


def build_tracker_cfg(cfg: HarnessConfig, max_cloud_points: int | None = None) -> TrackerConfig:
    t = cfg.tracker
    return TrackerConfig(
        standoff=t.standoff,
        commit_count=t.commit_count,
        commit_tol_t=t.commit_tol_t,
        commit_tol_r=math.radians(t.commit_tol_r_deg),
        handover_seed_offset=t.handover_seed_offset,
        loop_dt=t.loop_dt,
        lost_frames=t.lost_frames,
        approach_v_max=cfg.servo.v_max,
        max_cloud_points=max_cloud_points if max_cloud_points is not None else cfg.camera.max_points,
    )


def default_crop_box() -> CropBox:
    return CropBox()
