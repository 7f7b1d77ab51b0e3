"""Deterministic synthetic world: analytic primitives, scripted motion, a
raycast wrist depth camera, grasp adjudication, and dataset generation."""

from .adjudicate import (
    GraspDiagnostics,
    OracleEvaluator,
    adjudicate_grasp,
    generate_hard_negatives,
    local_grasp_family,
    oracle_best_grasp,
    oracle_quality,
)
from .camera import CameraConfig, RenderResult, SyntheticFlowProvider, default_camera, ground_truth_flow, render_depth
from .primitives import Box, Cylinder, Sphere
from .scene import External, Linear, MotionScript, RandomWalk, Scene, SimObject, Static, Turntable, step_scene

__all__ = [
    "Box",
    "CameraConfig",
    "Cylinder",
    "External",
    "GraspDiagnostics",
    "Linear",
    "MotionScript",
    "OracleEvaluator",
    "RandomWalk",
    "RenderResult",
    "Scene",
    "SimObject",
    "Sphere",
    "Static",
    "SyntheticFlowProvider",
    "Turntable",
    "adjudicate_grasp",
    "default_camera",
    "generate_hard_negatives",
    "ground_truth_flow",
    "local_grasp_family",
    "oracle_best_grasp",
    "oracle_quality",
    "render_depth",
    "step_scene",
]
