"""Candidate generation around the seed grasp and the dynamic region scaling
policy: grow the region and sample count by a fixed factor while no good grasp
is found, revert to nominal as soon as one is."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from decimal import Decimal

import numpy as np

from .se3 import EulerPerturbation, Pose, compose, euler_to_pose


def _dec(x: float) -> Decimal:
    return Decimal(str(x))


@dataclass(frozen=True)
class SamplingRegion:
    """Nominal perturbation bounds plus the current scale factor.

    Roll is identically zero by construction (the roll axis matches the finger
    closure direction), so only pitch/yaw half-ranges exist.
    """

    trans_half_nominal: np.ndarray = field(default_factory=lambda: np.full(3, 0.02))
    pitch_half_nominal: float = math.radians(5.0)
    yaw_half_nominal: float = math.radians(5.0)
    scale: float = 1.0
    max_scale: float = 3.0
    growth: float = 1.3
    n_nominal: int = 200
    good_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(
            self, "trans_half_nominal", np.asarray(self.trans_half_nominal, dtype=np.float64)
        )
        if not 1.0 <= self.scale <= self.max_scale:
            raise ValueError(f"scale {self.scale} outside [1, {self.max_scale}]")

    @property
    def n_current(self) -> int:
        """Sample count at the current scale; counts scale with the region."""
        return int(math.ceil(_dec(self.n_nominal) * _dec(self.scale)))


def sample_candidates(seed: Pose, region: SamplingRegion, rng_seed: int) -> list[Pose]:
    """Perturbed grasp candidates around the seed, the seed itself first.

    Translations are uniform per axis in +/-(trans_half_nominal * scale),
    pitch/yaw uniform in their scaled half-ranges, roll always zero. The
    unperturbed seed is injected as candidate 0 so the previous best grasp can
    always be rediscovered, even on an adversarial draw.
    """
    n = max(1, region.n_current)
    candidates = [seed]
    if n == 1:
        return candidates
    rng = np.random.default_rng(rng_seed)
    t_half = region.trans_half_nominal * region.scale
    trans = rng.uniform(-t_half, t_half, size=(n - 1, 3))
    pitch = rng.uniform(-1.0, 1.0, size=n - 1) * (region.pitch_half_nominal * region.scale)
    yaw = rng.uniform(-1.0, 1.0, size=n - 1) * (region.yaw_half_nominal * region.scale)
    for i in range(n - 1):
        delta = euler_to_pose(EulerPerturbation(pitch=pitch[i], yaw=yaw[i], translation=trans[i]))
        candidates.append(compose(seed, delta))
    return candidates


def update_scale(region: SamplingRegion, best_score: float) -> SamplingRegion:
    """Apply the scaling policy given this iteration's best score.

    Below the threshold the scale multiplies by the growth factor (capped at
    max_scale); above it the region reverts to nominal. A score exactly at the
    threshold leaves the scale unchanged. Updates run in decimal arithmetic so
    repeated growth yields the exact trace 1.3, 1.69, 2.197, ... rather than
    accumulating binary round-off.
    """
    if best_score < region.good_threshold:
        grown = _dec(region.scale) * _dec(region.growth)
        new_scale = min(float(grown), region.max_scale)
        return replace(region, scale=new_scale)
    if best_score > region.good_threshold:
        return replace(region, scale=1.0)
    return region
