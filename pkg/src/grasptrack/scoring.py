"""Candidate scoring: mean quality minus translation, rotation, and quality
spread penalties, plus best-candidate selection with deterministic tie-breaks."""

from __future__ import annotations

from dataclasses import dataclass

from .evaluator import EvaluationResult
from .se3 import Pose, rotation_angle, translation_distance


@dataclass(frozen=True)
class ScoreWeights:
    k1: float = 5.0  # per meter of translation offset from the seed
    k2: float = 1.0  # per radian of rotation offset from the seed
    k3: float = 0.5  # per unit of quality spread

    def __post_init__(self):
        if self.k1 < 0 or self.k2 < 0 or self.k3 < 0:
            raise ValueError("penalty weights must be non-negative")


@dataclass(frozen=True)
class ScoredGrasp:
    pose: Pose
    score: float
    q_mean: float
    q_spread: float
    t_dist: float
    r_dist: float


def score(candidate: Pose, seed: Pose, ev: EvaluationResult, w: ScoreWeights) -> ScoredGrasp:
    """Score = q_mean - k1*T - k2*R - k3*q_spread; may go negative."""
    t = translation_distance(seed, candidate)
    r = rotation_angle(seed, candidate)
    s = ev.q_mean - w.k1 * t - w.k2 * r - w.k3 * ev.q_spread
    return ScoredGrasp(
        pose=candidate, score=s, q_mean=ev.q_mean, q_spread=ev.q_spread, t_dist=t, r_dist=r
    )


def select_best(scored: list[ScoredGrasp]) -> ScoredGrasp:
    """Maximum-score entry; ties broken by smaller t_dist, then smaller r_dist,
    then lowest index."""
    if not scored:
        raise ValueError("no candidates this frame")
    best = scored[0]
    for g in scored[1:]:
        if g.score > best.score or (
            g.score == best.score
            and (g.t_dist, g.r_dist) < (best.t_dist, best.r_dist)
        ):
            best = g
    return best
