import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grasptrack.evaluator import EvaluationResult
from grasptrack.scoring import ScoredGrasp, ScoreWeights, score, select_best
from grasptrack.se3 import EulerPerturbation, Pose, compose, euler_to_pose


def ev(q_mean, q_spread=0.0):
    return EvaluationResult(q_values=np.array([q_mean]), q_mean=q_mean, q_spread=q_spread)


def test_score_of_seed_with_perfect_quality():
    seed = Pose.identity()
    s = score(seed, seed, ev(1.0), ScoreWeights())
    assert s.score == 1.0
    assert s.t_dist == 0.0 and s.r_dist == 0.0


def test_score_direct_substitution_with_default_weights():
    seed = Pose.identity()
    candidate = compose(
        seed, euler_to_pose(EulerPerturbation(pitch=0.08727, translation=np.array([0.02, 0, 0])))
    )
    s = score(candidate, seed, ev(0.9, q_spread=0.1), ScoreWeights(k1=5.0, k2=1.0, k3=0.5))
    assert s.t_dist == pytest.approx(0.02, abs=1e-12)
    assert s.r_dist == pytest.approx(0.08727, abs=1e-9)
    assert s.score == pytest.approx(0.9 - 0.1 - 0.08727 - 0.05, abs=1e-9)


def test_zero_weights_reduce_to_quality():
    seed = Pose.identity()
    candidate = Pose.from_translation(0.5, 0.5, 0.5)
    s = score(candidate, seed, ev(0.42), ScoreWeights(k1=0, k2=0, k3=0))
    assert s.score == 0.42


def test_score_components_identity():
    rng = np.random.default_rng(0)
    w = ScoreWeights(k1=3.0, k2=0.7, k3=0.2)
    seed = Pose.identity()
    for _ in range(20):
        candidate = Pose.from_translation(*rng.uniform(-0.1, 0.1, 3))
        q, sp = rng.uniform(0, 1), rng.uniform(0, 1)
        s = score(candidate, seed, ev(q, sp), w)
        assert s.score == pytest.approx(
            s.q_mean - w.k1 * s.t_dist - w.k2 * s.r_dist - w.k3 * s.q_spread, abs=1e-12
        )


def test_select_best_single():
    g = score(Pose.identity(), Pose.identity(), ev(0.5), ScoreWeights())
    assert select_best([g]) is g


def test_select_best_tie_break_on_translation():
    a = ScoredGrasp(Pose.identity(), 0.5, 0.5, 0.0, 0.00, 0.0)
    b = ScoredGrasp(Pose.identity(), 0.5, 0.5, 0.0, 0.01, 0.0)
    assert select_best([b, a]) is a
    assert select_best([a, b]) is a


def test_select_best_tie_break_on_rotation_then_index():
    a = ScoredGrasp(Pose.identity(), 0.5, 0.5, 0.0, 0.01, 0.02)
    b = ScoredGrasp(Pose.identity(), 0.5, 0.5, 0.0, 0.01, 0.01)
    c = ScoredGrasp(Pose.identity(), 0.5, 0.5, 0.0, 0.01, 0.01)
    assert select_best([a, b, c]) is b


def test_select_best_matches_linear_scan_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        entries = [
            ScoredGrasp(Pose.identity(), rng.uniform(-1, 1), 0.0, 0.0, rng.uniform(0, 0.1), 0.0)
            for _ in range(rng.integers(1, 30))
        ]
        best = select_best(entries)
        assert best.score == max(e.score for e in entries)


def test_select_best_rejects_empty():
    with pytest.raises(ValueError, match="no candidates"):
        select_best([])


def test_argmax_shift_invariance():
    rng = np.random.default_rng(2)
    seed = Pose.identity()
    w = ScoreWeights()
    cands = [Pose.from_translation(*rng.uniform(-0.02, 0.02, 3)) for _ in range(30)]
    qs = rng.uniform(0, 1, 30)
    base = [score(c, seed, ev(q), w) for c, q in zip(cands, qs)]
    shifted = [score(c, seed, ev(q + 0.2), w) for c, q in zip(cands, qs)]
    pick = lambda entries: next(i for i, e in enumerate(entries) if e is select_best(entries))
    assert pick(base) == pick(shifted)


def test_temporal_consistency_dominance():
    seed = Pose.identity()
    w = ScoreWeights(k1=5.0, k2=1.0, k3=0.5)
    near = score(Pose.from_translation(0.001, 0, 0), seed, ev(0.8, 0.1), w)
    far = score(Pose.from_translation(0.015, 0, 0), seed, ev(0.8, 0.1), w)
    assert select_best([far, near]) is near


def test_lower_spread_wins_at_equal_pose_and_quality():
    seed = Pose.identity()
    w = ScoreWeights()
    p = Pose.from_translation(0.01, 0, 0)
    lo = score(p, seed, ev(0.8, 0.05), w)
    hi = score(p, seed, ev(0.8, 0.50), w)
    assert select_best([hi, lo]) is lo


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 1),
    st.floats(0, 0.05),
    st.floats(0, 0.05),
    st.floats(0, 1),
    st.floats(0, 1),
)
def test_score_monotone_in_penalty_terms(q, t0, dt, sp0, dsp):
    seed = Pose.identity()
    w = ScoreWeights()
    s0 = score(Pose.from_translation(t0, 0, 0), seed, ev(q, sp0), w)
    s1 = score(Pose.from_translation(t0 + dt, 0, 0), seed, ev(q, min(1.0, sp0 + dsp)), w)
    assert s1.score <= s0.score + 1e-12
