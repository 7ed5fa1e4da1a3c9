import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspmem.errors import EmptyCandidates
from graspmem.geometry import GraspPose, SimTransform
from graspmem.synth import random_rotation, random_sim_transform
from graspmem.transfer import (
    CandidateGrasp,
    TransferConfig,
    load_candidates,
    select_grasp,
    task_compatibility,
    transfer_grasp,
)


def pose_at(translation, rotation=None, width=0.04):
    return GraspPose(rotation if rotation is not None else np.eye(3),
                     np.asarray(translation, dtype=np.float64), width, 0.05)


class TestTransferGrasp:
    def test_identity(self, rng):
        g = GraspPose(random_rotation(rng), rng.normal(size=3), 0.04, 0.06)
        out = transfer_grasp(g, SimTransform.identity())
        assert np.allclose(out.rotation, g.rotation)
        assert np.allclose(out.translation, g.translation)
        assert out.width == g.width and out.finger_length == g.finger_length

    def test_pure_scaling(self, rng):
        g = GraspPose(random_rotation(rng), np.array([0.1, 0.2, 0.3]), 0.04, 0.06)
        out = transfer_grasp(g, SimTransform(2.0, np.eye(3), np.zeros(3)))
        assert np.allclose(out.translation, g.translation * 2.0)
        assert out.width == pytest.approx(0.08)
        assert out.finger_length == pytest.approx(0.12)
        assert np.allclose(out.rotation, g.rotation)

    def test_closing_axis_follows_rotation_oracle(self, rng):
        g = GraspPose(random_rotation(rng), rng.normal(size=3), 0.04, 0.06)
        t = random_sim_transform(rng)
        out = transfer_grasp(g, t)
        # matrix-product oracle on the closing axis
        expected_axis = t.rotation @ g.rotation @ np.array([1.0, 0.0, 0.0])
        assert np.max(np.abs(out.closing_axis - expected_axis)) < 1e-12
        expected_t = t.scale * t.rotation @ g.translation + t.translation
        assert np.max(np.abs(out.translation - expected_t)) < 1e-12


class TestTaskCompatibility:
    def test_perfect_match_is_two(self):
        target = pose_at([0.0, 0, 0])
        cand = CandidateGrasp(pose_at([0.0, 0, 0]), 0.5)
        assert task_compatibility(cand, target, TransferConfig()) == pytest.approx(2.0)

    def test_tenth_meter_offset(self):
        # 1 + exp(-0.1^2 / (2 * 0.1^2)) = 1 + exp(-0.5)
        target = pose_at([0.0, 0, 0])
        cand = CandidateGrasp(pose_at([0.1, 0, 0]), 0.5)
        s = task_compatibility(cand, target, TransferConfig(sigma=0.1))
        assert s == pytest.approx(1.0 + math.exp(-0.5), abs=1e-12)

    def test_antipodal_direction_at_target(self):
        target = pose_at([0.0, 0, 0])
        flipped = np.diag([1.0, -1.0, -1.0])  # Rx(pi): approach -z
        cand = CandidateGrasp(pose_at([0.0, 0, 0], rotation=flipped), 0.5)
        assert task_compatibility(cand, target, TransferConfig()) == pytest.approx(0.0, abs=1e-12)

    def test_spin_about_approach_axis_invariant(self, rng):
        target = pose_at(rng.normal(size=3), random_rotation(rng))
        base_rot = random_rotation(rng)
        pos = rng.normal(size=3)
        cfg = TransferConfig()
        ref = task_compatibility(CandidateGrasp(pose_at(pos, base_rot), 0.0), target, cfg)
        for angle in (0.3, 1.2, 2.9):
            c, s = math.cos(angle), math.sin(angle)
            spin = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])  # about local z
            spun = CandidateGrasp(pose_at(pos, base_rot @ spin), 0.0)
            assert task_compatibility(spun, target, cfg) == pytest.approx(ref, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_range(self, seed):
        r = np.random.default_rng(seed)
        target = pose_at(r.normal(size=3), random_rotation(r))
        cand = CandidateGrasp(pose_at(r.normal(size=3), random_rotation(r)), 0.0)
        s = task_compatibility(cand, target, TransferConfig())
        assert -1.0 - 1e-12 <= s <= 2.0 + 1e-12

    def test_strictly_decreasing_in_distance(self):
        target = pose_at([0.0, 0, 0])
        cfg = TransferConfig()
        scores = [task_compatibility(CandidateGrasp(pose_at([d, 0, 0]), 0.0), target, cfg)
                  for d in (0.0, 0.05, 0.1, 0.2, 0.4)]
        assert all(a > b for a, b in zip(scores, scores[1:]))


class TestSelectGrasp:
    def test_single_candidate(self):
        target = pose_at([0.0, 0, 0])
        cand = CandidateGrasp(pose_at([0.3, 0, 0]), 0.9)
        best, ranking = select_grasp([cand], target, TransferConfig())
        assert best.candidate is cand and len(ranking) == 1

    def test_task_dominates_stability(self):
        # paper weights: perfect task fit at zero stability beats the reverse
        target = pose_at([0.0, 0, 0])
        a = CandidateGrasp(pose_at([0.0, 0, 0]), 0.0)        # s_task = 2.0
        far = pose_at([100.0, 0, 0], rotation=np.diag([1.0, -1.0, -1.0]))
        b = CandidateGrasp(far, 1.0)                          # s_task ~ -1
        cfg = TransferConfig(w_task=0.95, w_geo=0.05)
        best, ranking = select_grasp([a, b], target, cfg)
        assert best.candidate is a
        assert best.s_final == pytest.approx(1.9, abs=1e-12)
        assert ranking[1].s_final == pytest.approx(0.95 * ranking[1].s_task + 0.05)

    def test_matches_brute_force_scorer(self, rng):
        target = pose_at(rng.normal(size=3), random_rotation(rng))
        cfg = TransferConfig(sigma=0.15, w_task=0.8, w_geo=0.2)
        candidates = [CandidateGrasp(pose_at(rng.normal(size=3), random_rotation(rng)),
                                     float(rng.uniform()))
                      for _ in range(100)]
        best, ranking = select_grasp(candidates, target, cfg)
        # independent scorer: plain-python argmax with the same tie rule
        def score(c):
            v = [float(target.rotation[i][2]) for i in range(3)]
            o = [float(c.pose.rotation[i][2]) for i in range(3)]
            dot = sum(x * y for x, y in zip(v, o))
            dd = sum((float(a) - float(b)) ** 2
                     for a, b in zip(c.pose.translation, target.translation))
            s_task = dot + math.exp(-dd / (2 * 0.15**2))
            return 0.8 * s_task + 0.2 * c.stability
        scores = [score(c) for c in candidates]
        winner = max(range(len(scores)), key=lambda i: (scores[i], -i))
        assert best.index == winner
        assert abs(best.s_final - scores[winner]) < 1e-12

    def test_tie_breaks_to_lowest_index(self):
        target = pose_at([0.0, 0, 0])
        same = pose_at([0.02, 0, 0])
        cands = [CandidateGrasp(same, 0.5), CandidateGrasp(same, 0.5)]
        best, _ = select_grasp(cands, target, TransferConfig())
        assert best.index == 0

    def test_empty_raises(self):
        with pytest.raises(EmptyCandidates):
            select_grasp([], pose_at([0.0, 0, 0]), TransferConfig())

    def test_ranking_sorted_descending(self, rng):
        target = pose_at([0.0, 0, 0])
        cands = [CandidateGrasp(pose_at(rng.normal(size=3)), float(rng.uniform()))
                 for _ in range(20)]
        _, ranking = select_grasp(cands, target, TransferConfig())
        finals = [s.s_final for s in ranking]
        assert finals == sorted(finals, reverse=True)


class TestLoadCandidates:
    def test_round_trip(self, rng, tmp_path):
        rot = random_rotation(rng)
        path = tmp_path / "cands.json"
        path.write_text(json.dumps([{
            "rotation": [float(v) for v in rot.reshape(-1)],
            "translation": [0.1, 0.2, 0.3],
            "width": 0.05,
            "stability": 0.7,
        }]))
        cands = load_candidates(path)
        assert len(cands) == 1
        assert np.allclose(cands[0].pose.rotation, rot)
        assert cands[0].stability == 0.7

    def test_out_of_range_stability_clamped_with_warning(self, tmp_path, caplog):
        path = tmp_path / "cands.json"
        path.write_text(json.dumps([
            {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0],
             "width": 0.05, "stability": 1.8},
            {"rotation": [1, 0, 0, 0, 1, 0, 0, 0, 1], "translation": [0, 0, 0],
             "width": 0.05, "stability": -0.2},
        ]))
        with caplog.at_level(logging.WARNING, logger="graspmem.transfer"):
            cands = load_candidates(path)
        assert [c.stability for c in cands] == [1.0, 0.0]
        assert sum("clamped" in r.getMessage() for r in caplog.records) == 2


def test_config_validation():
    with pytest.raises(ValueError):
        TransferConfig(sigma=0.0)
    with pytest.raises(ValueError):
        TransferConfig(w_task=-0.1)


def test_stability_affine_rescale_changes_winner_with_wgeo():
    # with w_geo > 0 the winner is NOT invariant to affine stability rescales
    target = pose_at([0.0, 0, 0])
    a = CandidateGrasp(pose_at([0.05, 0, 0]), 0.2)
    b = CandidateGrasp(pose_at([0.06, 0, 0]), 1.0)
    cfg = TransferConfig(w_task=0.5, w_geo=0.5)
    best_before, _ = select_grasp([a, b], target, cfg)
    squeezed = [CandidateGrasp(a.pose, 0.50), CandidateGrasp(b.pose, 0.52)]
    best_after, _ = select_grasp(squeezed, target, cfg)
    assert best_before.index != best_after.index
