"""Grasp transfer and candidate re-scoring.

The retrieved memory grasp is pushed through the final alignment, then the
scene's task-agnostic candidate grasps are ranked by a task-compatibility
score (approach-direction cosine plus Gaussian positional decay around the
transferred pose) blended with the sampler's stability score.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyCandidates, IoError
from .geometry import GraspPose, SimTransform
from .io import DEFAULT_FINGER_LENGTH

__all__ = [
    "CandidateGrasp",
    "TransferConfig",
    "ScoredGrasp",
    "transfer_grasp",
    "task_compatibility",
    "score_candidates",
    "select_grasp",
    "load_candidates",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransferConfig:
    """Eq-style blend weights; task compatibility dominates by default."""

    w_task: float = 0.95
    w_geo: float = 0.05
    sigma: float = 0.1

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.w_task < 0 or self.w_geo < 0:
            raise ValueError("weights must be nonnegative")


@dataclass(frozen=True)
class CandidateGrasp:
    pose: GraspPose
    stability: float

    def __post_init__(self):
        s = float(self.stability)
        if not np.isfinite(s) or not 0.0 <= s <= 1.0:
            raise ValueError("stability must be finite in [0, 1]; clamp at ingest")
        object.__setattr__(self, "stability", s)


@dataclass(frozen=True)
class ScoredGrasp:
    candidate: CandidateGrasp
    s_task: float
    s_final: float
    index: int = -1


def transfer_grasp(memory_grasp: GraspPose, t_final: SimTransform) -> GraspPose:
    """Push a memory-frame grasp through the alignment transform.

    Rotation composes, translation maps through the full similarity, and
    the gripper opening scales with the object.
    """
    return GraspPose(
        rotation=t_final.rotation @ memory_grasp.rotation,
        translation=t_final.apply_points(memory_grasp.translation),
        width=t_final.scale * memory_grasp.width,
        finger_length=t_final.scale * memory_grasp.finger_length,
    )


def task_compatibility(candidate: CandidateGrasp, target: GraspPose,
                       cfg: TransferConfig) -> float:
    """Approach-direction cosine plus Gaussian decay of positional deviation.

    Both approach directions are third rotation columns and hence unit, so
    the cosine reduces to a dot product. Range is [-1, 2]; the two terms are
    summed unweighted, exactly as defined.
    """
    direction = float(target.approach_axis @ candidate.pose.approach_axis)
    offset = candidate.pose.translation - target.translation
    decay = math.exp(-float(offset @ offset) / (2.0 * cfg.sigma**2))
    return direction + decay


def score_candidates(candidates, target: GraspPose,
                     cfg: TransferConfig) -> list[ScoredGrasp]:
    """Score every candidate in input order (no sorting)."""
    out = []
    for i, cand in enumerate(candidates):
        s_task = task_compatibility(cand, target, cfg)
        s_final = cfg.w_task * s_task + cfg.w_geo * cand.stability
        out.append(ScoredGrasp(cand, s_task, s_final, i))
    return out


def select_grasp(candidates, target: GraspPose,
                 cfg: TransferConfig) -> tuple[ScoredGrasp, list[ScoredGrasp]]:
    """Winner by highest blended score plus the full descending ranking.

    Ties break toward the lowest candidate index, in both the winner and
    the ranking order.
    """
    scored = score_candidates(candidates, target, cfg)
    if not scored:
        raise EmptyCandidates("candidate list is empty")
    ranking = sorted(scored, key=lambda s: (-s.s_final, s.index))
    return ranking[0], ranking


def load_candidates(path) -> list[CandidateGrasp]:
    """Candidate grasps from a JSON array; stability clamped to [0, 1].

    Records carry {rotation, translation, width, stability}; finger length
    is not reported by samplers and defaults to a nominal gripper value.
    """
    try:
        records = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read candidates file {path}: {exc}") from exc
    if not isinstance(records, list):
        raise IoError(f"{path}: expected a JSON array of candidate grasps")
    out = []
    for i, rec in enumerate(records):
        try:
            pose = GraspPose(
                rotation=np.asarray(rec["rotation"], dtype=np.float64).reshape(3, 3),
                translation=np.asarray(rec["translation"], dtype=np.float64),
                width=float(rec["width"]),
                finger_length=float(rec.get("finger_length", DEFAULT_FINGER_LENGTH)),
            )
            stability = float(rec["stability"])
        except (KeyError, ValueError, TypeError) as exc:
            raise IoError(f"{path}: candidate {i} invalid: {exc}") from exc
        if not np.isfinite(stability):
            raise IoError(f"{path}: candidate {i} has non-finite stability")
        clamped = min(max(stability, 0.0), 1.0)
        if clamped != stability:
            logger.warning("candidate %d stability %g clamped to %g", i, stability, clamped)
        out.append(CandidateGrasp(pose=pose, stability=clamped))
    return out
