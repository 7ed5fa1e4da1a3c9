"""Average-precision evaluation of the full retrieve-align-transfer loop.

Every scene is pushed through retrieval, alignment, and grasp transfer;
the scene's annotated grasp poses are then ranked by the same blended
score used for selection, and the ranking is reduced to one AP value per
(object, task) instance. Held-out splits drop memory instances sharing
the scene's object or task before retrieval.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alignment import AlignmentConfig, align_detailed
from .errors import GraspMemError, IoError, NoPositives
from .geometry import GraspPose
from .io import grasp_from_dict
from .pca import DEFAULT_PCA_DIM
from .retrieval import exclude_objects, exclude_tasks, retrieve
from .transfer import CandidateGrasp, TransferConfig, score_candidates, transfer_grasp

__all__ = [
    "LabeledGrasp",
    "LabeledGraspSet",
    "EvalReport",
    "FailureRecord",
    "SPLITS",
    "average_precision",
    "evaluate_pipeline",
    "random_baseline",
    "load_labeled_grasps",
]

logger = logging.getLogger(__name__)

SPLITS = ("all", "held_out_objects", "held_out_tasks")


@dataclass(frozen=True)
class LabeledGrasp:
    """An annotated pose; stability defaults to 0 when the set carries none."""

    pose: GraspPose
    label: bool
    stability: float = 0.0


@dataclass(frozen=True)
class LabeledGraspSet:
    object_name: str
    task: str
    grasps: tuple[LabeledGrasp, ...]

    def __post_init__(self):
        grasps = tuple(self.grasps)
        if not grasps:
            raise ValueError("labeled grasp set must be nonempty")
        if not any(g.label for g in grasps):
            raise NoPositives("labeled grasp set needs at least one positive")
        object.__setattr__(self, "grasps", grasps)

    @property
    def positive_rate(self) -> float:
        return sum(1 for g in self.grasps if g.label) / len(self.grasps)


@dataclass(frozen=True)
class FailureRecord:
    object_name: str
    task: str
    stage: str
    message: str
    fallback_ap: float


@dataclass(frozen=True)
class EvalReport:
    """Per-instance APs keyed by (object_name, task), plus their mean.

    Failed scenes are excluded from the mean; each failure record carries
    the positive-rate AP a random ranking would earn on that instance, so
    pipeline errors read as chance, not as zero.
    """

    per_instance_ap: dict
    mean_ap: float
    split: str
    failures: tuple[FailureRecord, ...] = ()

    def to_json_dict(self) -> dict:
        per = [
            {"object_name": k[0], "task": k[1], "ap": v}
            for k, v in sorted(self.per_instance_ap.items())
        ]
        return {
            "split": self.split,
            "mean_ap": self.mean_ap,
            "evaluated": len(per),
            "failure_count": len(self.failures),
            "per_instance": per,
            "failures": [
                {
                    "object_name": f.object_name,
                    "task": f.task,
                    "stage": f.stage,
                    "message": f.message,
                    "fallback_ap": f.fallback_ap,
                }
                for f in self.failures
            ],
        }


def average_precision(scores, labels) -> float:
    """AP over the score-descending ranking, ties kept in input order.

    Uses the step form sum_k precision@k * delta-recall@k, i.e. precision
    summed at each positive's rank divided by the positive count.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise NoPositives("average precision undefined without a positive label")
    order = np.argsort(-scores, kind="stable")
    ranked = labels[order]
    tp = np.cumsum(ranked)
    precision = tp / np.arange(1, len(ranked) + 1)
    return float(precision[ranked].sum() / n_pos)


def _split_exclude(split: str, labeled: LabeledGraspSet):
    if split == "all":
        return None
    if split == "held_out_objects":
        return exclude_objects([labeled.object_name])
    if split == "held_out_tasks":
        return exclude_tasks([labeled.task])
    raise ValueError(f"split must be one of {SPLITS}, got {split!r}")


def _score_labeled(labeled: LabeledGraspSet, target: GraspPose,
                   transfer_cfg: TransferConfig) -> list[float]:
    candidates = [CandidateGrasp(g.pose, g.stability) for g in labeled.grasps]
    return [s.s_final for s in score_candidates(candidates, target, transfer_cfg)]


def _evaluate_scene(scene, store, split, align_cfg, transfer_cfg, pca_dim):
    cloud, query, labeled = scene
    stage = "retrieval"
    try:
        instance, _ = retrieve(query, store, _split_exclude(split, labeled))
        stage = "alignment"
        memory_cloud = instance.load_cloud()
        result = align_detailed(memory_cloud, cloud, align_cfg, pca_dim)
        stage = "transfer"
        target = transfer_grasp(instance.grasp, result.transform)
        scores = _score_labeled(labeled, target, transfer_cfg)
        ap = average_precision(scores, [g.label for g in labeled.grasps])
        return ("ok", ap)
    except (GraspMemError, ValueError) as exc:
        logger.warning("scene %s/%s failed at %s: %s",
                       labeled.object_name, labeled.task, stage, exc)
        return ("failed", FailureRecord(
            object_name=labeled.object_name,
            task=labeled.task,
            stage=stage,
            message=str(exc),
            fallback_ap=labeled.positive_rate,
        ))


def evaluate_pipeline(
    store,
    scenes,
    split: str = "all",
    align_cfg: AlignmentConfig | None = None,
    transfer_cfg: TransferConfig | None = None,
    pca_dim: int = DEFAULT_PCA_DIM,
    threads: int = 1,
) -> EvalReport:
    """Run the full pipeline over (cloud, query, labeled-set) scenes.

    Scenes run independently (optionally in a thread pool); aggregation is
    key-sorted, so the report is identical for any thread count.
    """
    if split not in SPLITS:
        raise ValueError(f"split must be one of {SPLITS}, got {split!r}")
    align_cfg = align_cfg or AlignmentConfig()
    transfer_cfg = transfer_cfg or TransferConfig()
    scenes = list(scenes)

    def job(scene):
        return _evaluate_scene(scene, store, split, align_cfg, transfer_cfg, pca_dim)

    if threads > 1 and len(scenes) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(job, scenes))
    else:
        outcomes = [job(s) for s in scenes]

    per_instance: dict = {}
    failures: list[FailureRecord] = []
    for scene, (kind, payload) in zip(scenes, outcomes):
        labeled = scene[2]
        key = (labeled.object_name, labeled.task)
        if kind == "ok":
            if key in per_instance:
                raise ValueError(f"duplicate evaluation key {key}")
            per_instance[key] = payload
        else:
            failures.append(payload)
    mean_ap = float(np.mean([per_instance[k] for k in sorted(per_instance)])) \
        if per_instance else float("nan")
    return EvalReport(per_instance_ap=per_instance, mean_ap=mean_ap,
                      split=split, failures=tuple(failures))


def random_baseline(scenes, split: str = "all", seed: int = 0) -> EvalReport:
    """Rank each scene's labeled grasps by seeded uniform scores."""
    rng = np.random.default_rng(seed)
    per_instance: dict = {}
    for scene in scenes:
        labeled = scene[2]
        scores = rng.uniform(size=len(labeled.grasps))
        ap = average_precision(scores, [g.label for g in labeled.grasps])
        per_instance[(labeled.object_name, labeled.task)] = ap
    mean_ap = float(np.mean([per_instance[k] for k in sorted(per_instance)])) \
        if per_instance else float("nan")
    return EvalReport(per_instance_ap=per_instance, mean_ap=mean_ap, split=split)


def load_labeled_grasps(path, object_name: str, task: str) -> LabeledGraspSet:
    """Labeled poses from a JSON array of grasp records plus a bool label."""
    try:
        records = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read labeled grasps {path}: {exc}") from exc
    grasps = []
    for i, rec in enumerate(records):
        try:
            grasps.append(LabeledGrasp(
                pose=grasp_from_dict(rec),
                label=bool(rec["label"]),
                stability=float(rec.get("stability", 0.0)),
            ))
        except (KeyError, ValueError, TypeError) as exc:
            raise IoError(f"{path}: labeled grasp {i} invalid: {exc}") from exc
    return LabeledGraspSet(object_name=object_name, task=task, grasps=tuple(grasps))
