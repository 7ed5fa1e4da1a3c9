"""Persistent grasp-experience store plus the hand-to-gripper conversion.

A store directory holds one ``manifest.json`` and the FCLD cloud files it
references. Each entry is one experience: object name, task string, task
embedding, feature cloud, cached global descriptor, and a gripper pose in
the cloud's frame. Ingest is single-writer (manifest file lock); loaded
stores are immutable snapshots.
"""

from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np
from filelock import FileLock

from .errors import DegenerateHand, DimMismatch, IoError, ManifestCorrupt, ZeroVector
from .geometry import FeatureCloud, GraspPose, covariance_eigen, centroid, global_descriptor
from .io import grasp_from_dict, grasp_to_dict, read_fcld

__all__ = [
    "MemoryInstance",
    "HandSegments",
    "ingest",
    "load_store",
    "gripper_from_hand",
    "MANIFEST_NAME",
]

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1
_DESC_TOL = 1e-6
_NORM_TOL = 1e-6

# Appendix-style finger-length heuristic: fraction of the hand's principal
# extent. The source construction gives no formula, only "overall dimensions".
FINGER_LENGTH_RATIO = 0.6

_GRASP_SCHEMA = {
    "type": "object",
    "required": ["rotation", "translation", "width", "finger_length"],
    "properties": {
        "rotation": {"type": "array", "minItems": 9, "maxItems": 9, "items": {"type": "number"}},
        "translation": {"type": "array", "minItems": 3, "maxItems": 3, "items": {"type": "number"}},
        "width": {"type": "number"},
        "finger_length": {"type": "number"},
    },
}

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["version", "feature_dim", "embedding_dim", "entries"],
    "properties": {
        "version": {"const": MANIFEST_VERSION},
        "feature_dim": {"type": "integer", "minimum": 0},
        "embedding_dim": {"type": "integer", "minimum": 1},
        "entries": {
            "type": "array",
            "items": {
                "type": "object",
                "required": [
                    "id", "object_name", "task", "task_embedding",
                    "cloud_path", "global_descriptor", "grasp",
                ],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "object_name": {"type": "string"},
                    "task": {"type": "string"},
                    "task_embedding": {"type": "array", "items": {"type": "number"}},
                    "cloud_path": {"type": "string"},
                    "global_descriptor": {"type": "array", "items": {"type": "number"}},
                    "grasp": _GRASP_SCHEMA,
                },
            },
        },
    },
}


@dataclass(frozen=True)
class MemoryInstance:
    """One stored experience: cloud + grasp + task + object name."""

    object_name: str
    task: str
    task_embedding: np.ndarray
    cloud_path: Path
    global_descriptor: np.ndarray
    grasp: GraspPose
    instance_id: int | None = None

    def __post_init__(self):
        emb = np.asarray(self.task_embedding, dtype=np.float64).reshape(-1)
        desc = np.asarray(self.global_descriptor, dtype=np.float64).reshape(-1)
        emb.flags.writeable = False
        desc.flags.writeable = False
        object.__setattr__(self, "task_embedding", emb)
        object.__setattr__(self, "global_descriptor", desc)
        object.__setattr__(self, "cloud_path", Path(self.cloud_path))

    def load_cloud(self) -> FeatureCloud:
        return read_fcld(self.cloud_path)


@dataclass(frozen=True)
class HandSegments:
    """Geometric hand segments; features may be zero-dim."""

    thumb: FeatureCloud
    index_finger: FeatureCloud
    middle_finger: FeatureCloud
    palm: FeatureCloud


def _normalized(vec: np.ndarray, what: str) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < 1e-12:
        raise ZeroVector(f"{what} has (near-)zero norm")
    return vec / norm


def _read_manifest(store_dir: Path) -> dict:
    path = store_dir / MANIFEST_NAME
    try:
        raw = path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ManifestCorrupt(f"{path}: not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, MANIFEST_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ManifestCorrupt(f"{path}: schema violation: {exc.message}") from exc
    return doc


def _write_manifest(store_dir: Path, doc: dict) -> None:
    tmp = store_dir / (MANIFEST_NAME + ".tmp")
    tmp.write_text(json.dumps(doc, indent=2) + "\n")
    tmp.replace(store_dir / MANIFEST_NAME)


def ingest(instance: MemoryInstance, store_dir) -> int:
    """Append an instance to the store; returns its assigned id.

    The cloud file is copied into the store, the global descriptor is
    recomputed from the copied bytes (never trusted from the caller), and
    the task embedding is L2-normalized. Duplicates are allowed: one object
    can hold several grasps, and one task several valid poses.
    """
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    (store_dir / "clouds").mkdir(exist_ok=True)

    cloud = read_fcld(instance.cloud_path)
    embedding = _normalized(np.asarray(instance.task_embedding, dtype=np.float64), "task embedding")

    with FileLock(str(store_dir / (MANIFEST_NAME + ".lock"))):
        if (store_dir / MANIFEST_NAME).exists():
            doc = _read_manifest(store_dir)
        else:
            doc = {
                "version": MANIFEST_VERSION,
                "feature_dim": cloud.feature_dim,
                "embedding_dim": int(embedding.shape[0]),
                "entries": [],
            }
        if cloud.feature_dim != doc["feature_dim"]:
            raise DimMismatch(
                f"cloud feature_dim {cloud.feature_dim} != store feature_dim {doc['feature_dim']}"
            )
        if embedding.shape[0] != doc["embedding_dim"]:
            raise DimMismatch(
                f"embedding dim {embedding.shape[0]} != store embedding_dim {doc['embedding_dim']}"
            )

        new_id = 1 + max((e["id"] for e in doc["entries"]), default=-1)
        rel_path = f"clouds/{new_id:06d}.fcld"
        shutil.copyfile(instance.cloud_path, store_dir / rel_path)
        descriptor = global_descriptor(read_fcld(store_dir / rel_path))

        doc["entries"].append({
            "id": new_id,
            "object_name": instance.object_name,
            "task": instance.task,
            "task_embedding": [float(v) for v in embedding],
            "cloud_path": rel_path,
            "global_descriptor": [float(v) for v in descriptor],
            "grasp": grasp_to_dict(instance.grasp),
        })
        _write_manifest(store_dir, doc)
    return new_id


def load_store(store_dir) -> list[MemoryInstance]:
    """Load all instances whose invariants check out.

    Entries with missing cloud files, dimension drift, a stale cached
    descriptor, or a non-unit embedding are logged and skipped; the rest
    come back as an immutable snapshot.
    """
    store_dir = Path(store_dir)
    doc = _read_manifest(store_dir)
    instances: list[MemoryInstance] = []
    for entry in doc["entries"]:
        label = f"entry {entry['id']} ({entry['object_name']}/{entry['task']})"
        cloud_path = store_dir / entry["cloud_path"]
        try:
            cloud = read_fcld(cloud_path)
        except IoError as exc:
            logger.warning("skipping %s: %s", label, exc)
            continue
        embedding = np.asarray(entry["task_embedding"], dtype=np.float64)
        descriptor = np.asarray(entry["global_descriptor"], dtype=np.float64)
        if cloud.feature_dim != doc["feature_dim"] or embedding.shape[0] != doc["embedding_dim"]:
            logger.warning("skipping %s: dimensions disagree with store header", label)
            continue
        if abs(np.linalg.norm(embedding) - 1.0) > _NORM_TOL:
            logger.warning("skipping %s: task embedding is not unit norm", label)
            continue
        recomputed = global_descriptor(cloud)
        if descriptor.shape != recomputed.shape or np.any(np.abs(descriptor - recomputed) > _DESC_TOL):
            logger.warning("skipping %s: cached global descriptor is stale", label)
            continue
        instances.append(MemoryInstance(
            object_name=entry["object_name"],
            task=entry["task"],
            task_embedding=embedding,
            cloud_path=cloud_path,
            global_descriptor=descriptor,
            grasp=grasp_from_dict(entry["grasp"]),
            instance_id=entry["id"],
        ))
    return instances


def _principal_extent(points: np.ndarray) -> float:
    """Span of the points along their largest-variance axis."""
    cloud = FeatureCloud.geometry_only(points)
    _, evecs = covariance_eigen(cloud)
    proj = points @ evecs[:, 0]
    return float(proj.max() - proj.min())


def gripper_from_hand(segments: HandSegments) -> GraspPose:
    """Collapse hand segments into a parallel-gripper pose.

    Center: midpoint of the thumb centroid and the combined index+middle
    centroid. Closing axis (rotation column 0): thumb toward fingers; the
    flip is immaterial for a symmetric gripper but fixed for determinism.
    Approach axis (column 2): from the palm centroid toward the center,
    orthogonalized against the closing axis. Width is the thumb-to-fingers
    centroid distance; finger length is a fixed fraction of the hand's
    principal extent.
    """
    thumb_c = centroid(segments.thumb)
    fingers = np.vstack([segments.index_finger.points, segments.middle_finger.points])
    fingers_c = fingers.mean(axis=0)
    palm_c = centroid(segments.palm)

    closing = fingers_c - thumb_c
    width = float(np.linalg.norm(closing))
    if width < 1e-12:
        raise DegenerateHand("thumb and finger centroids coincide; closing axis undefined")
    x_axis = closing / width

    translation = 0.5 * (thumb_c + fingers_c)
    approach = translation - palm_c
    approach = approach - (approach @ x_axis) * x_axis
    norm = np.linalg.norm(approach)
    if norm < 1e-12:
        raise DegenerateHand("palm centroid gives no approach direction off the closing axis")
    z_axis = approach / norm
    y_axis = np.cross(z_axis, x_axis)
    rotation = np.column_stack([x_axis, y_axis, z_axis])

    union = np.vstack([
        segments.thumb.points, segments.index_finger.points,
        segments.middle_finger.points, segments.palm.points,
    ])
    finger_length = FINGER_LENGTH_RATIO * _principal_extent(union)
    return GraspPose(rotation=rotation, translation=translation,
                     width=width, finger_length=finger_length)
