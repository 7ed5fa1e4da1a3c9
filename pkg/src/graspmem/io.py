"""File formats: FCLD feature clouds, embedding vectors, grasp JSON, PLY.

FCLD v1 (little-endian, no sidecar header):
    magic "FCLD" | version u32 = 1 | point count N u64 | feature dim D u32
    | N*3 float32 positions | N*D float32 features
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import IoError
from .geometry import FeatureCloud, GraspPose

__all__ = [
    "read_fcld",
    "write_fcld",
    "read_embedding",
    "write_embedding",
    "grasp_to_dict",
    "grasp_from_dict",
    "read_grasp",
    "write_grasp",
    "write_ply_rgb",
]

FCLD_MAGIC = b"FCLD"
FCLD_VERSION = 1
_HEADER = struct.Struct("<4sIQI")

# Candidate-grasp files carry no finger length; samplers do not report one.
DEFAULT_FINGER_LENGTH = 0.05


def write_fcld(path, cloud: FeatureCloud) -> None:
    path = Path(path)
    n, d = len(cloud), cloud.feature_dim
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FCLD_MAGIC, FCLD_VERSION, n, d))
        fh.write(np.ascontiguousarray(cloud.points, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(cloud.features, dtype="<f4").tobytes())


def read_fcld(path) -> FeatureCloud:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read cloud file {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise IoError(f"{path}: truncated header")
    magic, version, n, d = _HEADER.unpack_from(blob)
    if magic != FCLD_MAGIC:
        raise IoError(f"{path}: bad magic {magic!r}")
    if version != FCLD_VERSION:
        raise IoError(f"{path}: unsupported version {version}")
    expect = _HEADER.size + 4 * n * (3 + d)
    if len(blob) != expect:
        raise IoError(f"{path}: size {len(blob)} != expected {expect}")
    pts = np.frombuffer(blob, dtype="<f4", count=3 * n, offset=_HEADER.size)
    feats = np.frombuffer(blob, dtype="<f4", count=n * d, offset=_HEADER.size + 12 * n)
    try:
        return FeatureCloud(pts.reshape(n, 3), feats.reshape(n, d))
    except ValueError as exc:
        raise IoError(f"{path}: invalid cloud data: {exc}") from exc


def write_embedding(path, vec) -> None:
    """Little-endian float32 vector with a u32 dimension header."""
    vec = np.asarray(vec, dtype="<f4").reshape(-1)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", vec.shape[0]))
        fh.write(vec.tobytes())


def read_embedding(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read embedding file {path}: {exc}") from exc
    if len(blob) < 4:
        raise IoError(f"{path}: truncated embedding header")
    (dim,) = struct.unpack_from("<I", blob)
    if len(blob) != 4 + 4 * dim:
        raise IoError(f"{path}: size {len(blob)} != expected {4 + 4 * dim}")
    return np.frombuffer(blob, dtype="<f4", count=dim, offset=4).astype(np.float64)


def grasp_to_dict(grasp: GraspPose) -> dict:
    return {
        "rotation": [float(v) for v in grasp.rotation.reshape(-1)],
        "translation": [float(v) for v in grasp.translation],
        "width": float(grasp.width),
        "finger_length": float(grasp.finger_length),
    }


def grasp_from_dict(obj: dict) -> GraspPose:
    return GraspPose(
        rotation=np.asarray(obj["rotation"], dtype=np.float64).reshape(3, 3),
        translation=np.asarray(obj["translation"], dtype=np.float64),
        width=float(obj["width"]),
        finger_length=float(obj.get("finger_length", DEFAULT_FINGER_LENGTH)),
    )


def read_grasp(path) -> GraspPose:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read grasp file {path}: {exc}") from exc
    try:
        return grasp_from_dict(obj)
    except (KeyError, ValueError, TypeError) as exc:
        raise IoError(f"{path}: invalid grasp record: {exc}") from exc


def write_grasp(path, grasp: GraspPose) -> None:
    Path(path).write_text(json.dumps(grasp_to_dict(grasp), indent=2) + "\n")


def write_ply_rgb(path, points: np.ndarray, rgb01: np.ndarray) -> None:
    """ASCII PLY with per-vertex uchar red/green/blue from [0, 1] floats."""
    points = np.asarray(points, dtype=np.float64)
    rgb = np.rint(np.clip(np.asarray(rgb01, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)
    if points.shape[0] != rgb.shape[0] or rgb.shape[1] != 3:
        raise ValueError("points and rgb01 must both have N rows, rgb01 three columns")
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {points.shape[0]}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "end_header",
    ]
    f32 = points.astype(np.float32)
    for p, c in zip(f32, rgb):
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g} {c[0]} {c[1]} {c[2]}")
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write PLY {path}: {exc}") from exc
