"""Feature-cloud and pose primitives shared by every stage of the pipeline.

A FeatureCloud is the unit of registration: N points in meters plus one
D-dimensional embedding vector per point. Geometric transforms never touch
the feature rows; features are baked in at extraction time and ride along
unchanged. All types are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateCloud

__all__ = [
    "FeatureCloud",
    "GraspPose",
    "SimTransform",
    "NeighborIndex",
    "centroid",
    "covariance_eigen",
    "global_descriptor",
    "apply_transform",
    "bbox_diagonal",
]

_ROT_TOL = 1e-6

# Relative gap below which two neighbor distances are treated as a potential
# tie and resolved by an exact scan (tie-break: lowest point index).
_TIE_REL = 1e-9


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def _check_rotation(r: np.ndarray, name: str) -> np.ndarray:
    r = np.ascontiguousarray(np.asarray(r, dtype=np.float64))
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise ValueError(f"{name} must be a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - np.eye(3))) > _ROT_TOL:
        raise ValueError(f"{name} is not orthonormal within {_ROT_TOL}")
    if abs(np.linalg.det(r) - 1.0) > _ROT_TOL:
        raise ValueError(f"{name} must have determinant +1")
    return r


def _check_vec3(v, name: str) -> np.ndarray:
    v = np.ascontiguousarray(np.asarray(v, dtype=np.float64)).reshape(-1)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError(f"{name} must be a finite 3-vector")
    return v


@dataclass(frozen=True)
class FeatureCloud:
    """Points (N, 3) in meters with per-point features (N, D).

    D == 0 is allowed for geometry-only clouds (e.g. hand segments).
    """

    points: np.ndarray
    features: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("points must have shape (N, 3) with N >= 1")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points contain non-finite values")
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2 or feats.shape[0] != pts.shape[0]:
            raise ValueError("features must have shape (N, D) matching points")
        if feats.size and not np.all(np.isfinite(feats)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "features", _frozen(feats))

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def geometry_only(cls, points) -> "FeatureCloud":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.zeros((pts.shape[0], 0)))

    def with_features(self, features) -> "FeatureCloud":
        """Same geometry, new feature matrix."""
        return FeatureCloud(self.points, features)


@dataclass(frozen=True)
class GraspPose:
    """6-DOF parallel-gripper pose.

    The gripper approach direction is the third rotation column (z-axis);
    the closing axis is the first column. width and finger_length are meters.
    """

    rotation: np.ndarray
    translation: np.ndarray
    width: float
    finger_length: float

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(_check_rotation(self.rotation, "rotation")))
        object.__setattr__(self, "translation", _frozen(_check_vec3(self.translation, "translation")))
        object.__setattr__(self, "width", float(self.width))
        object.__setattr__(self, "finger_length", float(self.finger_length))
        if not (np.isfinite(self.width) and self.width > 0):
            raise ValueError("width must be positive and finite")
        if not (np.isfinite(self.finger_length) and self.finger_length > 0):
            raise ValueError("finger_length must be positive and finite")

    @property
    def approach_axis(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def closing_axis(self) -> np.ndarray:
        return self.rotation[:, 0]


@dataclass(frozen=True)
class SimTransform:
    """Similarity transform: apply(p) = scale * rotation @ p + translation."""

    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "scale", float(self.scale))
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise ValueError("scale must be positive and finite")
        object.__setattr__(self, "rotation", _frozen(_check_rotation(self.rotation, "rotation")))
        object.__setattr__(self, "translation", _frozen(_check_vec3(self.translation, "translation")))

    @classmethod
    def identity(cls) -> "SimTransform":
        return cls(1.0, np.eye(3), np.zeros(3))

    @classmethod
    def from_centroids(cls, scale: float, rotation, c_src, c_dst) -> "SimTransform":
        """Build p -> scale * rotation @ (p - c_src) + c_dst."""
        rotation = np.asarray(rotation, dtype=np.float64)
        c_src = np.asarray(c_src, dtype=np.float64)
        c_dst = np.asarray(c_dst, dtype=np.float64)
        return cls(scale, rotation, c_dst - scale * rotation @ c_src)

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return self.scale * pts @ self.rotation.T + self.translation

    def inverse(self) -> "SimTransform":
        inv_s = 1.0 / self.scale
        inv_r = self.rotation.T
        return SimTransform(inv_s, inv_r, -inv_s * inv_r @ self.translation)

    def compose(self, other: "SimTransform") -> "SimTransform":
        """Transform applying ``other`` first, then ``self``."""
        return SimTransform(
            self.scale * other.scale,
            self.rotation @ other.rotation,
            self.scale * self.rotation @ other.translation + self.translation,
        )


class NeighborIndex:
    """Read-only k-nearest-neighbor index over a cloud's points.

    Queries return neighbors ordered by (distance, point index); distance
    ties are broken by the lowest point index so results are deterministic
    and reproducible against a brute-force scan.
    """

    def __init__(self, cloud: FeatureCloud | np.ndarray):
        pts = cloud.points if isinstance(cloud, FeatureCloud) else np.asarray(cloud, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError("index needs points of shape (N, 3), N >= 1")
        self._points = _frozen(np.ascontiguousarray(pts))
        self._tree = cKDTree(self._points)

    def __len__(self) -> int:
        return self._points.shape[0]

    def _exact_row(self, point: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        sq = np.sum((self._points - point) ** 2, axis=1)
        order = np.argsort(sq, kind="stable")[:k]
        return np.sqrt(sq[order]), order

    def query_many(self, points: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Distances and indices of the k nearest points for each query row.

        Returns ``(dists, idxs)`` both of shape (M, k_eff) with
        k_eff = min(k, len(index)).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n = len(self)
        k_eff = min(int(k), n)
        if k_eff < 1:
            raise ValueError("k must be >= 1")
        kq = min(k_eff + 1, n)
        _, raw_idx = self._tree.query(pts, k=kq)
        raw_idx = np.atleast_2d(raw_idx.reshape(pts.shape[0], kq))
        # Re-derive squared distances in numpy so ordering (and the brute
        # force oracle) share one arithmetic path, then sort by (d, index).
        cand = self._points[raw_idx]
        sq = np.sum((cand - pts[:, None, :]) ** 2, axis=2)
        order = np.lexsort((raw_idx, sq), axis=1)
        sq_sorted = np.take_along_axis(sq, order, axis=1)
        idx_sorted = np.take_along_axis(raw_idx, order, axis=1)

        dists = np.sqrt(sq_sorted[:, :k_eff])
        idxs = idx_sorted[:, :k_eff]
        if kq > k_eff:
            # A tie straddling the k-th place may hide a lower-index point
            # outside the kq candidates; resolve those rows exactly.
            gap = dists[:, -1] - np.sqrt(sq_sorted[:, k_eff])
            close = np.abs(gap) <= _TIE_REL * (1.0 + dists[:, -1])
            for row in np.nonzero(close)[0]:
                dists[row], idxs[row] = self._exact_row(pts[row], k_eff)
        return dists, idxs

    def query(self, point, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbors of a single point: (distances, indices)."""
        d, i = self.query_many(np.asarray(point, dtype=np.float64).reshape(1, 3), k)
        return d[0], i[0]


def centroid(cloud: FeatureCloud) -> np.ndarray:
    """Arithmetic mean of the cloud's points."""
    return cloud.points.mean(axis=0)


def covariance_eigen(cloud: FeatureCloud) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition of the 3x3 covariance of centered points.

    Returns (eigenvalues descending, eigenvectors as matching columns).
    Covariance uses 1/N normalization. Raises DegenerateCloud when all
    points are identical, since the eigenvectors would be arbitrary.
    """
    pts = cloud.points
    if np.all(pts == pts[0]):
        raise DegenerateCloud("all points identical; covariance is the zero matrix")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / pts.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1]
    return np.maximum(evals[order], 0.0), evecs[:, order]


def global_descriptor(cloud: FeatureCloud) -> np.ndarray:
    """Per-dimension mean of the cloud's feature vectors."""
    return cloud.features.mean(axis=0)


def apply_transform(t: SimTransform, cloud: FeatureCloud) -> FeatureCloud:
    """Map every point through the transform; features are copied unchanged."""
    return FeatureCloud(t.apply_points(cloud.points), cloud.features)


def bbox_diagonal(cloud: FeatureCloud) -> float:
    """Length of the axis-aligned bounding-box diagonal."""
    span = cloud.points.max(axis=0) - cloud.points.min(axis=0)
    return float(np.linalg.norm(span))
