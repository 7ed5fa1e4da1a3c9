"""PCA over per-point features, refit for every memory-scene pair.

The model is fit on the row-concatenation of both clouds' raw features and
both are projected into the same reduced space before the hybrid alignment
cost compares them. Covariance uses 1/N (population) normalization;
explained-variance *ratios* are normalization-invariant either way.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatch, RankDeficient
from .geometry import FeatureCloud

__all__ = ["PcaModel", "fit_pca", "project", "visualization_projection", "DEFAULT_PCA_DIM"]

DEFAULT_PCA_DIM = 32

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class PcaModel:
    """mean (D,), components (d_out, D) with orthonormal rows, variances descending."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64).reshape(-1)
        comp = np.asarray(self.components, dtype=np.float64)
        var = np.asarray(self.explained_variance, dtype=np.float64).reshape(-1)
        if comp.ndim != 2 or comp.shape[1] != mean.shape[0] or comp.shape[0] != var.shape[0]:
            raise ValueError("inconsistent PCA model shapes")
        gram = comp @ comp.T
        if np.max(np.abs(gram - np.eye(comp.shape[0]))) > _ORTHO_TOL:
            raise ValueError("component rows must be orthonormal")
        if np.any(np.diff(var) > 1e-12):
            raise ValueError("explained_variance must be sorted descending")
        for arr in (mean, comp, var):
            arr.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comp)
        object.__setattr__(self, "explained_variance", var)

    @property
    def input_dim(self) -> int:
        return self.mean.shape[0]

    @property
    def output_dim(self) -> int:
        return self.components.shape[0]


def _fix_signs(components: np.ndarray) -> np.ndarray:
    # Eigenvector sign is arbitrary; pin it so the largest-magnitude entry
    # of each row is positive, which makes refits reproducible.
    out = components.copy()
    for row in out:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return out


def fit_pca(features_a: np.ndarray, features_b: np.ndarray, d_out: int) -> PcaModel:
    """Fit on the row-concatenation of two feature matrices.

    ``features_b`` may be empty (0 rows). Raises RankDeficient, carrying the
    achievable rank, when the centered union supports fewer than ``d_out``
    directions.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("features_a must be 2-dimensional")
    if b.size == 0:
        b = b.reshape(0, a.shape[1])
    if b.ndim != 2 or b.shape[1] != a.shape[1]:
        raise DimMismatch(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    x = np.vstack([a, b])
    n, dim = x.shape
    d_out = int(d_out)
    if d_out < 1 or d_out > dim:
        raise ValueError(f"d_out must be in [1, {dim}]")
    if n < d_out:
        raise ValueError(f"need at least d_out={d_out} rows, got {n}")

    mean = x.mean(axis=0)
    centered = x - mean
    # SVD of the centered data is the numerically stable route to the
    # covariance eigenvectors; explained variance is s^2 / N.
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    tol = (svals[0] if svals.size else 0.0) * max(n, dim) * np.finfo(np.float64).eps
    rank = int(np.sum(svals > tol))
    if rank < d_out:
        raise RankDeficient(
            f"covariance rank {rank} < requested d_out {d_out}", achievable_rank=rank
        )
    components = _fix_signs(vt[:d_out])
    explained = (svals[:d_out] ** 2) / n
    return PcaModel(mean=mean, components=components, explained_variance=explained)


def project(model: PcaModel, cloud: FeatureCloud) -> FeatureCloud:
    """Replace features by components @ (f - mean); geometry untouched."""
    if cloud.feature_dim != model.input_dim:
        raise DimMismatch(
            f"cloud feature_dim {cloud.feature_dim} != model input dim {model.input_dim}"
        )
    projected = (cloud.features - model.mean) @ model.components.T
    return cloud.with_features(projected)


def visualization_projection(model_3: PcaModel, cloud: FeatureCloud) -> np.ndarray:
    """Per-point RGB in [0, 1]^3 from a 3-component model.

    Each channel is min-max normalized independently; a constant channel
    maps to 0.5.
    """
    if model_3.output_dim != 3:
        raise ValueError("visualization needs a model with exactly 3 components")
    proj = project(model_3, cloud).features
    rgb = np.empty_like(proj)
    for c in range(3):
        lo, hi = proj[:, c].min(), proj[:, c].max()
        span = hi - lo
        if span <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            rgb[:, c] = 0.5
        else:
            rgb[:, c] = (proj[:, c] - lo) / span
    return np.clip(rgb, 0.0, 1.0)
