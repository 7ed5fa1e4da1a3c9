"""Seeded synthetic clouds for tests, fixtures, and demos.

Tool-like clouds are asymmetric (handle + head + off-axis knob) with
part-coded, position-coded features computed in the canonical frame, so a
transformed copy keeps exact per-point feature correspondence. Symmetric
clouds are exactly invariant under a 180-degree flip about z while their
features distinguish the two halves; they exercise the flip ambiguity that
pure geometric alignment cannot resolve.
"""

from __future__ import annotations

import numpy as np

from .geometry import FeatureCloud, GraspPose, SimTransform

__all__ = [
    "random_rotation",
    "random_sim_transform",
    "make_tool_cloud",
    "make_symmetric_cloud",
    "canonical_handle_grasp",
]


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def random_sim_transform(
    rng: np.random.Generator,
    scale_range: tuple[float, float] = (0.5, 2.0),
    translation_span: float = 0.5,
) -> SimTransform:
    return SimTransform(
        scale=float(rng.uniform(*scale_range)),
        rotation=random_rotation(rng),
        translation=rng.uniform(-translation_span, translation_span, size=3),
    )


def _tool_points(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Canonical-frame tool geometry plus integer part labels (0/1/2)."""
    handle_len = rng.uniform(0.14, 0.20)
    head_axes = rng.uniform([0.035, 0.025, 0.015], [0.06, 0.045, 0.03])
    knob_pos = np.array([handle_len * rng.uniform(0.6, 0.85), rng.uniform(0.025, 0.04), 0.0])

    n_handle = max(3, int(0.45 * n))
    n_head = max(3, int(0.35 * n))
    n_knob = max(3, n - n_handle - n_head)

    x = rng.uniform(0.0, handle_len, size=n_handle)
    theta = rng.uniform(0.0, 2 * np.pi, size=n_handle)
    r = 0.012 * np.sqrt(rng.uniform(size=n_handle))
    handle = np.column_stack([x, r * np.cos(theta), r * np.sin(theta)])

    dirs = rng.normal(size=(n_head, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    radii = np.cbrt(rng.uniform(size=(n_head, 1)))
    head = dirs * radii * head_axes + np.array([-head_axes[0] * 0.9, 0.0, 0.0])

    dirs = rng.normal(size=(n_knob, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    knob = dirs * 0.014 * np.cbrt(rng.uniform(size=(n_knob, 1))) + knob_pos

    points = np.vstack([handle, head, knob])
    labels = np.concatenate([
        np.zeros(n_handle, dtype=int),
        np.ones(n_head, dtype=int),
        np.full(n_knob, 2, dtype=int),
    ])
    return points, labels


def _positional_features(points: np.ndarray, labels: np.ndarray,
                         n_parts: int = 3) -> np.ndarray:
    """Part one-hot plus normalized canonical coordinates (D = n_parts + 5)."""
    scale = max(float(np.abs(points).max()), 1e-9)
    coords = points / scale
    onehot = np.zeros((points.shape[0], n_parts))
    onehot[np.arange(points.shape[0]), labels] = 1.0
    radial = np.sum(coords**2, axis=1, keepdims=True)
    bias = np.full((points.shape[0], 1), 0.5)
    return np.hstack([onehot, coords, radial, bias])


def make_tool_cloud(rng: np.random.Generator, n_points: int) -> FeatureCloud:
    """Asymmetric tool cloud with distinctive 8-dim features."""
    points, labels = _tool_points(rng, n_points)
    return FeatureCloud(points, _positional_features(points, labels))


def make_symmetric_cloud(rng: np.random.Generator, n_points: int) -> FeatureCloud:
    """Cloud exactly symmetric under Rz(pi), features coding the two halves.

    Half the points are sampled on one side and mirrored through
    (x, y) -> (-x, -y), so the point set is invariant under the flip while
    the first two feature channels tell the sides apart.
    """
    half = max(4, n_points // 2)
    x = rng.uniform(0.02, 0.15, size=half)
    y = rng.uniform(-0.03, 0.03, size=half)
    z = rng.uniform(-0.01, 0.01, size=half)
    side = np.column_stack([x, y, z])
    mirrored = side * np.array([-1.0, -1.0, 1.0])
    points = np.vstack([side, mirrored])

    scale = max(float(np.abs(points).max()), 1e-9)
    mag = np.abs(points[:half]) / scale
    right = np.hstack([np.ones((half, 1)), np.zeros((half, 1)), mag])
    left = np.hstack([np.zeros((half, 1)), np.ones((half, 1)), mag])
    return FeatureCloud(points, np.vstack([right, left]))


def canonical_handle_grasp(handle_len: float = 0.17) -> GraspPose:
    """Top-down grasp mid-handle in the tool's canonical frame."""
    rotation = np.array([
        [0.0, -1.0, 0.0],
        [1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    return GraspPose(
        rotation=rotation,
        translation=np.array([handle_len * 0.5, 0.0, 0.0]),
        width=0.03,
        finger_length=0.04,
    )
