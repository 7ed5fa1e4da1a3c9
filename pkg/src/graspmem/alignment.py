"""Feature-guided iterative alignment of a memory cloud onto a scene cloud.

The pipeline: estimate a global scale from total-variance ratio, sweep an
Euler-angle grid of rotation candidates anchored at the two centroids,
score every candidate with a hybrid cost (squared point distance plus
feature-cosine dissimilarity over the k nearest scene neighbors), refine
the best few with point-to-point ICP at fixed scale, then re-score the
refined poses with a tighter distance threshold and keep the winner.

Clouds are expected in meters; the squared-distance term of the pair cost
carries units of m^2 while the feature term is unitless, so the weights
w_g / w_f are tuned for metrically scaled clouds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AllCandidatesRejected, DegenerateCloud, DimMismatch, NoOverlap, RankDeficient
from .geometry import (
    FeatureCloud,
    NeighborIndex,
    SimTransform,
    apply_transform,
    bbox_diagonal,
    centroid,
    covariance_eigen,
)
from .pca import DEFAULT_PCA_DIM, fit_pca, project
from .retrieval import cosine_similarity

__all__ = [
    "AlignmentConfig",
    "ScoredCandidate",
    "AlignmentResult",
    "estimate_scale",
    "euler_grid",
    "candidate_cost",
    "coarse_align",
    "icp_refine",
    "align",
    "align_detailed",
    "chamfer_distance",
    "combined_reconstruction_loss",
]

# Fractions of the scene bounding-box diagonal used when a config leaves the
# distance thresholds unset; the final pass is deliberately tighter.
COARSE_THRESHOLD_FRACTION = 0.25
FINAL_THRESHOLD_FRACTION = 0.10

_DEDUP_FROBENIUS = 1e-6


@dataclass(frozen=True)
class AlignmentConfig:
    """Tunables for the coarse grid search and ICP refinement.

    Thresholds left as None are resolved per scene as fixed fractions of its
    bounding-box diagonal. Angles are radians; degrees exist only at the CLI.
    """

    euler_step: float = math.pi / 4
    k_eval: int = 5
    k_orient: int = 5
    w_g: float = 1.0
    w_f: float = 1.0
    coarse_distance_threshold: float | None = None
    final_distance_threshold: float | None = None
    icp_max_iterations: int = 50
    icp_tolerance: float = 1e-6
    scale_mode: str = "trace"

    def __post_init__(self):
        if self.w_g < 0 or self.w_f < 0 or self.w_g + self.w_f <= 0:
            raise ValueError("weights must be nonnegative with w_g + w_f > 0")
        if self.k_eval < 1 or self.k_orient < 1:
            raise ValueError("k_eval and k_orient must be positive")
        if self.icp_max_iterations < 1:
            raise ValueError("icp_max_iterations must be positive")
        if self.scale_mode not in ("trace", "max_eigen"):
            raise ValueError("scale_mode must be 'trace' or 'max_eigen'")
        c, f = self.coarse_distance_threshold, self.final_distance_threshold
        if c is not None and f is not None and f > c:
            raise ValueError("final_distance_threshold must not exceed the coarse threshold")

    def resolved_for(self, scene: FeatureCloud) -> "AlignmentConfig":
        """Fill unset thresholds from the scene bounding-box diagonal."""
        diag = bbox_diagonal(scene)
        coarse = self.coarse_distance_threshold
        final = self.final_distance_threshold
        if coarse is None:
            coarse = COARSE_THRESHOLD_FRACTION * diag
        if final is None:
            final = min(FINAL_THRESHOLD_FRACTION * diag, coarse)
        return replace(self, coarse_distance_threshold=coarse, final_distance_threshold=final)


@dataclass(frozen=True)
class ScoredCandidate:
    transform: SimTransform
    score: float

    def __post_init__(self):
        if not np.isfinite(self.score):
            raise ValueError("candidate score must be finite")


@dataclass(frozen=True)
class AlignmentResult:
    """align() plus the diagnostics the CLI reports."""

    transform: SimTransform
    final_score: float
    candidates_evaluated: int
    coarse_candidates: tuple[ScoredCandidate, ...]


def estimate_scale(memory_cloud: FeatureCloud, scene_cloud: FeatureCloud,
                   mode: str = "trace") -> float:
    """Global scale from the clouds' covariance spectra.

    "trace" compares total variance (rotation invariant, robust to principal
    axis swaps); "max_eigen" compares only the largest eigenvalues.
    """
    mem_vals, _ = covariance_eigen(memory_cloud)
    scn_vals, _ = covariance_eigen(scene_cloud)
    if mode == "trace":
        num, den = scn_vals.sum(), mem_vals.sum()
    elif mode == "max_eigen":
        num, den = scn_vals[0], mem_vals[0]
    else:
        raise ValueError("mode must be 'trace' or 'max_eigen'")
    if den <= 0.0 or num <= 0.0:
        raise DegenerateCloud("cannot estimate scale from a zero-variance cloud")
    return float(np.sqrt(num / den))


def _rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def _rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def _rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def euler_grid(step: float) -> list[np.ndarray]:
    """Deduplicated rotations from an Euler-angle grid.

    Triples (yaw, pitch, roll) cover [0, 2pi) x [0, 2pi) x [0, pi] at the
    given step, composed as Rz(yaw) @ Ry(pitch) @ Rx(roll). Near-identical
    rotations (Frobenius distance < 1e-6) keep only the first occurrence,
    in lexicographic triple order.
    """
    if not (0.0 < step <= 2 * math.pi):
        raise ValueError("step must be in (0, 2*pi]")
    n_full = max(1, int(math.ceil(2 * math.pi / step - 1e-9)))
    n_half = int(math.floor(math.pi / step + 1e-9)) + 1
    yaws = [i * step for i in range(n_full)]
    pitches = [i * step for i in range(n_full)]
    rolls = [i * step for i in range(n_half)]

    kept: list[np.ndarray] = []
    stack = np.empty((0, 9))
    for yaw in yaws:
        rz = _rot_z(yaw)
        for pitch in pitches:
            rzy = rz @ _rot_y(pitch)
            for roll in rolls:
                r = rzy @ _rot_x(roll)
                if stack.shape[0]:
                    d = np.linalg.norm(stack - r.reshape(-1), axis=1)
                    if d.min() < _DEDUP_FROBENIUS:
                        continue
                kept.append(r)
                stack = np.vstack([stack, r.reshape(1, 9)])
    return kept


def _safe_cosine_rows(mem_feats: np.ndarray, nbr_feats: np.ndarray) -> np.ndarray:
    """Cosine between each memory feature and its (N, k, D) neighbor block.

    A (near-)zero vector on either side yields cosine 0, i.e. maximal
    dissimilarity 1 in the pair cost; this only occurs for degenerate
    projections and keeps the scan total.
    """
    if mem_feats.shape[1] == 0:
        return np.zeros(nbr_feats.shape[:2])
    dots = np.einsum("nd,nkd->nk", mem_feats, nbr_feats)
    mn = np.linalg.norm(mem_feats, axis=1)
    nn = np.linalg.norm(nbr_feats, axis=2)
    denom = mn[:, None] * nn
    out = np.zeros_like(dots)
    ok = denom > 1e-12
    out[ok] = dots[ok] / denom[ok]
    return out


def candidate_cost(
    transformed_memory: FeatureCloud,
    scene: FeatureCloud,
    scene_index: NeighborIndex,
    cfg: AlignmentConfig,
    threshold: float,
) -> float:
    """Hybrid alignment cost of an already-transformed memory cloud.

    Per memory point: pair costs w_g * d^2 + w_f * (1 - cos(features)) over
    its k_eval nearest scene neighbors, of which the minimum is the point
    cost. Points whose nearest neighbor lies beyond ``threshold`` are
    skipped; the score is the mean over contributing points. Raises
    NoOverlap when nothing contributes.
    """
    if transformed_memory.feature_dim != scene.feature_dim:
        raise DimMismatch("memory and scene must carry features of equal dim")
    dists, idxs = scene_index.query_many(transformed_memory.points, cfg.k_eval)
    contributing = dists[:, 0] <= threshold
    if not np.any(contributing):
        raise NoOverlap(f"no memory point within {threshold} m of the scene")
    pair = cfg.w_g * dists**2
    if cfg.w_f != 0.0:
        cos = _safe_cosine_rows(transformed_memory.features, scene.features[idxs])
        pair = pair + cfg.w_f * (1.0 - cos)
    point_cost = pair.min(axis=1)
    return float(point_cost[contributing].mean())


def coarse_align(memory: FeatureCloud, scene: FeatureCloud,
                 cfg: AlignmentConfig) -> list[ScoredCandidate]:
    """Grid-search rotations, score each, keep the k_orient best.

    Expects both clouds to carry already-projected features. Every grid
    rotation forms scale * R @ (p - c_mem) + c_scene; candidates that find
    no overlap are dropped, and NoOverlap is raised only when all do.
    Returned candidates are sorted ascending by (score, grid order).
    """
    cfg = cfg.resolved_for(scene)
    s_g = estimate_scale(memory, scene, cfg.scale_mode)
    c_mem = centroid(memory)
    c_scene = centroid(scene)
    index = NeighborIndex(scene)

    scored: list[tuple[float, int, SimTransform]] = []
    for gi, rot in enumerate(euler_grid(cfg.euler_step)):
        t = SimTransform.from_centroids(s_g, rot, c_mem, c_scene)
        try:
            score = candidate_cost(apply_transform(t, memory), scene, index,
                                   cfg, cfg.coarse_distance_threshold)
        except NoOverlap:
            continue
        scored.append((score, gi, t))
    if not scored:
        raise NoOverlap("every grid candidate fell outside the distance threshold")
    scored.sort(key=lambda item: (item[0], item[1]))
    return [ScoredCandidate(t, s) for s, _, t in scored[: cfg.k_orient]]


def _kabsch(src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rotation and translation minimizing sum |R p + t - q|^2."""
    mp, mq = src.mean(axis=0), dst.mean(axis=0)
    h = (src - mp).T @ (dst - mq)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, mq - rot @ mp


def icp_refine(
    candidate: SimTransform,
    memory: FeatureCloud,
    scene: FeatureCloud,
    cfg: AlignmentConfig,
    return_trace: bool = False,
):
    """Point-to-point ICP on geometry only; scale stays fixed.

    Correspondences beyond the coarse distance threshold are rejected.
    Iterates until the mean correspondence distance improves by less than
    icp_tolerance or the iteration cap is hit; an update that would worsen
    that mean is discarded, so accepted iterates descend monotonically.
    Non-convergence is not an error: the last accepted pose is returned.
    """
    cfg = cfg.resolved_for(scene)
    reject = cfg.coarse_distance_threshold
    index = NeighborIndex(scene)
    scaled_src = candidate.scale * memory.points
    rot, tr = candidate.rotation, candidate.translation
    trace: list[float] = []
    prev_mean = np.inf
    for _ in range(cfg.icp_max_iterations):
        moved = scaled_src @ rot.T + tr
        d, j = index.query_many(moved, 1)
        mask = d[:, 0] <= reject
        if np.count_nonzero(mask) < 3:
            break
        mean_d = float(d[mask, 0].mean())
        if mean_d > prev_mean:
            rot, tr = accepted_rot, accepted_tr  # noqa: F821 - set on a prior pass
            break
        trace.append(mean_d)
        accepted_rot, accepted_tr = rot, tr
        if prev_mean - mean_d < cfg.icp_tolerance:
            break
        prev_mean = mean_d
        rot, tr = _kabsch(scaled_src[mask], scene.points[j[mask, 0]])
    else:
        rot, tr = accepted_rot, accepted_tr
    refined = SimTransform(candidate.scale, rot, tr)
    return (refined, trace) if return_trace else refined


def align_detailed(
    memory: FeatureCloud,
    scene: FeatureCloud,
    cfg: AlignmentConfig,
    pca_dim: int = DEFAULT_PCA_DIM,
) -> AlignmentResult:
    """Full pipeline: PCA projection, coarse grid, ICP, final re-scoring.

    PCA is fit fresh on the union of both clouds' raw features and clamped
    to the rank the data supports; rank-0 features degrade to a constant
    feature term, which leaves the ranking purely geometric.
    """
    if memory.feature_dim != scene.feature_dim:
        raise DimMismatch("memory and scene feature dims differ")
    cfg = cfg.resolved_for(scene)

    if memory.feature_dim > 0 and cfg.w_f != 0.0:
        d_out = min(int(pca_dim), memory.feature_dim)
        try:
            model = fit_pca(memory.features, scene.features, d_out)
        except RankDeficient as exc:
            model = fit_pca(memory.features, scene.features, exc.achievable_rank) \
                if exc.achievable_rank > 0 else None
        if model is not None:
            mem_p, scene_p = project(model, memory), project(model, scene)
        else:
            zeros_m = np.zeros((len(memory), 1))
            zeros_s = np.zeros((len(scene), 1))
            mem_p, scene_p = memory.with_features(zeros_m), scene.with_features(zeros_s)
    else:
        mem_p, scene_p = memory, scene

    coarse = coarse_align(mem_p, scene_p, cfg)
    index = NeighborIndex(scene_p)
    rescored: list[tuple[float, int, SimTransform]] = []
    for i, cand in enumerate(coarse):
        refined = icp_refine(cand.transform, mem_p, scene_p, cfg)
        try:
            score = candidate_cost(apply_transform(refined, mem_p), scene_p, index,
                                   cfg, cfg.final_distance_threshold)
        except NoOverlap:
            continue
        rescored.append((score, i, refined))
    if not rescored:
        raise AllCandidatesRejected("every refined pose fell outside the final threshold")
    score, _, best = min(rescored, key=lambda item: (item[0], item[1]))
    return AlignmentResult(
        transform=best,
        final_score=score,
        candidates_evaluated=len(euler_grid(cfg.euler_step)),
        coarse_candidates=tuple(coarse),
    )


def align(
    memory: FeatureCloud,
    scene: FeatureCloud,
    cfg: AlignmentConfig,
    pca_dim: int = DEFAULT_PCA_DIM,
) -> SimTransform:
    """Optimal memory-to-scene similarity transform (see align_detailed)."""
    return align_detailed(memory, scene, cfg, pca_dim).transform


def chamfer_distance(a: FeatureCloud, b: FeatureCloud) -> float:
    """Symmetric sum (not mean) of squared nearest-neighbor distances."""
    d_ab, _ = NeighborIndex(b).query_many(a.points, 1)
    d_ba, _ = NeighborIndex(a).query_many(b.points, 1)
    return float(np.sum(d_ab[:, 0] ** 2) + np.sum(d_ba[:, 0] ** 2))


def combined_reconstruction_loss(
    geom_a: FeatureCloud,
    geom_b: FeatureCloud,
    mean_pca_feat_a: np.ndarray,
    mean_pca_feat_b: np.ndarray,
    w_dino: float = 0.005,
) -> float:
    """Chamfer distance plus weighted mean-feature cosine dissimilarity."""
    feat_term = 1.0 - cosine_similarity(mean_pca_feat_a, mean_pca_feat_b)
    return chamfer_distance(geom_a, geom_b) + w_dino * feat_term
