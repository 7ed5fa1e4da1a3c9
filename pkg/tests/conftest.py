import numpy as np
import pytest

from graspmem.geometry import FeatureCloud
from graspmem.synth import random_rotation

FIXTURE_DIR = None  # resolved lazily by fixtures below


def random_cloud(rng, n, d=4, span=1.0):
    return FeatureCloud(rng.uniform(-span, span, size=(n, 3)),
                        rng.normal(size=(n, d)))


def brute_force_knn(points, query, k):
    """(distance, index)-ordered k nearest neighbors, lowest index on ties."""
    sq = np.sum((points - query) ** 2, axis=1)
    order = np.argsort(sq, kind="stable")[:k]
    return np.sqrt(sq[order]), order


def rotation_angle(r_a, r_b):
    """Geodesic angle between two rotation matrices, radians."""
    c = (np.trace(r_a.T @ r_b) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def fixtures_dir():
    from pathlib import Path
    path = Path(__file__).parent / "fixtures"
    if not path.exists():
        pytest.skip("checked-in fixtures missing; run scripts/make_fixtures.py")
    return path


def make_rotation(rng):
    return random_rotation(rng)
