import numpy as np
import pytest

from qcreg.landmarks import LandmarkSet
from qcreg.mesh import PlanarMesh, TriMesh
from qcreg.spectral import grid_to_mu
from qcreg.synth import (SynthConfig, distort_disk, random_smooth_mu,
                         unit_disk_mesh)


@pytest.fixture
def square2() -> PlanarMesh:
    """Two-triangle unit square, the smallest disk mesh."""
    base = TriMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 2, 3]])
    return PlanarMesh(base, base.vertices[:, :2])


@pytest.fixture
def fan4() -> TriMesh:
    """Four triangles around a center vertex."""
    return TriMesh([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]],
                   [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]])


@pytest.fixture(scope="session")
def disk2k() -> PlanarMesh:
    return unit_disk_mesh(2000)


@pytest.fixture(scope="session")
def disk10k() -> PlanarMesh:
    return unit_disk_mesh(10000)


def interior_face_mask(planar: PlanarMesh) -> np.ndarray:
    onb = np.zeros(planar.base.n_vertices, dtype=bool)
    onb[planar.base.boundary] = True
    return ~onb[planar.faces].any(axis=1)


def wiggly_curves(seed: int, n_curves: int = 3, m: int = 16):
    """Deterministic landmark curves inside the unit disk."""
    rng = np.random.default_rng(seed + 1000)
    curves = []
    for c in range(n_curves):
        phi = 2 * np.pi * c / n_curves + rng.uniform(0, 0.4)
        r = np.linspace(0.15, 0.75, m)
        ang = phi + 0.35 * np.sin(np.pi * (r - 0.15) / 0.6)
        curves.append(np.column_stack([r * np.cos(ang), r * np.sin(ang)]))
    return curves


def synthetic_pair(disk: PlanarMesh, seed: int, amplitude: float = 0.3,
                   n_curves: int = 3, m: int = 16):
    """Distorted copy of `disk` with landmark source/target correspondences."""
    lm = LandmarkSet.from_curves(wiggly_curves(seed, n_curves, m))
    grid = random_smooth_mu(SynthConfig(seed=seed, amplitude=amplitude))
    subject, lm_pair = distort_disk(disk, grid, lm)
    true_mu = grid_to_mu(grid, disk)
    return subject, lm_pair, true_mu
