"""Discrete mean curvature and its rasterization onto a disk parameterization.

Mean curvature uses the cotangent mean-curvature-normal construction with
mixed Voronoi areas; the sign comes from the dot product with the
area-weighted vertex normal, so convex regions (gyri) are positive and
grooves (sulci) negative. Boundary vertices copy the nearest interior value.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateFaceError
from .mesh import PlanarMesh, TriMesh


@dataclass(frozen=True)
class CurvatureField:
    """Per-vertex signed mean curvature, optionally with unit vertex normals."""
    values: np.ndarray
    normals: np.ndarray | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.normals is not None:
            n = np.ascontiguousarray(self.normals, dtype=np.float64)
            lengths = np.linalg.norm(n, axis=1)
            if (np.abs(lengths - 1.0) > 1e-10).any():
                raise ValueError("vertex normals must have unit length")
            n.flags.writeable = False
            object.__setattr__(self, "normals", n)


@dataclass(frozen=True)
class CurvatureImage:
    """n x n raster of rescaled curvature over the unit disk.

    grid[i, j] is the value at pixel center ((i+0.5)/n*2-1, (j+0.5)/n*2-1);
    mask marks pixels whose center lies inside the parameterized disk. Values
    are 0 outside the mask and in [0, 255] inside.
    """
    grid: np.ndarray
    mask: np.ndarray


def _mixed_voronoi_areas(p, faces, cots, areas):
    """Meyer mixed areas: circumcentric for non-obtuse faces, else area/2 at
    the obtuse corner and area/4 at the others."""
    nv = len(p)
    tri = p[faces]
    e2 = ((tri[:, [2, 0, 1]] - tri[:, [1, 2, 0]]) ** 2).sum(axis=2)  # |edge opp corner i|^2
    voronoi = (e2[:, [1, 2, 0]] * cots[:, [1, 2, 0]] + e2[:, [2, 0, 1]] * cots[:, [2, 0, 1]]) / 8.0
    obtuse_corner = cots < 0.0
    any_obtuse = obtuse_corner.any(axis=1)
    contrib = voronoi
    if any_obtuse.any():
        quarter = np.repeat(areas[:, None] / 4.0, 3, axis=1)
        half = np.repeat(areas[:, None] / 2.0, 3, axis=1)
        contrib = np.where(any_obtuse[:, None],
                           np.where(obtuse_corner, half, quarter),
                           voronoi)
    out = np.zeros(nv)
    np.add.at(out, faces, contrib)
    return out


def mean_curvature(mesh: TriMesh) -> CurvatureField:
    """Signed mean curvature at every vertex (units 1/length)."""
    p = mesh.vertices
    faces = mesh.faces
    tri = p[faces]
    e = tri[:, [2, 0, 1]] - tri[:, [1, 2, 0]]  # edge opposite corner i
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    areas2 = np.linalg.norm(cross, axis=1)  # 2 * face area
    if (areas2 <= 0.0).any():
        raise DegenerateFaceError("zero-area face in curvature computation")
    # cot at corner i = dot of its adjacent edges / (2 * area)
    d0 = ((tri[:, 1] - tri[:, 0]) * (tri[:, 2] - tri[:, 0])).sum(axis=1)
    d1 = ((tri[:, 2] - tri[:, 1]) * (tri[:, 0] - tri[:, 1])).sum(axis=1)
    d2 = ((tri[:, 0] - tri[:, 2]) * (tri[:, 1] - tri[:, 2])).sum(axis=1)
    cots = np.column_stack([d0, d1, d2]) / areas2[:, None]

    # Mean curvature normal: K_i = (1/(2 A_mixed)) sum (cot a + cot b)(p_i - p_j).
    nv = len(p)
    kvec = np.zeros((nv, 3))
    for c in range(3):
        j = faces[:, (c + 1) % 3]
        k = faces[:, (c + 2) % 3]
        w = cots[:, c][:, None]
        np.add.at(kvec, j, w * (p[j] - p[k]))
        np.add.at(kvec, k, w * (p[k] - p[j]))

    amix = _mixed_voronoi_areas(p, faces, cots, areas2 / 2.0)
    interior = mesh.interior_mask()
    if (amix[interior] <= 0.0).any():
        raise DegenerateFaceError("zero-area vertex neighborhood")

    vnormals = np.zeros((nv, 3))
    np.add.at(vnormals, faces[:, 0], cross)
    np.add.at(vnormals, faces[:, 1], cross)
    np.add.at(vnormals, faces[:, 2], cross)
    nlen = np.linalg.norm(vnormals, axis=1)
    nlen[nlen == 0.0] = 1.0
    vnormals /= nlen[:, None]

    H = np.zeros(nv)
    idx = np.flatnonzero(interior)
    H[idx] = (kvec[idx] * vnormals[idx]).sum(axis=1) / (2.0 * amix[idx]) / 2.0

    bidx = np.flatnonzero(~interior)
    if idx.size == 0:
        H[:] = 0.0
    elif bidx.size:
        # Nearest interior vertex, ties to the smallest index.
        d = np.linalg.norm(p[bidx][:, None, :] - p[idx][None, :, :], axis=2)
        H[bidx] = H[idx[np.argmin(d, axis=1)]]
    return CurvatureField(values=H, normals=vnormals)


def rescale_unit(values: np.ndarray) -> np.ndarray:
    """Affine rescale to [0, 1]; a (numerically) degenerate range maps to 0."""
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo <= 1e-12 * max(abs(hi), abs(lo)):
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def curvature_image(disk: PlanarMesh, H: CurvatureField, n: int) -> CurvatureImage:
    """Rasterize curvature over the unit disk as an n x n image in [0, 255]."""
    if n < 8:
        raise ValueError(f"grid size {n} < 8")
    centers = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    gx, gy = np.meshgrid(centers, centers, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    fidx, bary = disk.locate(pts)
    mask = fidx >= 0
    values = np.zeros(len(pts))
    hv = H.values[disk.faces[fidx[mask]]]
    values[mask] = (hv * bary[mask]).sum(axis=1)
    if mask.any():
        values[mask] = 255.0 * rescale_unit(values[mask])
    return CurvatureImage(grid=values.reshape(n, n), mask=mask.reshape(n, n))


def write_pgm(image: CurvatureImage, path) -> None:
    """ASCII PGM export; rows run from +y down so the image is upright."""
    n = image.grid.shape[0]
    rows = []
    for j in range(n - 1, -1, -1):
        rows.append(" ".join(str(int(round(v))) for v in image.grid[:, j]))
    Path(path).write_text(f"P2\n{n} {n}\n255\n" + "\n".join(rows) + "\n")


def write_image_csv(image: CurvatureImage, path) -> None:
    lines = [",".join("%.17g" % v for v in row) for row in image.grid]
    Path(path).write_text("\n".join(lines) + "\n")
