"""Synthetic data: random smooth Beltrami fields, quasi-conformal distortions
of disk meshes, and brain-like bumpy hemispheres with known valley curves.

All generators are pure functions of their configuration; randomness comes
from numpy's PCG64 generator seeded explicitly, so fixtures are reproducible
across platforms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay

from .beltrami import BoundaryCondition, lbs_solve
from .errors import SolveError
from .landmarks import LandmarkSet
from .mesh import PlanarMesh, TriMesh
from .spectral import GridField, grid_to_mu

GENERATOR_NAME = "numpy-PCG64"


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of the random smooth Beltrami-field generator.

    amplitude is the exact max modulus of the output; cutoff the half-width
    of the supported frequency block. envelope_scale, when set, multiplies
    the in-block coefficients by exp(-(r/scale)^2) so the spectrum decays
    within the block (used for broad-band fields).
    """
    seed: int
    grid_n: int = 64
    amplitude: float = 0.3
    cutoff: int = 4
    rotation: bool = False
    envelope_scale: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.amplitude < 1.0:
            raise ValueError("amplitude must lie in [0, 1)")
        if not 1 <= self.cutoff <= self.grid_n // 2:
            raise ValueError(f"cutoff {self.cutoff} outside [1, {self.grid_n // 2}]")


def random_smooth_mu(cfg: SynthConfig) -> GridField:
    """Random complex field supported on the low-frequency block.

    Each channel is real white noise low-passed onto the symmetric band
    |freq| <= cutoff - 1 (so the channel spectra stay Hermitian and the
    support lies strictly inside the cutoff block); the combined field is
    rescaled so its max modulus equals cfg.amplitude exactly.
    """
    rng = np.random.default_rng(cfg.seed)
    n = cfg.grid_n
    freq = np.fft.fftfreq(n, d=1.0 / n)  # wrapped integer frequencies
    keep1d = np.abs(freq) <= cfg.cutoff - 1
    band = np.outer(keep1d, keep1d).astype(float)
    if cfg.envelope_scale is not None:
        r2 = freq[:, None] ** 2 + freq[None, :] ** 2
        band = band * np.exp(-r2 / cfg.envelope_scale**2)
    channels = []
    for _ in range(2):
        spec = np.fft.fft2(rng.standard_normal((n, n))) * band
        channels.append(np.fft.ifft2(spec).real)
    field = channels[0] + 1j * channels[1]
    maxmod = float(np.abs(field).max())
    if maxmod > 0.0 and cfg.amplitude > 0.0:
        field = field * (cfg.amplitude / maxmod)
    else:
        field = np.zeros_like(field)
    return GridField(field)


def distort_disk(disk: PlanarMesh, mu_grid: GridField, lm: LandmarkSet,
                 rotation: float = 0.0):
    """Quasi-conformally distort a disk parameterization and its landmarks.

    The landmark curves (and endpoints) are pushed through the map by
    barycentric transfer; targets are kept, so the result is a synthetic
    registration pair. The distortion is verified fold-free.
    """
    mu = grid_to_mu(mu_grid, disk)
    pin = int(disk.base.boundary[0])
    bc = BoundaryCondition.circle(pin, disk.uv[pin])
    mapped = lbs_solve(disk, mu, bc)
    if not mapped.fold_free:
        raise SolveError(f"distortion produced {mapped.fold_count()} folds")

    def push(points):
        fidx, bary = disk.locate(points)
        if (fidx < 0).any():
            raise SolveError("landmark point outside the disk mesh")
        return (mapped.uv[disk.faces[fidx]] * bary[:, :, None]).sum(axis=1)

    uv_out = mapped.uv
    curves = [push(c) for c in lm.curves]
    endpoints = [(c[0], c[-1]) for c in curves]
    if rotation:
        rot = np.array([[np.cos(rotation), -np.sin(rotation)],
                        [np.sin(rotation), np.cos(rotation)]])
        uv_out = uv_out @ rot.T
        curves = [c @ rot.T for c in curves]
        endpoints = [(c[0], c[-1]) for c in curves]
        mapped = PlanarMesh(mapped.base, uv_out)
    distorted_lm = LandmarkSet(curves=tuple(curves), targets=lm.targets,
                               endpoints=tuple(endpoints))
    return mapped, distorted_lm


@dataclass(frozen=True)
class SyntheticBrain:
    """Bumpy hemisphere with analytic sulcal valleys."""
    mesh: TriMesh
    valley_vertex_paths: tuple   # per valley: array of vertex indices, pole->rim
    n_rings: int
    n_sectors: int


def synthetic_brain(seed: int, bumps: int, n_rings: int = 32,
                    n_sectors: int = 96, depth: float = 0.22) -> SyntheticBrain:
    """Hemisphere with `bumps` smooth radial valleys carved into the radius.

    Valley meridians coincide with mesh vertex columns, so each valley is
    returned as an exact vertex path usable as ground truth.
    """
    if bumps < 1:
        raise ValueError("bumps must be >= 1")
    if n_sectors % bumps:
        n_sectors = bumps * int(np.ceil(n_sectors / bumps))
    rng = np.random.default_rng(seed)
    j0 = int(rng.integers(0, n_sectors))
    phi0 = 2.0 * np.pi * j0 / n_sectors
    amp = depth * (0.85 + 0.3 * rng.random())

    ks = np.arange(1, n_rings + 1)
    s = ks / n_rings
    phis = 2.0 * np.pi * np.arange(n_sectors) / n_sectors

    sg, pg = np.meshgrid(s, phis, indexing="ij")
    valley = ((1.0 + np.cos(bumps * (pg - phi0))) / 2.0) ** 2
    radius = 1.0 - amp * valley * np.sin(np.pi * sg)
    polar = sg * (np.pi / 2.0)
    x = radius * np.sin(polar) * np.cos(pg)
    y = radius * np.sin(polar) * np.sin(pg)
    z = radius * np.cos(polar)

    verts = np.vstack([[[0.0, 0.0, 1.0]], np.column_stack([x.ravel(), y.ravel(), z.ravel()])])

    def vid(k, j):
        return 1 + (k - 1) * n_sectors + (j % n_sectors)

    faces = []
    for j in range(n_sectors):
        faces.append([0, vid(1, j), vid(1, j + 1)])
    for k in range(1, n_rings):
        for j in range(n_sectors):
            a, b = vid(k, j), vid(k, j + 1)
            c, d = vid(k + 1, j), vid(k + 1, j + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    faces = np.asarray(faces, dtype=np.int32)

    # Orient outward: flip if face normals point against the position vector.
    tri = verts[faces]
    nrm = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if float((nrm * tri.mean(axis=1)).sum()) < 0.0:
        faces = faces[:, [0, 2, 1]]
    mesh = TriMesh(verts, faces)

    k_lo = max(1, int(round(0.2 * n_rings)))
    k_hi = min(n_rings, int(round(0.85 * n_rings)))
    step = n_sectors // bumps
    valleys = []
    for m in range(bumps):
        j = (j0 + m * step) % n_sectors
        valleys.append(np.array([vid(k, j) for k in range(k_lo, k_hi + 1)], dtype=np.int64))
    return SyntheticBrain(mesh=mesh, valley_vertex_paths=tuple(valleys),
                          n_rings=n_rings, n_sectors=n_sectors)


# ----------------------------------------------------------------------------
# Deterministic test-surface generators.

def unit_disk_mesh(target_vertices: int = 2000) -> PlanarMesh:
    """Well-shaped triangulation of the unit disk via a hex lattice + Delaunay."""
    h = np.sqrt(3.63 / target_vertices)
    nb = max(8, int(round(2.0 * np.pi / h)))
    ang = 2.0 * np.pi * np.arange(nb) / nb
    ring = np.column_stack([np.cos(ang), np.sin(ang)])

    m = int(np.ceil(1.0 / h)) + 1
    i = np.arange(-m, m + 1)
    xg, yg = np.meshgrid(i * h, i * (h * np.sqrt(3) / 2.0), indexing="ij")
    xg = xg + (np.arange(-m, m + 1)[None, :] % 2) * (h / 2.0)
    pts = np.column_stack([xg.ravel(), yg.ravel()])
    pts = pts[np.linalg.norm(pts, axis=1) <= 1.0 - 0.7 * h]

    points = np.vstack([ring, pts])
    tri = Delaunay(points)
    faces = tri.simplices.astype(np.int32)
    t = points[faces]
    areas = 0.5 * ((t[:, 1, 0] - t[:, 0, 0]) * (t[:, 2, 1] - t[:, 0, 1])
                   - (t[:, 2, 0] - t[:, 0, 0]) * (t[:, 1, 1] - t[:, 0, 1]))
    faces[areas < 0] = faces[areas < 0][:, [0, 2, 1]]
    base = TriMesh(np.column_stack([points, np.zeros(len(points))]), faces)
    return PlanarMesh(base, points)


def sphere_cap_mesh(n_rings: int = 60, n_sectors: int = 120,
                    theta_max: float = 0.5 * np.pi, radius: float = 1.0) -> TriMesh:
    """Sphere with the cap below theta_max removed: a disk-topology patch."""
    ks = np.arange(1, n_rings + 1)
    theta = theta_max * ks / n_rings
    phi = 2.0 * np.pi * np.arange(n_sectors) / n_sectors
    tg, pg = np.meshgrid(theta, phi, indexing="ij")
    x = radius * np.sin(tg) * np.cos(pg)
    y = radius * np.sin(tg) * np.sin(pg)
    z = radius * np.cos(tg)
    verts = np.vstack([[[0.0, 0.0, radius]], np.column_stack([x.ravel(), y.ravel(), z.ravel()])])

    def vid(k, j):
        return 1 + (k - 1) * n_sectors + (j % n_sectors)

    faces = []
    for j in range(n_sectors):
        faces.append([0, vid(1, j), vid(1, j + 1)])
    for k in range(1, n_rings):
        for j in range(n_sectors):
            a, b = vid(k, j), vid(k, j + 1)
            c, d = vid(k + 1, j), vid(k + 1, j + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    faces = np.asarray(faces, dtype=np.int32)
    tri = verts[faces]
    nrm = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    if float((nrm * tri.mean(axis=1)).sum()) < 0.0:
        faces = faces[:, [0, 2, 1]]
    return TriMesh(verts, faces)


def cylinder_mesh(radius: float = 2.0, height: float = 4.0, n_around: int = 120,
                  n_along: int = 60, gap: float = 0.15) -> TriMesh:
    """Open cylindrical tube cut along a seam: a disk-topology strip."""
    span = 2.0 * np.pi - gap
    u = span * np.arange(n_around + 1) / n_around
    v = height * np.arange(n_along + 1) / n_along
    ug, vg = np.meshgrid(u, v, indexing="ij")
    verts = np.column_stack([radius * np.cos(ug).ravel(),
                             radius * np.sin(ug).ravel(), vg.ravel()])

    def vid(i, j):
        return i * (n_along + 1) + j

    faces = []
    for i in range(n_around):
        for j in range(n_along):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i, j + 1), vid(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c])
    faces = np.asarray(faces, dtype=np.int32)
    tri = verts[faces]
    nrm = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    outward = tri.mean(axis=1).copy()
    outward[:, 2] = 0.0
    if float((nrm * outward).sum()) < 0.0:
        faces = faces[:, [0, 2, 1]]
    return TriMesh(verts, faces)


def flat_grid_mesh(n: int = 20, jitter: float = 0.0, seed: int = 0) -> TriMesh:
    """Planar unit-square grid (z = 0), optionally jittered in-plane."""
    c = np.arange(n + 1) / n
    xg, yg = np.meshgrid(c, c, indexing="ij")
    pts = np.column_stack([xg.ravel(), yg.ravel()])
    if jitter:
        rng = np.random.default_rng(seed)
        interior = ((pts[:, 0] > 0) & (pts[:, 0] < 1) & (pts[:, 1] > 0) & (pts[:, 1] < 1))
        pts[interior] += rng.uniform(-jitter, jitter, (int(interior.sum()), 2)) / n

    def vid(i, j):
        return i * (n + 1) + j

    faces = []
    for i in range(n):
        for j in range(n):
            a, b, c2, d = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
            faces.append([a, b, d])
            faces.append([a, d, c2])
    return TriMesh(np.column_stack([pts, np.zeros(len(pts))]),
                   np.asarray(faces, dtype=np.int32))
