"""Circle-to-square resampling of Beltrami fields, 2D Fourier transform with
the mean-preserving forward normalization, and low-pass compression.

Grid convention: values[i, j] samples the unit square [-1, 1]^2 at cell
centers x_i = -1 + 2(i + 0.5)/n, y_j = -1 + 2(j + 0.5)/n.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .beltrami import BeltramiField, cap_modulus
from .mesh import PlanarMesh

_GRID_MAGIC = b"QCGF"
_BINARY_VERSION = 1


def _check_grid_size(n: int) -> None:
    if n < 8 or (n & (n - 1)) != 0:
        raise ValueError(f"grid size {n} must be a power of two >= 8")


@dataclass(frozen=True)
class GridField:
    """n x n complex samples (mu_R + i mu_I) on the unit square."""
    values: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.complex128)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("grid values must be square")
        _check_grid_size(v.shape[0])
        if not np.isfinite(v).all():
            raise ValueError("grid contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Spectrum:
    """DFT coefficients of the two channels (Re mu, Im mu)."""
    coefficients: np.ndarray  # (2, n, n) complex

    def __post_init__(self):
        c = np.ascontiguousarray(self.coefficients, dtype=np.complex128)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != c.shape[2]:
            raise ValueError("spectrum must be (2, n, n)")
        _check_grid_size(c.shape[1])
        c.flags.writeable = False
        object.__setattr__(self, "coefficients", c)

    @property
    def n(self) -> int:
        return self.coefficients.shape[1]


def grid_nodes(n: int) -> np.ndarray:
    """Cell-center sample points of the n x n grid, flattened in (i, j) order."""
    c = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    gx, gy = np.meshgrid(c, c, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def disk_to_square(p, tol: float = 1e-12) -> np.ndarray:
    """Map points of the closed unit disk onto [-1, 1]^2.

    Equivalent to dividing by max(|cos t|, |sin t|) at the point's polar angle,
    computed without trigonometry so axis and diagonal points map exactly.
    """
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    q = np.atleast_2d(p).astype(np.float64)
    r = np.sqrt(q[:, 0] ** 2 + q[:, 1] ** 2)
    if (r > 1.0 + tol).any():
        raise ValueError("point outside the closed unit disk")
    m = np.maximum(np.abs(q[:, 0]), np.abs(q[:, 1]))
    safe = m > 0.0
    scale = np.ones_like(m)
    scale[safe] = r[safe] / m[safe]
    out = q * scale[:, None]
    return out[0] if single else out


def square_to_disk(q, tol: float = 1e-12) -> np.ndarray:
    """Exact inverse of disk_to_square on [-1, 1]^2."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    s = np.atleast_2d(q).astype(np.float64)
    if (np.abs(s) > 1.0 + tol).any():
        raise ValueError("point outside the unit square")
    r = np.sqrt(s[:, 0] ** 2 + s[:, 1] ** 2)
    m = np.maximum(np.abs(s[:, 0]), np.abs(s[:, 1]))
    scale = np.ones_like(m)
    safe = r > 0.0
    scale[safe] = m[safe] / r[safe]
    out = s * scale[:, None]
    return out[0] if single else out


def mu_to_grid(disk: PlanarMesh, mu, n: int) -> GridField:
    """Sample the face-based field onto the square grid.

    Each node maps into the disk and copies the containing face's value;
    nodes outside the mesh image copy the nearest face's value (by centroid).
    """
    _check_grid_size(n)
    mu = mu.mu if isinstance(mu, BeltramiField) else np.asarray(mu, dtype=np.complex128)
    pts = square_to_disk(grid_nodes(n))
    fidx, _ = disk.locate(pts)
    missing = fidx < 0
    if missing.any():
        centroids = disk.uv[disk.faces].mean(axis=1)
        _, nearest = cKDTree(centroids).query(pts[missing])
        fidx[missing] = nearest
    return GridField(mu[fidx].reshape(n, n))


def bilinear_sample(values: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Bilinear interpolation on the cell-centered grid, clamped at edges."""
    n = values.shape[0]
    s = (pts + 1.0) * (n / 2.0) - 0.5
    i0 = np.clip(np.floor(s[:, 0]).astype(np.int64), 0, n - 2)
    j0 = np.clip(np.floor(s[:, 1]).astype(np.int64), 0, n - 2)
    fx = np.clip(s[:, 0] - i0, 0.0, 1.0)
    fy = np.clip(s[:, 1] - j0, 0.0, 1.0)
    v00 = values[i0, j0]
    v10 = values[i0 + 1, j0]
    v01 = values[i0, j0 + 1]
    v11 = values[i0 + 1, j0 + 1]
    return ((1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10
            + (1 - fx) * fy * v01 + fx * fy * v11)


def grid_to_mu(grid: GridField, disk: PlanarMesh) -> BeltramiField:
    """Per-face bilinear sample of the grid at the square image of the face
    centroid, with the modulus capped strictly below 1."""
    centroids = disk.uv[disk.faces].mean(axis=1)
    sq = disk_to_square(centroids)
    return BeltramiField(cap_modulus(bilinear_sample(grid.values, sq)))


def dft2(grid: GridField) -> Spectrum:
    """Forward DFT per channel with 1/n^2 normalization (DC = channel mean)."""
    n = grid.n
    cr = np.fft.fft2(grid.values.real) / (n * n)
    ci = np.fft.fft2(grid.values.imag) / (n * n)
    return Spectrum(np.stack([cr, ci]))


def idft2(spec: Spectrum) -> GridField:
    """Inverse DFT; exact round trip with dft2 up to floating-point error."""
    n = spec.n
    r = np.fft.ifft2(spec.coefficients[0]).real * (n * n)
    i = np.fft.ifft2(spec.coefficients[1]).real * (n * n)
    return GridField(r + 1j * i)


def lowpass_mask(n: int, k: int) -> np.ndarray:
    keep = np.zeros(n, dtype=bool)
    keep[:k] = True
    keep[n - k:] = True
    return np.outer(keep, keep)


def lowpass(spec: Spectrum, k: int) -> Spectrum:
    """Zero all coefficients outside the centered (2k)x(2k) low-frequency
    block (wrap-around indexing: frequencies -k .. k-1 are kept)."""
    n = spec.n
    if not 1 <= k <= n // 2:
        raise ValueError(f"cutoff {k} outside [1, {n // 2}]")
    mask = lowpass_mask(n, k)
    return Spectrum(spec.coefficients * mask[None, :, :])


# ----------------------------------------------------------------------------
# Serialization: CSV (i, j, re, im) and raw little-endian binary.

def write_grid_csv(grid: GridField, path) -> None:
    lines = [f"{i},{j},{v.real:.17g},{v.imag:.17g}"
             for (i, j), v in np.ndenumerate(grid.values)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_grid_csv(path) -> GridField:
    rows = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        i, j, re, im = line.split(",")
        rows.append((int(i), int(j), float(re), float(im)))
    n = int(np.sqrt(len(rows)))
    if n * n != len(rows):
        raise ValueError(f"{path}: expected a square grid, got {len(rows)} entries")
    values = np.zeros((n, n), dtype=np.complex128)
    for i, j, re, im in rows:
        values[i, j] = complex(re, im)
    return GridField(values)


def write_spectrum_csv(spec: Spectrum, path) -> None:
    lines = [f"{c},{i},{j},{v.real:.17g},{v.imag:.17g}"
             for (c, i, j), v in np.ndenumerate(spec.coefficients)]
    Path(path).write_text("\n".join(lines) + "\n")


def _write_binary(path, arrays) -> None:
    n = arrays[0].shape[0]
    with open(path, "wb") as fh:
        fh.write(_GRID_MAGIC)
        fh.write(struct.pack("<III", _BINARY_VERSION, n, len(arrays)))
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<c16").tobytes())


def _read_binary(path):
    raw = Path(path).read_bytes()
    if raw[:4] != _GRID_MAGIC:
        raise ValueError(f"{path}: bad magic {raw[:4]!r}")
    version, n, nchan = struct.unpack("<III", raw[4:16])
    if version != _BINARY_VERSION:
        raise ValueError(f"{path}: binary version {version}, expected {_BINARY_VERSION}")
    data = np.frombuffer(raw[16:], dtype="<c16").reshape(nchan, n, n)
    return data.astype(np.complex128)


def write_grid_binary(grid: GridField, path) -> None:
    _write_binary(path, [grid.values])


def read_grid_binary(path) -> GridField:
    return GridField(_read_binary(path)[0])


def write_spectrum_binary(spec: Spectrum, path) -> None:
    _write_binary(path, list(spec.coefficients))


def read_spectrum_binary(path) -> Spectrum:
    return Spectrum(_read_binary(path))
