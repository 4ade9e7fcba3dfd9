"""Triangle-mesh core: validated disk-topology meshes, planar embeddings,
piecewise-linear derivatives, OFF/OBJ I/O, and point location.

Conventions: faces are counterclockwise in the parameter domain, vertex
indices are 0-based internally (OBJ files are converted), and all arrays are
read-only after construction so meshes can be shared freely between threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import DegenerateFaceError, MeshParseError, MeshTopologyError, PointLocationError

_WRITE_FMT = "%.17g"


def _freeze(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class TriMesh:
    """Immutable indexed triangle mesh with exactly one boundary loop.

    Parameters
    ----------
    vertices : (V, 3) or (V, 2) float array
        3D positions; 2D input is padded with z = 0.
    faces : (F, 3) int array
        Counterclockwise vertex-index triples.

    Raises
    ------
    MeshTopologyError
        If an edge is non-manifold, the orientation is inconsistent, or the
        mesh is not a topological disk (V - E + F = 1, one boundary loop).
    """

    def __init__(self, vertices, faces):
        v = np.ascontiguousarray(vertices, dtype=np.float64)
        f = np.ascontiguousarray(faces, dtype=np.int32)
        if v.ndim != 2 or v.shape[1] not in (2, 3):
            raise MeshTopologyError("vertices must be (V, 2) or (V, 3)")
        if v.shape[1] == 2:
            v = np.column_stack([v, np.zeros(len(v))])
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshTopologyError("faces must be (F, 3)")
        if len(f) == 0 or len(v) < 3:
            raise MeshTopologyError("mesh must have at least one face and three vertices")
        if f.min() < 0 or f.max() >= len(v):
            raise MeshTopologyError("face index out of range")
        if ((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 2] == f[:, 0])).any():
            raise MeshTopologyError("face references a repeated vertex")

        self.vertices = _freeze(v)
        self.faces = _freeze(f)
        self.boundary = _freeze(self._validate_topology())

    def _validate_topology(self) -> np.ndarray:
        f = self.faces.astype(np.int64)
        nv = len(self.vertices)
        tails = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        heads = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        directed = tails * nv + heads
        if len(np.unique(directed)) != len(directed):
            raise MeshTopologyError("non-manifold edge: a directed edge occurs twice "
                                    "(duplicated face or inconsistent orientation)")
        lo = np.minimum(tails, heads)
        hi = np.maximum(tails, heads)
        undirected, counts = np.unique(lo * nv + hi, return_counts=True)
        if (counts > 2).any():
            raise MeshTopologyError("non-manifold edge: an edge borders more than two faces")

        n_edges = len(undirected)
        chi = nv - n_edges + len(f)

        # Boundary = directed edges whose undirected twin is unpaired.
        order = np.argsort(lo * nv + hi, kind="stable")
        edge_count = counts[np.searchsorted(undirected, (lo * nv + hi))]
        bmask = edge_count == 1
        btails = tails[bmask]
        bheads = heads[bmask]
        n_bedges = len(btails)

        loops = 0
        loop_start = None
        if n_bedges:
            succ = {}
            for a, b in zip(btails.tolist(), bheads.tolist()):
                if a in succ:
                    raise MeshTopologyError(f"non-manifold boundary vertex {a}")
                succ[a] = b
            seen = set()
            for a in sorted(succ):
                if a in seen:
                    continue
                loops += 1
                if loop_start is None:
                    loop_start = a
                cur = a
                while True:
                    seen.add(cur)
                    cur = succ[cur]
                    if cur == a:
                        break
        if chi != 1 or loops != 1:
            raise MeshTopologyError(
                f"disk topology violated: {loops} boundary loops, Euler characteristic {chi}")

        start = min(succ)
        loop = [start]
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            cur = succ[cur]
        self._n_edges = n_edges
        return np.asarray(loop, dtype=np.int32)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def n_edges(self) -> int:
        return self._n_edges

    @property
    def euler_characteristic(self) -> int:
        return self.n_vertices - self.n_edges + self.n_faces

    def interior_mask(self) -> np.ndarray:
        m = np.ones(self.n_vertices, dtype=bool)
        m[self.boundary] = False
        return m

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with lo < hi, lexicographically sorted."""
        f = self.faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        return np.unique(e, axis=0)


class PlanarMesh:
    """A TriMesh together with one 2D (uv) point per vertex."""

    def __init__(self, base: TriMesh, uv):
        uv = np.ascontiguousarray(uv, dtype=np.float64)
        if uv.shape != (base.n_vertices, 2):
            raise MeshTopologyError(
                f"uv count {uv.shape} does not match vertex count {base.n_vertices}")
        self.base = base
        self.uv = _freeze(uv)
        self._locator = None

    @property
    def faces(self) -> np.ndarray:
        return self.base.faces

    def signed_areas(self) -> np.ndarray:
        t = self.uv[self.base.faces]
        return 0.5 * ((t[:, 1, 0] - t[:, 0, 0]) * (t[:, 2, 1] - t[:, 0, 1])
                      - (t[:, 2, 0] - t[:, 0, 0]) * (t[:, 1, 1] - t[:, 0, 1]))

    @property
    def fold_free(self) -> bool:
        return bool((self.signed_areas() > 0.0).all())

    def fold_count(self) -> int:
        return int((self.signed_areas() <= 0.0).sum())

    def face_charts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-corner chart coordinates (g, h) and positive face areas."""
        t = self.uv[self.base.faces]
        return t[:, :, 0].copy(), t[:, :, 1].copy(), np.abs(self.signed_areas())

    def locate(self, points, tol: float = 1e-9):
        """Locate points in the uv triangulation.

        Returns (face_idx, bary); face_idx is -1 where the point lies outside
        every triangle. Ties on shared edges resolve to the smallest face index.
        """
        if self._locator is None:
            self._locator = PointLocator(self.uv, self.base.faces)
        return self._locator.locate(points, tol=tol)

    def with_uv(self, uv) -> "PlanarMesh":
        return PlanarMesh(self.base, uv)


@dataclass(frozen=True)
class FaceDerivatives:
    """Partials (a, b, c, d) of a piecewise-linear map, one value per face:
    u_x = a, u_y = b, v_x = c, v_y = d."""
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray


def hat_gradients(g: np.ndarray, h: np.ndarray, area: np.ndarray):
    """Gradients of the three hat basis functions on each face.

    g, h are (F, 3) per-corner chart coordinates, area the positive face
    areas. Returns (A, B) with A[f, i] = d(phi_i)/dx and B[f, i] = d(phi_i)/dy.
    """
    inv2a = 1.0 / (2.0 * area)
    A = (h[:, [1, 2, 0]] - h[:, [2, 0, 1]]) * inv2a[:, None]
    B = (g[:, [2, 0, 1]] - g[:, [1, 2, 0]]) * inv2a[:, None]
    return A, B


def isometric_face_charts(mesh: TriMesh):
    """Rigidly flatten each 3D face into its own 2D chart.

    Returns per-corner coordinates (g, h) and face areas. Corner 0 maps to the
    origin, corner 1 onto the positive x-axis, corner 2 to positive y.
    """
    p = mesh.vertices[mesh.faces]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    l1 = np.linalg.norm(e1, axis=1)
    if (l1 == 0.0).any():
        raise DegenerateFaceError("zero-length edge in face chart")
    x2 = (e1 * e2).sum(axis=1) / l1
    y2 = np.linalg.norm(np.cross(e1, e2), axis=1) / l1
    g = np.column_stack([np.zeros_like(l1), l1, x2])
    h = np.column_stack([np.zeros_like(l1), np.zeros_like(l1), y2])
    return g, h, 0.5 * l1 * y2


def face_areas(mesh) -> np.ndarray:
    """Positive face areas (half cross-product magnitude per face)."""
    if isinstance(mesh, PlanarMesh):
        return np.abs(mesh.signed_areas())
    p = mesh.vertices[mesh.faces]
    return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)


def check_degenerate(areas: np.ndarray, rel_tol: float = 1e-14) -> None:
    thr = rel_tol * float(np.mean(areas))
    bad = np.flatnonzero(areas < thr)
    if bad.size:
        raise DegenerateFaceError(f"degenerate faces (area < {rel_tol} of mean): {bad[:10].tolist()}")


def face_derivatives(source: PlanarMesh, target_uv, *, degenerate_rel_tol: float = 1e-14) -> FaceDerivatives:
    """Exact per-face partials of the piecewise-linear map source.uv -> target_uv."""
    target_uv = np.asarray(target_uv, dtype=np.float64)
    if target_uv.shape != (source.base.n_vertices, 2):
        raise ValueError("target_uv count does not match vertex count")
    g, h, area = source.face_charts()
    check_degenerate(area, degenerate_rel_tol)
    A, B = hat_gradients(g, h, area)
    s = target_uv[:, 0][source.faces]
    t = target_uv[:, 1][source.faces]
    return FaceDerivatives(a=(A * s).sum(axis=1), b=(B * s).sum(axis=1),
                           c=(A * t).sum(axis=1), d=(B * t).sum(axis=1))


def boundary_loop(mesh: TriMesh) -> np.ndarray:
    """Ordered boundary loop, counterclockwise, starting at the smallest index."""
    return mesh.boundary


def face_adjacency(mesh: TriMesh):
    """Pairs of faces sharing an interior edge.

    Returns (pairs (Ei, 2) int array with pairs[:, 0] < pairs[:, 1], sorted).
    """
    f = mesh.faces.astype(np.int64)
    nv = mesh.n_vertices
    tails = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    heads = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    fid = np.tile(np.arange(len(f)), 3)
    key = np.minimum(tails, heads) * nv + np.maximum(tails, heads)
    order = np.argsort(key, kind="stable")
    key_s = key[order]
    fid_s = fid[order]
    same = key_s[1:] == key_s[:-1]
    a = fid_s[:-1][same]
    b = fid_s[1:][same]
    pairs = np.column_stack([np.minimum(a, b), np.maximum(a, b)])
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def mean_edge_length(points: np.ndarray, edges: np.ndarray) -> float:
    d = points[edges[:, 0]] - points[edges[:, 1]]
    return float(np.mean(np.linalg.norm(d, axis=1)))


class PointLocator:
    """Uniform-grid point location in a fixed triangulation."""

    def __init__(self, uv, faces, cells_per_axis: int | None = None):
        uv = np.ascontiguousarray(uv, dtype=np.float64)
        faces = np.ascontiguousarray(faces, dtype=np.int32)
        self.uv = uv
        self.faces = faces
        tri = uv[faces]
        n = cells_per_axis or max(1, int(np.sqrt(len(faces) / 2.0)))
        self.nx = self.ny = n
        x0, y0 = uv.min(axis=0)
        x1, y1 = uv.max(axis=0)
        pad = 1e-12 + 1e-9 * max(x1 - x0, y1 - y0)
        self.x0, self.y0 = x0 - pad, y0 - pad
        self.inv_dx = n / (x1 - x0 + 2 * pad)
        self.inv_dy = n / (y1 - y0 + 2 * pad)

        fx0 = np.clip(((tri[:, :, 0].min(axis=1) - self.x0) * self.inv_dx).astype(np.int64), 0, n - 1)
        fx1 = np.clip(((tri[:, :, 0].max(axis=1) - self.x0) * self.inv_dx).astype(np.int64), 0, n - 1)
        fy0 = np.clip(((tri[:, :, 1].min(axis=1) - self.y0) * self.inv_dy).astype(np.int64), 0, n - 1)
        fy1 = np.clip(((tri[:, :, 1].max(axis=1) - self.y0) * self.inv_dy).astype(np.int64), 0, n - 1)

        cells = []
        ids = []
        wx = fx1 - fx0
        wy = fy1 - fy0
        for dx in range(int(wx.max()) + 1):
            for dy in range(int(wy.max()) + 1):
                m = (wx >= dx) & (wy >= dy)
                if not m.any():
                    continue
                cells.append((fx0[m] + dx) * n + (fy0[m] + dy))
                ids.append(np.flatnonzero(m))
        cell_id = np.concatenate(cells)
        face_id = np.concatenate(ids)
        order = np.lexsort((face_id, cell_id))
        self.cell_faces = face_id[order].astype(np.int32)
        counts = np.bincount(cell_id, minlength=n * n)
        self.cell_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def locate(self, points, tol: float = 1e-9):
        pts = np.ascontiguousarray(np.atleast_2d(points), dtype=np.float64)
        return _kernels.locate_kernel(
            self.uv, self.faces, self.cell_ptr, self.cell_faces,
            self.nx, self.ny, self.x0, self.y0, self.inv_dx, self.inv_dy,
            pts, tol)

    def locate_or_raise(self, points, tol: float = 1e-9):
        idx, bary = self.locate(points, tol=tol)
        if (idx < 0).any():
            pts = np.atleast_2d(points)
            miss = int(np.flatnonzero(idx < 0)[0])
            tri = self.uv[self.faces]
            cent = tri.mean(axis=1)
            dist = float(np.min(np.linalg.norm(cent - pts[miss], axis=1)))
            raise PointLocationError(
                f"point {pts[miss].tolist()} outside all triangles "
                f"(nearest face centroid at distance {dist:.3g})")
        return idx, bary


# ----------------------------------------------------------------------------
# OFF / OBJ input and output (ASCII only)

def _tokens(path: Path):
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield ln, line.split()


def _read_off(path: Path):
    toks = list(_tokens(path))
    if not toks:
        raise MeshParseError(f"{path}: empty OFF file")
    flat: list[str] = []
    for _, t in toks:
        flat.extend(t)
    if flat[0].upper() != "OFF":
        raise MeshParseError(f"{path}: missing OFF header")
    flat = flat[1:]
    try:
        nv, nf = int(flat[0]), int(flat[1])
        pos = 3  # skip edge count
        verts = np.array(flat[pos:pos + 3 * nv], dtype=np.float64).reshape(nv, 3)
        pos += 3 * nv
        faces = []
        for _ in range(nf):
            k = int(flat[pos])
            if k != 3:
                raise MeshParseError(f"{path}: non-triangle face with {k} vertices")
            faces.append([int(flat[pos + 1]), int(flat[pos + 2]), int(flat[pos + 3])])
            pos += 1 + k
    except (ValueError, IndexError) as exc:
        raise MeshParseError(f"{path}: malformed OFF data ({exc})") from exc
    return verts, np.asarray(faces, dtype=np.int32), None


def _read_obj(path: Path):
    verts: list[list[float]] = []
    uvs: list[list[float]] = []
    faces: list[list[int]] = []
    uv_ok = True
    for ln, t in _tokens(path):
        if t[0] == "v":
            if len(t) < 4:
                raise MeshParseError(f"{path}:{ln}: vertex needs 3 coordinates")
            verts.append([float(x) for x in t[1:4]])
        elif t[0] == "vt":
            uvs.append([float(t[1]), float(t[2])])
        elif t[0] == "f":
            if len(t) != 4:
                raise MeshParseError(f"{path}:{ln}: non-triangle face")
            idx = []
            for w in t[1:]:
                parts = w.split("/")
                i = int(parts[0])
                if i < 0:
                    raise MeshParseError(f"{path}:{ln}: negative OBJ indices unsupported")
                idx.append(i - 1)
                if len(parts) < 2 or not parts[1] or int(parts[1]) - 1 != i - 1:
                    uv_ok = False
            faces.append(idx)
    if not verts or not faces:
        raise MeshParseError(f"{path}: no vertices or faces found")
    v = np.asarray(verts, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int32)
    uv = None
    if uvs and uv_ok and len(uvs) == len(verts):
        uv = np.asarray(uvs, dtype=np.float64)
    return v, f, uv


def load_mesh(path) -> TriMesh:
    """Read and validate a TriMesh from an ASCII OFF or OBJ file."""
    path = Path(path)
    if not path.exists():
        raise MeshParseError(f"{path}: file does not exist")
    suffix = path.suffix.lower()
    if suffix == ".off":
        v, f, _ = _read_off(path)
    elif suffix == ".obj":
        v, f, _ = _read_obj(path)
    else:
        raise MeshParseError(f"{path}: unsupported extension {suffix!r} (expected .off or .obj)")
    return TriMesh(v, f)


def load_planar(path) -> PlanarMesh:
    """Read a PlanarMesh.

    OBJ files with per-vertex texture coordinates use those as uv; otherwise
    the x, y coordinates of the vertices are taken as the planar embedding.
    """
    path = Path(path)
    if path.suffix.lower() == ".obj":
        v, f, uv = _read_obj(path)
    elif path.suffix.lower() == ".off":
        v, f, uv = _read_off(path)
    else:
        raise MeshParseError(f"{path}: unsupported extension")
    base = TriMesh(v, f)
    return PlanarMesh(base, uv if uv is not None else v[:, :2].copy())


def save_mesh(mesh: TriMesh, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".off":
        lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
        lines += [" ".join(_WRITE_FMT % x for x in row) for row in mesh.vertices]
        lines += ["3 %d %d %d" % tuple(fc) for fc in mesh.faces]
    elif path.suffix.lower() == ".obj":
        lines = ["v " + " ".join(_WRITE_FMT % x for x in row) for row in mesh.vertices]
        lines += ["f %d %d %d" % (a + 1, b + 1, c + 1) for a, b, c in mesh.faces]
    else:
        raise MeshParseError(f"{path}: unsupported extension")
    path.write_text("\n".join(lines) + "\n")


def save_planar(planar: PlanarMesh, path) -> None:
    """Write a PlanarMesh as OBJ (v + vt + f v/vt) or OFF (uv as x, y, z=0)."""
    path = Path(path)
    if path.suffix.lower() == ".obj":
        lines = ["v " + " ".join(_WRITE_FMT % x for x in row) for row in planar.base.vertices]
        lines += ["vt " + " ".join(_WRITE_FMT % x for x in row) for row in planar.uv]
        lines += ["f %d/%d %d/%d %d/%d" % (a + 1, a + 1, b + 1, b + 1, c + 1, c + 1)
                  for a, b, c in planar.faces]
        path.write_text("\n".join(lines) + "\n")
    elif path.suffix.lower() == ".off":
        flat = TriMesh(np.column_stack([planar.uv, np.zeros(len(planar.uv))]), planar.faces)
        save_mesh(flat, path)
    else:
        raise MeshParseError(f"{path}: unsupported extension")
