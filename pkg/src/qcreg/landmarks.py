"""Landmark curve extraction along curvature valleys and the curve metrics.

Curves are found as shortest paths on the uv mesh graph under the edge weight
length * (floor + mean endpoint darkness), where darkness is the vertex
curvature rescaled to [0, 1] over the whole mesh (0 = darkest = sulci). The
endpoints snap to the nearest mesh vertices.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from heapq import heappop, heappush
from pathlib import Path

import numpy as np

from .curvature import CurvatureField, rescale_unit
from .mesh import PlanarMesh

logger = logging.getLogger(__name__)

DARKNESS_FLOOR = 0.05


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered landmark curves with matching target positions.

    curves[i] and targets[i] are (m_i, 2) arrays of source and target disk
    positions; endpoints[i] is the (start, end) pair of curve i's source.
    """
    curves: tuple
    targets: tuple
    endpoints: tuple

    def __post_init__(self):
        curves = tuple(np.ascontiguousarray(c, dtype=np.float64) for c in self.curves)
        targets = tuple(np.ascontiguousarray(t, dtype=np.float64) for t in self.targets)
        if len(curves) != len(targets):
            raise ValueError("curve and target counts differ")
        for c, t in zip(curves, targets):
            if len(c) < 2:
                raise ValueError("each landmark curve needs at least 2 points")
            if c.shape != t.shape:
                raise ValueError("curve and target lengths differ")
            for pts in (c, t):
                if (np.linalg.norm(pts, axis=1) > 1.0 + 1e-12).any():
                    raise ValueError("landmark point outside the closed unit disk")
        eps = tuple((np.asarray(s, dtype=np.float64), np.asarray(e, dtype=np.float64))
                    for s, e in self.endpoints)
        if len(eps) != len(curves):
            raise ValueError("endpoint count differs from curve count")
        for c in curves + targets:
            c.flags.writeable = False
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "targets", targets)
        object.__setattr__(self, "endpoints", eps)

    @staticmethod
    def from_curves(curves, targets=None) -> "LandmarkSet":
        curves = tuple(np.asarray(c, dtype=np.float64) for c in curves)
        if targets is None:
            targets = curves
        endpoints = tuple((c[0], c[-1]) for c in curves)
        return LandmarkSet(curves=curves, targets=tuple(targets), endpoints=endpoints)

    def n_points(self) -> int:
        return int(sum(len(c) for c in self.curves))

    def all_points(self) -> np.ndarray:
        return np.vstack(self.curves)

    def all_targets(self) -> np.ndarray:
        return np.vstack(self.targets)


def _edge_graph(disk: PlanarMesh, darkness: np.ndarray, floor: float):
    """CSR adjacency of the uv graph with curvature-weighted edge costs."""
    edges = disk.base.edges()
    d = disk.uv[edges[:, 0]] - disk.uv[edges[:, 1]]
    length = np.linalg.norm(d, axis=1)
    cost = length * (floor + 0.5 * (darkness[edges[:, 0]] + darkness[edges[:, 1]]))
    nv = disk.base.n_vertices
    heads = np.concatenate([edges[:, 1], edges[:, 0]])
    tails = np.concatenate([edges[:, 0], edges[:, 1]])
    costs = np.concatenate([cost, cost])
    order = np.lexsort((heads, tails))
    tails, heads, costs = tails[order], heads[order], costs[order]
    ptr = np.concatenate([[0], np.cumsum(np.bincount(tails, minlength=nv))])
    return ptr.astype(np.int64), heads.astype(np.int64), costs


def _dijkstra(ptr, adj, w, src: int, dst: int):
    """Deterministic Dijkstra; neighbor lists are in ascending index order and
    equal-cost relaxations keep the first-found predecessor."""
    n = len(ptr) - 1
    dist = np.full(n, np.inf)
    parent = np.full(n, -1, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    dist[src] = 0.0
    heap = [(0.0, src)]
    while heap:
        d, u = heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == dst:
            break
        for e in range(ptr[u], ptr[u + 1]):
            v = adj[e]
            nd = d + w[e]
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heappush(heap, (nd, v))
    if not done[dst]:
        raise ValueError("no path between endpoints (disconnected graph)")
    path = [dst]
    while path[-1] != src:
        path.append(int(parent[path[-1]]))
    path.reverse()
    return np.asarray(path, dtype=np.int64), float(dist[dst])


def detect_landmark_curve(disk: PlanarMesh, H: CurvatureField, start, end,
                          darkness_floor: float = DARKNESS_FLOOR) -> np.ndarray:
    """Extract a landmark polyline between two endpoints along dark valleys.

    Returns the uv polyline of the shortest path; a single point when both
    endpoints snap to the same vertex.
    """
    start = np.asarray(start, dtype=np.float64)
    end = np.asarray(end, dtype=np.float64)
    for p in (start, end):
        if np.linalg.norm(p) > 1.0 + 1e-9:
            raise ValueError(f"endpoint {p.tolist()} outside the unit disk")
    d2s = np.linalg.norm(disk.uv - start, axis=1)
    d2e = np.linalg.norm(disk.uv - end, axis=1)
    vs = int(np.argmin(d2s))
    ve = int(np.argmin(d2e))
    logger.info("endpoint snap distances: %.3g, %.3g", d2s[vs], d2e[ve])
    if vs == ve:
        return disk.uv[[vs]].copy()
    darkness = rescale_unit(H.values)
    ptr, adj, w = _edge_graph(disk, darkness, darkness_floor)
    path, cost = _dijkstra(ptr, adj, w, vs, ve)
    logger.debug("path of %d vertices, cost %.6g", len(path), cost)
    return disk.uv[path].copy()


def path_cost(disk: PlanarMesh, H: CurvatureField, path_vertices,
              darkness_floor: float = DARKNESS_FLOOR) -> float:
    """Cost of a given vertex path under the detection weight."""
    darkness = rescale_unit(H.values)
    p = np.asarray(path_vertices, dtype=np.int64)
    seg = disk.uv[p[1:]] - disk.uv[p[:-1]]
    length = np.linalg.norm(seg, axis=1)
    dk = 0.5 * (darkness[p[1:]] + darkness[p[:-1]])
    return float((length * (darkness_floor + dk)).sum())


def resample_curve(curve, m: int) -> np.ndarray:
    """Resample a polyline at m uniform arc-length positions.

    Endpoints are preserved exactly; a single-point (or zero-length) curve
    yields m copies of the point.
    """
    pts = np.atleast_2d(np.asarray(curve, dtype=np.float64))
    if len(pts) == 1:
        return np.repeat(pts, max(m, 1), axis=0)
    if m < 2:
        raise ValueError("m < 2 for a multi-point curve")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 0.0])
    pts = pts[keep]
    if len(pts) == 1:
        return np.repeat(pts, m, axis=0)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])
    t = np.linspace(0.0, s[-1], m)
    out = np.column_stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])])
    out[0] = pts[0]
    out[-1] = pts[-1]
    return out


def curve_discrepancy(detected, reference) -> float:
    """Sum of squared point distances between two equal-length sequences."""
    a = np.asarray(detected, dtype=np.float64)
    b = np.asarray(reference, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"sequence shapes differ: {a.shape} vs {b.shape}")
    return float(((a - b) ** 2).sum())


# ----------------------------------------------------------------------------
# Landmark file format: one block per curve,
#   curve <id> m=<count>
#   x y [tx ty]          (4 columns when targets accompany the curve)

def write_landmarks(lm: LandmarkSet, path) -> None:
    lines = []
    for cid, (c, t) in enumerate(zip(lm.curves, lm.targets)):
        lines.append(f"curve {cid} m={len(c)}")
        same = np.array_equal(c, t)
        for k in range(len(c)):
            if same:
                lines.append("%.17g %.17g" % (c[k, 0], c[k, 1]))
            else:
                lines.append("%.17g %.17g %.17g %.17g" % (c[k, 0], c[k, 1], t[k, 0], t[k, 1]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_landmarks(path) -> LandmarkSet:
    curves: list[np.ndarray] = []
    targets: list[np.ndarray] = []
    cur: list[list[float]] = []

    def flush():
        if cur:
            arr = np.asarray(cur, dtype=np.float64)
            curves.append(arr[:, :2])
            targets.append(arr[:, 2:4] if arr.shape[1] >= 4 else arr[:, :2])
            cur.clear()

    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("curve"):
            flush()
            continue
        vals = [float(x) for x in line.split()]
        if len(vals) not in (2, 4):
            raise ValueError(f"{path}: landmark line needs 2 or 4 columns: {line!r}")
        cur.append(vals)
    flush()
    if not curves:
        raise ValueError(f"{path}: no landmark curves found")
    return LandmarkSet.from_curves(curves, targets)
