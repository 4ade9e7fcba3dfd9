"""Conformal parameterization of a disk-topology surface onto the unit disk.

The boundary is first laid out on the circle by arc length and the interior
solved harmonically (cotangent weights from the 3D metric, uniform-weight
fallback if that folds). Conformality is then refined iteratively: measure
the Beltrami coefficient of the current map in per-face isometric charts,
drive it toward zero with the Linear Beltrami Solver while letting boundary
vertices slide along the circle, and reject any step that increases the mean
|mu| or folds a face.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .beltrami import (BoundaryCondition, _DirichletSolver, _lbs_core,
                       derivatives_from_charts, mu_from_derivatives)
from .errors import SolveError
from .mesh import PlanarMesh, TriMesh, check_degenerate, isometric_face_charts

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiskParam:
    """Unit-disk parameterization with conformality diagnostics."""
    planar: PlanarMesh
    mu_abs: np.ndarray            # final per-face |mu|
    history: tuple                # (mean |mu|, max |mu|) per iterate
    converged: bool
    pinned_vertex: int

    @property
    def mean_mu(self) -> float:
        return float(self.mu_abs.mean())


def _signed_areas(uv, faces):
    t = uv[faces]
    return 0.5 * ((t[:, 1, 0] - t[:, 0, 0]) * (t[:, 2, 1] - t[:, 0, 1])
                  - (t[:, 2, 0] - t[:, 0, 0]) * (t[:, 1, 1] - t[:, 0, 1]))


def _arc_length_angles(mesh: TriMesh) -> np.ndarray:
    loop = mesh.boundary
    p = mesh.vertices[loop]
    seg = np.linalg.norm(np.roll(p, -1, axis=0) - p, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg[:-1])])
    return 2.0 * np.pi * cum / float(seg.sum())


def _uniform_harmonic(mesh: TriMesh, boundary_uv: np.ndarray) -> np.ndarray:
    """Tutte embedding: uniform weights, boundary pinned to the circle."""
    edges = mesh.edges()
    nv = mesh.n_vertices
    data = np.ones(len(edges))
    W = sp.coo_matrix((np.concatenate([data, data]),
                       (np.concatenate([edges[:, 0], edges[:, 1]]),
                        np.concatenate([edges[:, 1], edges[:, 0]]))), shape=(nv, nv)).tocsr()
    L = sp.diags(np.asarray(W.sum(axis=1)).ravel()) - W
    solver = _DirichletSolver(L.tocsr(), mesh.boundary.astype(np.int64), nv)
    ux = solver.solve(boundary_uv[:, 0])
    uy = solver.solve(boundary_uv[:, 1])
    return np.column_stack([ux, uy])


def _mu_of_map(g, h, area, faces, uv) -> np.ndarray:
    a, b, c, d = derivatives_from_charts(g, h, area, faces, uv)
    return mu_from_derivatives(a, b, c, d)


def disk_conformal_parameterize(mesh: TriMesh, max_iter: int = 20,
                                tol: float = 1e-4) -> DiskParam:
    """Fold-free conformal parameterization onto the unit disk.

    Iterates until the mean |mu| improvement drops below `tol` or `max_iter`
    is reached; non-convergence returns the best iterate with a warning.
    """
    g, h, area = isometric_face_charts(mesh)
    check_degenerate(area)
    faces = mesh.faces
    nv = mesh.n_vertices
    loop = mesh.boundary
    theta = _arc_length_angles(mesh)
    boundary_uv = np.column_stack([np.cos(theta), np.sin(theta)])
    pinned_vertex = int(loop[0])  # smallest boundary index, pinned at angle 0

    pins = [(int(v), (float(x), float(y))) for v, (x, y) in zip(loop, boundary_uv)]
    uv, _ = _lbs_core(faces, g, h, area, nv, loop, np.zeros(len(faces), dtype=complex),
                      BoundaryCondition.fixed(pins))
    if (_signed_areas(uv, faces) <= 0).any():
        logger.info("cotangent harmonic map folded; retrying with uniform weights")
        uv = _uniform_harmonic(mesh, boundary_uv)
        bad = np.flatnonzero(_signed_areas(uv, faces) <= 0)
        if bad.size:
            raise SolveError(f"fold unrecoverable after uniform-weight fallback; "
                             f"faces {bad[:10].tolist()}")

    mu_cur = _mu_of_map(g, h, area, faces, uv)
    mean_cur = float(np.abs(mu_cur).mean())
    history = [(mean_cur, float(np.abs(mu_cur).max()))]
    converged = mean_cur < tol

    for _ in range(max_iter):
        if converged:
            break
        t = 1.0
        accepted = False
        for _ in range(6):
            target = (1.0 - t) * mu_cur
            bc = BoundaryCondition.circle(pinned_vertex, (1.0, 0.0), angles=theta)
            uv_new, info = _lbs_core(faces, g, h, area, nv, loop, target, bc)
            if (_signed_areas(uv_new, faces) <= 0).any():
                t *= 0.5
                continue
            mu_new = _mu_of_map(g, h, area, faces, uv_new)
            mean_new = float(np.abs(mu_new).mean())
            if mean_new <= mean_cur + 1e-12:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        improvement = mean_cur - mean_new
        uv, mu_cur, mean_cur = uv_new, mu_new, mean_new
        theta = info["angles"]
        history.append((mean_cur, float(np.abs(mu_cur).max())))
        if improvement < tol:
            converged = True

    if not converged:
        warnings.warn(f"disk parameterization did not converge "
                      f"(last mean |mu| = {mean_cur:.3g}); returning best iterate")
    planar = PlanarMesh(mesh, uv)
    return DiskParam(planar=planar, mu_abs=np.abs(mu_cur), history=tuple(history),
                     converged=converged, pinned_vertex=pinned_vertex)


def pull_back_to_surface(param: DiskParam, points) -> np.ndarray:
    """Map 2D points in the disk back onto the 3D surface barycentrically."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    planar = param.planar
    if planar._locator is None:
        planar.locate(pts[:1])  # build the locator
    fidx, bary = planar._locator.locate_or_raise(pts)
    tri = planar.base.vertices[planar.faces[fidx]]
    return (tri * bary[:, :, None]).sum(axis=1)
