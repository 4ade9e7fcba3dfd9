"""End-to-end orchestration: parameterize control and subjects, extract
landmark curves between labeled endpoints, register disks, and pull the
result back onto the control surface. Includes the batch runner and the
cross-subject aggregation.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .curvature import CurvatureField, mean_curvature
from .landmarks import LandmarkSet, detect_landmark_curve, resample_curve, write_landmarks
from .mesh import PlanarMesh, TriMesh, save_mesh, save_planar
from .parameterize import DiskParam, disk_conformal_parameterize, pull_back_to_surface
from .registration import RegistrationParams, RegistrationResult, register
from .report import read_report, write_report

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ControlBundle:
    """Control surface with its parameterization and landmark targets."""
    mesh: TriMesh
    param: DiskParam
    curvature: CurvatureField
    targets: LandmarkSet


def read_endpoints(path):
    """Endpoint file: one `sx sy ex ey` line per curve (disk coordinates)."""
    pairs = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        vals = [float(x) for x in line.split()]
        if len(vals) != 4:
            raise ValueError(f"{path}: endpoint line needs 4 numbers: {raw!r}")
        pairs.append((np.array(vals[:2]), np.array(vals[2:])))
    if not pairs:
        raise ValueError(f"{path}: no endpoint pairs found")
    return pairs


def _detect_curves(disk: PlanarMesh, H: CurvatureField, endpoints, m: int):
    curves = []
    for start, end in endpoints:
        poly = detect_landmark_curve(disk, H, start, end)
        curves.append(resample_curve(poly, m))
    return curves


def prepare_control(mesh: TriMesh, endpoints, m: int = 16,
                    targets: LandmarkSet | None = None,
                    max_iter: int = 20, tol: float = 1e-4) -> ControlBundle:
    """Parameterize the control surface and fix its landmark target curves.

    When `targets` is not given, the curves are detected on the control disk
    from the same endpoint pairs used for the subjects.
    """
    param = disk_conformal_parameterize(mesh, max_iter=max_iter, tol=tol)
    H = mean_curvature(mesh)
    if targets is None:
        curves = _detect_curves(param.planar, H, endpoints, m)
        targets = LandmarkSet.from_curves(curves)
    return ControlBundle(mesh=mesh, param=param, curvature=H, targets=targets)


def _closest_point_bary(tri: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of the closest point of a 2D triangle to p."""
    a, b, c = tri
    ab, ac, ap = b - a, c - a, p - a
    d1, d2 = ab @ ap, ac @ ap
    if d1 <= 0 and d2 <= 0:
        return np.array([1.0, 0.0, 0.0])
    bp = p - b
    d3, d4 = ab @ bp, ac @ bp
    if d3 >= 0 and d4 <= d3:
        return np.array([0.0, 1.0, 0.0])
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return np.array([1.0 - v, v, 0.0])
    cp = p - c
    d5, d6 = ab @ cp, ac @ cp
    if d6 >= 0 and d5 <= d6:
        return np.array([0.0, 0.0, 1.0])
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return np.array([1.0 - w, 0.0, w])
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return np.array([0.0, 1.0 - w, w])
    denom = va + vb + vc
    return np.array([va, vb, vc]) / denom


def pull_back_tolerant(param: DiskParam, points: np.ndarray) -> np.ndarray:
    """Pull points back to the 3D surface, projecting points that fall in the
    sliver between the polygonal mesh boundary and the unit circle onto the
    nearest face."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    planar = param.planar
    fidx, bary = planar.locate(pts)
    missing = np.flatnonzero(fidx < 0)
    if missing.size:
        centroids = planar.uv[planar.faces].mean(axis=1)
        tree = cKDTree(centroids)
        _, near = tree.query(pts[missing], k=min(8, len(centroids)))
        near = np.atleast_2d(near)
        for row, pi in enumerate(missing):
            best, best_d, best_b = -1, np.inf, None
            for f in near[row]:
                corners = planar.uv[planar.faces[f]]
                bb = _closest_point_bary(corners, pts[pi])
                q = bb @ corners
                d = float(np.linalg.norm(q - pts[pi]))
                if d < best_d:
                    best, best_d, best_b = int(f), d, bb
            fidx[pi] = best
            bary[pi] = best_b
    tri3 = planar.base.vertices[planar.faces[fidx]]
    return (tri3 * bary[:, :, None]).sum(axis=1)


def run_pair(subject: TriMesh, control: ControlBundle, endpoints,
             params: RegistrationParams = RegistrationParams(), m: int = 16,
             subject_id: str = "subject", param_iters: int = 20,
             param_tol: float = 1e-4):
    """Full per-subject pipeline; returns (registered mesh, report entry)."""
    timings = {}
    t_all = time.perf_counter()

    t0 = time.perf_counter()
    sparam = disk_conformal_parameterize(subject, max_iter=param_iters, tol=param_tol)
    timings["parameterize"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    H = mean_curvature(subject)
    timings["curvature"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    curves = _detect_curves(sparam.planar, H, endpoints, m)
    lm = LandmarkSet(curves=tuple(curves), targets=tuple(control.targets.curves),
                     endpoints=tuple((c[0], c[-1]) for c in curves))
    timings["landmarks"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    result: RegistrationResult = register(sparam.planar, lm, params)
    timings["register"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    positions3d = pull_back_tolerant(control.param, result.map.uv)
    registered = TriMesh(positions3d, subject.faces)
    timings["pull_back"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_all

    entry = {
        "subject": subject_id,
        "parameterization": {
            "mean_mu_per_iter": [mm for mm, _ in sparam.history],
            "max_mu_per_iter": [mx for _, mx in sparam.history],
            "converged": sparam.converged,
        },
        "n_curves": len(curves),
        "points_per_curve": m,
        "metrics": result.metrics.to_dict(),
        "loss_trace": [list(row) for row in result.loss_trace],
        "mu_abs": [float(x) for x in result.mu.abs],
        "registration_converged": result.converged,
        "timings": timings,
    }
    return registered, result, sparam, entry


def aggregate(entries) -> dict:
    """Cross-subject summary: table row, pooled histogram, per-face stats.

    Standard deviations use the population convention. Per-face statistics
    require all subjects to share the face count; otherwise only the
    aggregate scalars are reported.
    """
    entries = sorted(entries, key=lambda e: e["subject"])
    if not entries:
        raise ValueError("no subject entries to aggregate")
    mean_mus = np.array([e["metrics"]["mean_mu"] for e in entries])
    rmses = np.array([e["metrics"]["landmark_rmse"] for e in entries])
    times = np.array([e["metrics"]["wall_time_seconds"] for e in entries])
    hists = np.array([e["metrics"]["histogram"] for e in entries], dtype=np.int64)

    table_row = {
        "method": "qcreg",
        "mean_mu": float(mean_mus.mean()),
        "sd_mu": float(mean_mus.std()),
        "landmark_error": float(rmses.mean()),
        "sd_landmark_error": float(rmses.std()),
        "time_seconds": float(times.mean()),
    }
    out = {
        "subjects": [e["subject"] for e in entries],
        "table": table_row,
        "pooled_histogram": [int(x) for x in hists.sum(axis=0)],
    }
    counts = {len(e.get("mu_abs", [])) for e in entries}
    if len(counts) == 1 and counts != {0}:
        stack = np.array([e["mu_abs"] for e in entries])
        out["per_face_mean_mu"] = [float(x) for x in stack.mean(axis=0)]
        out["per_face_sd_mu"] = [float(x) for x in stack.std(axis=0)]
    else:
        logger.warning("per-face statistics skipped: subjects have mismatched face counts")
    return out


def run_batch(control_mesh: TriMesh, subjects, endpoints,
              params: RegistrationParams = RegistrationParams(), m: int = 16,
              workdir=None, resume: bool = False,
              control_targets: LandmarkSet | None = None) -> dict:
    """Run the pipeline over a batch of (name, TriMesh) subjects.

    Stage errors abort the affected subject with a structured error record;
    the batch continues. With `workdir`, per-stage artifacts are persisted
    under a fixed naming scheme and finished subjects are skipped on resume.
    """
    wd = Path(workdir) if workdir is not None else None
    if wd is not None:
        wd.mkdir(parents=True, exist_ok=True)

    control = prepare_control(control_mesh, endpoints, m=m, targets=control_targets)
    if wd is not None:
        save_planar(control.param.planar, wd / "control_disk.obj")
        write_landmarks(control.targets, wd / "control_targets.txt")

    entries = []
    errors = []
    for name, mesh in sorted(subjects, key=lambda s: s[0]):
        report_path = None if wd is None else wd / f"{name}_report.json"
        if resume and report_path is not None and report_path.exists():
            logger.info("resume: reusing %s", report_path)
            entries.append(read_report(report_path)["entry"])
            continue
        try:
            registered, result, sparam, entry = run_pair(
                mesh, control, endpoints, params=params, m=m, subject_id=name)
        except Exception as exc:  # noqa: BLE001 - structured per-subject capture
            logger.exception("subject %s failed", name)
            errors.append({"subject": name, "stage_error": f"{type(exc).__name__}: {exc}"})
            continue
        entries.append(entry)
        if wd is not None:
            save_planar(sparam.planar, wd / f"{name}_disk.obj")
            save_planar(result.map, wd / f"{name}_mapped.obj")
            save_mesh(registered, wd / f"{name}_registered.off")
            write_report({"entry": entry}, report_path)

    report = {
        "control": {
            "vertices": control.mesh.n_vertices,
            "faces": control.mesh.n_faces,
            "mean_mu_per_iter": [mm for mm, _ in control.param.history],
            "converged": control.param.converged,
            "n_target_curves": len(control.targets.curves),
        },
        "entries": entries,
        "errors": errors,
    }
    if entries:
        report["aggregate"] = aggregate(entries)
    return report
