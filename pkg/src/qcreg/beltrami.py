"""Beltrami-coefficient calculus and the Linear Beltrami Solver.

A piecewise-linear map f = u + iv with per-face partials (a, b, c, d) has
f_z = ((a + d) + i(c - b))/2 and f_zbar = ((a - d) + i(c + b))/2, so the
per-face Beltrami coefficient is mu = f_zbar / f_z. Conversely, for a target
mu the map is reconstructed by solving two sparse linear systems whose
coefficients derive from the alpha matrix A(mu); with ||mu||_inf < 1 the
matrix A is symmetric positive definite and the reconstruction is bijective.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from . import _kernels
from .errors import DegenerateFaceError, SolveError
from .mesh import PlanarMesh, check_degenerate, hat_gradients

MU_CAP = 1.0 - 1e-9
# Direct factorization below this size, conjugate gradients above.
CG_VERTEX_THRESHOLD = 500_000


@dataclass(frozen=True)
class BeltramiField:
    """One complex Beltrami coefficient per face."""
    mu: np.ndarray

    def __post_init__(self):
        mu = np.ascontiguousarray(self.mu, dtype=np.complex128)
        if not np.isfinite(mu).all():
            raise ValueError("Beltrami field contains non-finite values")
        mu.flags.writeable = False
        object.__setattr__(self, "mu", mu)

    def __len__(self) -> int:
        return len(self.mu)

    @property
    def abs(self) -> np.ndarray:
        return np.abs(self.mu)


@dataclass(frozen=True)
class AlphaCoefficients:
    alpha1: np.ndarray
    alpha2: np.ndarray
    alpha3: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.column_stack([self.alpha1, self.alpha2, self.alpha3])


@dataclass(frozen=True)
class StiffnessData:
    """Assembled generalized-Laplace system for a Beltrami field."""
    matrix: sp.csr_matrix      # (V, V), symmetric
    A: np.ndarray              # (F, 3) hat-gradient x-components
    B: np.ndarray              # (F, 3) hat-gradient y-components
    areas: np.ndarray          # (F,)
    alpha: AlphaCoefficients

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary handling for lbs_solve.

    mode "fixed": the listed vertices are pinned to the given positions and
    everything else is free (natural condition). mode "circle": boundary
    vertices slide along the unit circle, parameterized by their angles, with
    exactly one pinned vertex killing the rotational freedom.
    """
    mode: str
    pinned: tuple = ()
    angles: np.ndarray | None = None
    max_outer: int = 10

    def __post_init__(self):
        if self.mode not in ("fixed", "circle"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.mode == "fixed" and len(self.pinned) < 2:
            raise ValueError("fixed mode needs at least 2 pinned constraints")
        if self.mode == "circle" and len(self.pinned) != 1:
            raise ValueError("circle-sliding mode needs exactly 1 pinned vertex")

    @staticmethod
    def fixed(pins) -> "BoundaryCondition":
        return BoundaryCondition(mode="fixed", pinned=tuple((int(i), (float(x), float(y)))
                                                            for i, (x, y) in pins))

    @staticmethod
    def fixed_identity(planar: PlanarMesh) -> "BoundaryCondition":
        pins = [(int(i), tuple(planar.uv[i])) for i in planar.base.boundary]
        return BoundaryCondition.fixed(pins)

    @staticmethod
    def circle(pinned_vertex: int, pinned_position, angles=None, max_outer: int = 10) -> "BoundaryCondition":
        return BoundaryCondition(mode="circle",
                                 pinned=((int(pinned_vertex),
                                          (float(pinned_position[0]), float(pinned_position[1]))),),
                                 angles=None if angles is None else np.asarray(angles, float),
                                 max_outer=max_outer)


@dataclass(frozen=True)
class SoftAnchor:
    """Quadratic penalty weight*||sum_i bary_i u_{tri_i} - target||^2."""
    tri: np.ndarray
    bary: np.ndarray
    target: np.ndarray
    weight: float


def _as_mu(mu) -> np.ndarray:
    if isinstance(mu, BeltramiField):
        return mu.mu
    return np.ascontiguousarray(mu, dtype=np.complex128)


def derivatives_from_charts(g, h, area, faces, target_uv):
    """Per-face partials (a, b, c, d) of a map given by chart coords and targets."""
    A, B = hat_gradients(g, h, area)
    s = target_uv[:, 0][faces]
    t = target_uv[:, 1][faces]
    return ((A * s).sum(axis=1), (B * s).sum(axis=1),
            (A * t).sum(axis=1), (B * t).sum(axis=1))


def mu_from_derivatives(a, b, c, d, *, denom_tol: float = 1e-14) -> np.ndarray:
    fz = 0.5 * ((a + d) + 1j * (c - b))
    fzbar = 0.5 * ((a - d) + 1j * (c + b))
    bad = np.abs(fz) < denom_tol
    if bad.any():
        raise DegenerateFaceError(
            f"degenerate conformal factor |f_z| < {denom_tol} on faces {np.flatnonzero(bad)[:10].tolist()}")
    return fzbar / fz


def compute_mu(source: PlanarMesh, target_uv) -> BeltramiField:
    """Beltrami coefficient of the piecewise-linear map source.uv -> target_uv."""
    target_uv = np.asarray(target_uv, dtype=np.float64)
    g, h, area = source.face_charts()
    check_degenerate(area)
    a, b, c, d = derivatives_from_charts(g, h, area, source.faces, target_uv)
    return BeltramiField(mu_from_derivatives(a, b, c, d))


def jacobian(source: PlanarMesh, target_uv) -> np.ndarray:
    """Per-face Jacobian determinant of the map; equals |f_z|^2 (1 - |mu|^2)."""
    target_uv = np.asarray(target_uv, dtype=np.float64)
    g, h, area = source.face_charts()
    check_degenerate(area)
    a, b, c, d = derivatives_from_charts(g, h, area, source.faces, target_uv)
    return a * d - b * c


def alpha_coefficients(mu) -> AlphaCoefficients:
    """The three coefficient fields of the SPD matrix A(mu).

    alpha1 = ((rho-1)^2 + tau^2) / (1 - rho^2 - tau^2)
    alpha2 = -2 tau / (1 - rho^2 - tau^2)
    alpha3 = ((rho+1)^2 + tau^2) / (1 - rho^2 - tau^2)
    """
    mu = _as_mu(mu)
    rho = mu.real
    tau = mu.imag
    mod2 = rho * rho + tau * tau
    if (mod2 >= MU_CAP * MU_CAP).any():
        worst = float(np.sqrt(mod2.max()))
        raise ValueError(f"|mu| = {worst:.12g} >= {MU_CAP}: conformality bound violated")
    denom = 1.0 - mod2
    return AlphaCoefficients(
        alpha1=((rho - 1.0) ** 2 + tau * tau) / denom,
        alpha2=-2.0 * tau / denom,
        alpha3=((rho + 1.0) ** 2 + tau * tau) / denom,
    )


def cap_modulus(nu, cap: float = MU_CAP) -> np.ndarray:
    """Rescale entries with |nu| > cap down to cap; smaller entries untouched."""
    nu = _as_mu(nu).copy()
    mod = np.abs(nu)
    over = mod > cap
    if over.any():
        nu[over] *= cap / mod[over]
    return nu


def clamp_mu(nu) -> BeltramiField:
    """tanh-type activation: |mu| = tanh(|nu|) < 1 with the argument preserved."""
    nu = _as_mu(nu)
    mod = np.abs(nu)
    m = np.tanh(mod)
    m[m >= 1.0] = np.nextafter(1.0, 0.0)
    out = np.zeros_like(nu)
    nz = mod > 0.0
    out[nz] = m[nz] * (nu[nz] / mod[nz])
    return BeltramiField(out)


def _assemble_from_charts(faces, g, h, area, mu, n_vertices) -> StiffnessData:
    mu = cap_modulus(mu)
    alpha = alpha_coefficients(mu)
    vals = _kernels.lbs_local_values(np.ascontiguousarray(g), np.ascontiguousarray(h),
                                     np.ascontiguousarray(area), alpha.stacked())
    rows = faces[:, [0, 0, 0, 1, 1, 1, 2, 2, 2]].ravel()
    cols = faces[:, [0, 1, 2, 0, 1, 2, 0, 1, 2]].ravel()
    K = sp.coo_matrix((vals.ravel(), (rows, cols)),
                      shape=(n_vertices, n_vertices)).tocsr()
    A, B = hat_gradients(g, h, area)
    return StiffnessData(matrix=K, A=A, B=B, areas=area, alpha=alpha)


def assemble_lbs(mesh: PlanarMesh, mu) -> StiffnessData:
    """Assemble the sparse LBS system for `mu` on the planar mesh."""
    if not mesh.fold_free:
        warnings.warn(f"assembling on a mesh with {mesh.fold_count()} flipped faces")
    g, h, area = mesh.face_charts()
    check_degenerate(area)
    return _assemble_from_charts(mesh.faces, g, h, area, mu, mesh.base.n_vertices)


def lbs_residual(mesh: PlanarMesh, mu, candidate_uv) -> float:
    """Sum of absolute LBS equation residuals over interior vertices, scaled
    by 1/(2 N^2) with N the total vertex count."""
    candidate_uv = np.asarray(candidate_uv, dtype=np.float64)
    K = assemble_lbs(mesh, mu).matrix
    interior = mesh.base.interior_mask()
    rx = (K @ candidate_uv[:, 0])[interior]
    ry = (K @ candidate_uv[:, 1])[interior]
    n = mesh.base.n_vertices
    return float((np.abs(rx).sum() + np.abs(ry).sum()) / (2.0 * n * n))


def boundary_energy(angles) -> float:
    """Sum of reciprocal gaps between consecutive boundary angles."""
    th = np.asarray(angles, dtype=np.float64)
    if len(th) < 2:
        raise ValueError("need at least two boundary angles")
    gaps = np.diff(th)
    if (gaps <= 0).any():
        raise ValueError("non-monotone angles")
    closing = th[0] + 2.0 * np.pi - th[-1]
    if closing <= 0:
        raise ValueError("non-monotone angles")
    gaps = np.append(gaps, closing)
    # monotone angles within one revolution telescope to exactly 2*pi
    return float((1.0 / gaps).sum())


def _anchor_matrix(anchors, n_vertices):
    if not anchors:
        return None, None, None
    rows = np.repeat(np.arange(len(anchors)), 3)
    cols = np.concatenate([np.asarray(a.tri, dtype=np.int64) for a in anchors])
    data = np.concatenate([np.asarray(a.bary, dtype=np.float64) for a in anchors])
    W = sp.coo_matrix((data, (rows, cols)), shape=(len(anchors), n_vertices)).tocsr()
    w = np.array([a.weight for a in anchors], dtype=np.float64)
    t = np.vstack([a.target for a in anchors]).astype(np.float64)
    return W, w, t


class _DirichletSolver:
    """Cached factorization for repeated solves with fixed pinned set."""

    def __init__(self, K_total: sp.csr_matrix, pinned_idx: np.ndarray, n_vertices: int):
        self.n = n_vertices
        self.pinned = pinned_idx
        free_mask = np.ones(n_vertices, dtype=bool)
        free_mask[pinned_idx] = False
        self.free = np.flatnonzero(free_mask)
        Kc = K_total.tocsc()
        self.Kff = Kc[self.free][:, self.free].tocsc()
        self.Kfp = Kc[self.free][:, pinned_idx].tocsr()
        self.direct = n_vertices <= CG_VERTEX_THRESHOLD
        if self.direct and len(self.free):
            try:
                self.lu = splu(self.Kff)
            except RuntimeError as exc:
                raise SolveError(f"singular LBS system: {exc}") from exc

    def solve(self, pinned_values: np.ndarray, rhs_free: np.ndarray | None = None) -> np.ndarray:
        """Solve for one coordinate channel; returns the full (n,) vector."""
        out = np.empty(self.n)
        out[self.pinned] = pinned_values
        if not len(self.free):
            return out
        b = -(self.Kfp @ pinned_values)
        if rhs_free is not None:
            b = b + rhs_free
        if self.direct:
            x = self.lu.solve(b)
        else:
            x, info = cg(self.Kff, b, rtol=1e-10, atol=0.0)
            if info != 0:
                raise SolveError(f"CG failed to converge (info={info})")
        out[self.free] = x
        return out


def _circle_gaps(theta):
    gaps = np.diff(theta)
    closing = theta[0] + 2.0 * np.pi - theta[-1]
    return np.append(gaps, closing)


def _lbs_core(faces, g, h, area, n_vertices, boundary, mu, bc: BoundaryCondition,
              anchors=(), eta: float = 1.0, rho_boundary: float = 1e-8,
              initial_uv: np.ndarray | None = None):
    """Shared solver behind lbs_solve and the parameterization iterations."""
    stiff = _assemble_from_charts(faces, g, h, area, mu, n_vertices)
    K = stiff.matrix
    W, w, t = _anchor_matrix(list(anchors), n_vertices)
    K_total = K if W is None else (K + W.T @ sp.diags(w) @ W).tocsr()
    rhs_x = rhs_y = None
    if W is not None:
        rhs = W.T @ (w[:, None] * t)
        rhs_x, rhs_y = rhs[:, 0], rhs[:, 1]

    if bc.mode == "fixed":
        pin_idx = np.array([i for i, _ in bc.pinned], dtype=np.int64)
        pin_xy = np.array([p for _, p in bc.pinned], dtype=np.float64)
        solver = _DirichletSolver(K_total, pin_idx, n_vertices)
        rx = None if rhs_x is None else rhs_x[solver.free]
        ry = None if rhs_y is None else rhs_y[solver.free]
        ux = solver.solve(pin_xy[:, 0], rx)
        uy = solver.solve(pin_xy[:, 1], ry)
        return np.column_stack([ux, uy]), {"outer_iterations": 0}

    # Circle-sliding: all boundary vertices pinned to (cos, sin) of their
    # angles; angles updated by projected descent, one vertex frozen.
    loop = boundary.astype(np.int64)
    nb = len(loop)
    pin_vertex, pin_pos = bc.pinned[0]
    where = np.flatnonzero(loop == pin_vertex)
    if where.size == 0:
        raise ValueError(f"pinned vertex {pin_vertex} is not on the boundary")
    pin_pos_in_loop = int(where[0])

    if bc.angles is not None:
        theta = np.asarray(bc.angles, dtype=np.float64).copy()
        if len(theta) != nb:
            raise ValueError("angles length does not match boundary loop")
    else:
        if initial_uv is None:
            raise ValueError("circle mode needs initial angles or an initial uv")
        raw = np.arctan2(initial_uv[loop, 1], initial_uv[loop, 0])
        steps = np.mod(np.diff(raw), 2.0 * np.pi)
        theta = raw[0] + np.concatenate([[0.0], np.cumsum(steps)])
        if abs((theta[-1] + np.mod(raw[0] + 2 * np.pi - raw[-1], 2 * np.pi)) - (theta[0] + 2 * np.pi)) > 1e-6:
            raise SolveError("boundary angles do not wind once around the circle")
    theta[pin_pos_in_loop] = np.arctan2(pin_pos[1], pin_pos[0]) + 2.0 * np.pi * np.round(
        (theta[pin_pos_in_loop] - np.arctan2(pin_pos[1], pin_pos[0])) / (2.0 * np.pi))

    solver = _DirichletSolver(K_total, loop, n_vertices)
    rx = None if rhs_x is None else rhs_x[solver.free]
    ry = None if rhs_y is None else rhs_y[solver.free]

    def solve_at(th):
        pos = np.column_stack([np.cos(th), np.sin(th)])
        ux = solver.solve(pos[:, 0], rx)
        uy = solver.solve(pos[:, 1], ry)
        return np.column_stack([ux, uy])

    def energy(uv, th):
        # Quadratic surrogate: deviation from the Beltrami equation plus the
        # image area, penalties, and the boundary-spacing term.
        e = 0.5 * (uv[:, 0] @ (K @ uv[:, 0]) + uv[:, 1] @ (K @ uv[:, 1]))
        if W is not None:
            d = W @ uv - t
            e += 0.5 * float((w * (d * d).sum(axis=1)).sum())
        return e + rho_boundary * float((1.0 / _circle_gaps(th)).sum())

    uv = solve_at(theta)
    fval = energy(uv, theta)
    gap_floor = 1e-6 * (2.0 * np.pi / nb)
    free_rows = np.delete(np.arange(nb), pin_pos_in_loop)
    outer_done = 0

    # Dense Schur complement of the system onto the boundary: the Newton step
    # in the angles only needs S = Kbb - Kbi Kii^-1 Kib, fixed across the
    # outer iterations (the tangent directions rotate but rescale S cheaply).
    if bc.max_outer > 0:
        if not solver.direct:
            raise SolveError("circle-sliding boundary requires the direct solver path")
        Kc = K_total.tocsc()
        Kbb = Kc[loop][:, loop].toarray()
        if len(solver.free):
            Kib = Kc[solver.free][:, loop].toarray()
            schur = Kbb - Kib.T @ solver.lu.solve(Kib)
        else:
            schur = Kbb

    for _ in range(bc.max_outer):
        # Tangent-linearized Newton step on the boundary angles: the reduced
        # gradient is the residual dotted with the circle tangents, and the
        # reduced Hessian the tangent-scaled Schur complement.
        tang = np.column_stack([-np.sin(theta), np.cos(theta)])
        res_x = K_total @ uv[:, 0] - (0.0 if rhs_x is None else rhs_x)
        res_y = K_total @ uv[:, 1] - (0.0 if rhs_y is None else rhs_y)
        gaps = _circle_gaps(theta)
        g_b = 1.0 / gaps**2 - 1.0 / np.roll(gaps, 1)**2
        h_b = 2.0 / gaps**3 + 2.0 / np.roll(gaps, 1)**3
        grad = (res_x[loop] * tang[:, 0] + res_y[loop] * tang[:, 1]
                + rho_boundary * g_b)[free_rows]

        S = (np.outer(tang[:, 0], tang[:, 0]) + np.outer(tang[:, 1], tang[:, 1])) * schur
        S = S[np.ix_(free_rows, free_rows)]
        S[np.diag_indices_from(S)] += rho_boundary * h_b[free_rows]
        S[np.diag_indices_from(S)] += 1e-12 * max(1.0, float(np.abs(S.diagonal()).max()))
        try:
            dth = np.linalg.solve(S, -grad)
        except np.linalg.LinAlgError as exc:
            raise SolveError(f"singular sliding system: {exc}") from exc
        dtheta = np.zeros(nb)
        dtheta[free_rows] = dth
        dmax = float(np.abs(dtheta).max())
        if dmax <= 1e-14:
            break
        # Cap the step so no single gap changes by more than 40%.
        dgap = np.append(np.diff(dtheta), dtheta[0] - dtheta[-1])
        shrink = np.abs(dgap) > 0
        step = 1.0
        if shrink.any():
            step = min(1.0, float((0.4 * gaps[shrink] / np.abs(dgap[shrink])).min()))
        accepted = False
        for _ in range(6):
            trial = theta + step * dtheta
            if (_circle_gaps(trial) <= gap_floor).any():
                step *= 0.5
                continue
            uv_trial = solve_at(trial)
            f_trial = energy(uv_trial, trial)
            if f_trial < fval:
                improvement = fval - f_trial
                theta, uv, fval = trial, uv_trial, f_trial
                accepted = True
                break
            step *= 0.5
        outer_done += 1
        if not accepted:
            break
        if improvement <= 1e-10 * max(1.0, abs(fval)):
            break

    return uv, {"outer_iterations": outer_done, "objective": fval,
                "angles": theta, "loop": loop}


def lbs_solve(mesh: PlanarMesh, mu, bc: BoundaryCondition, landmarks=None,
              landmark_weight: float = 0.0, eta: float = 1.0,
              rho_boundary: float = 1e-8) -> PlanarMesh:
    """Reconstruct the quasi-conformal map for `mu` under boundary constraints.

    Parameters
    ----------
    landmarks : optional sequence of (source_point, target_point)
        Soft interior constraints; each enters as a quadratic penalty of
        weight `landmark_weight` attached to the containing face's vertices
        by barycentric weights.
    """
    g, h, area = mesh.face_charts()
    check_degenerate(area)
    anchors = []
    if landmarks:
        src = np.asarray([s for s, _ in landmarks], dtype=np.float64)
        tgt = np.asarray([t for _, t in landmarks], dtype=np.float64)
        fidx, bary = mesh.locate(src)
        if (fidx < 0).any():
            missing = np.flatnonzero(fidx < 0)[:5].tolist()
            raise SolveError(f"landmark source points outside mesh: indices {missing}")
        for k in range(len(src)):
            anchors.append(SoftAnchor(tri=mesh.faces[fidx[k]].astype(np.int64),
                                      bary=bary[k], target=tgt[k], weight=landmark_weight))
    uv, _ = _lbs_core(mesh.faces, g, h, area, mesh.base.n_vertices,
                      mesh.base.boundary, mu, bc, anchors,
                      eta=eta, rho_boundary=rho_boundary, initial_uv=mesh.uv)
    out = mesh.with_uv(uv)
    folds = out.fold_count()
    if folds:
        warnings.warn(f"lbs_solve output has {folds} inverted faces")
    return out


# ----------------------------------------------------------------------------
# Beltrami field CSV serialization: face_index,re_mu,im_mu

def write_mu_csv(mu, path) -> None:
    mu = _as_mu(mu)
    lines = ["face_index,re_mu,im_mu"]
    lines += [f"{i},{v.real:.17g},{v.imag:.17g}" for i, v in enumerate(mu)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mu_csv(path) -> BeltramiField:
    rows = []
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("face_index"):
            continue
        i, re, im = line.split(",")
        rows.append((int(i), float(re), float(im)))
    rows.sort()
    if [r[0] for r in rows] != list(range(len(rows))):
        raise ValueError(f"{path}: face indices are not 0..{len(rows) - 1}")
    return BeltramiField(np.array([complex(re, im) for _, re, im in rows]))
