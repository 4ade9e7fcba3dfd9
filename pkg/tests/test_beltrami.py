import numpy as np
import pytest

from qcreg.beltrami import (MU_CAP, BeltramiField, BoundaryCondition,
                            alpha_coefficients, assemble_lbs, boundary_energy,
                            cap_modulus, clamp_mu, compute_mu, jacobian,
                            lbs_residual, lbs_solve, read_mu_csv, write_mu_csv)
from qcreg.errors import DegenerateFaceError

from conftest import interior_face_mask


# --- compute_mu / jacobian ---------------------------------------------------

def test_mu_identity_is_zero(disk2k):
    mu = compute_mu(disk2k, disk2k.uv)
    assert np.abs(mu.mu).max() < 1e-13


def test_mu_of_tilt_map(disk2k):
    z = disk2k.uv[:, 0] + 1j * disk2k.uv[:, 1]
    w = z + 0.25 * np.conj(z)
    mu = compute_mu(disk2k, np.column_stack([w.real, w.imag]))
    assert np.abs(mu.mu - 0.25).max() < 1e-12


def test_mu_of_axis_stretch(disk2k):
    target = np.column_stack([2.0 * disk2k.uv[:, 0], disk2k.uv[:, 1]])
    mu = compute_mu(disk2k, target)
    assert np.abs(mu.mu - 1.0 / 3.0).max() < 1e-12


def test_jacobian_values_and_consistency(disk2k):
    assert np.allclose(jacobian(disk2k, disk2k.uv), 1.0, atol=1e-12)
    target = np.column_stack([2.0 * disk2k.uv[:, 0], disk2k.uv[:, 1]])
    J = jacobian(disk2k, target)
    assert np.allclose(J, 2.0, atol=1e-12)
    # J = |f_z|^2 (1 - |mu|^2): 2.25 * (1 - 1/9) = 2
    assert 2.25 * (1 - 1 / 9) == pytest.approx(2.0)
    mu = compute_mu(disk2k, target)
    fz_sq = J / (1.0 - np.abs(mu.mu) ** 2)
    assert np.abs(fz_sq * (1 - np.abs(mu.mu) ** 2) - J).max() < 1e-12


def test_jacobian_positive_for_foldfree_solve(disk2k):
    rng = np.random.default_rng(5)
    nu = 0.3 * (rng.standard_normal(disk2k.base.n_faces)
                + 1j * rng.standard_normal(disk2k.base.n_faces))
    out = lbs_solve(disk2k, cap_modulus(nu, 0.5), BoundaryCondition.fixed_identity(disk2k))
    if out.fold_free:
        assert (jacobian(disk2k, out.uv) > 0).all()


def test_mu_degenerate_conformal_factor(square2):
    # target collapses to a point: f_z = 0 on every face
    target = np.zeros_like(square2.uv)
    with pytest.raises(DegenerateFaceError, match="conformal factor"):
        compute_mu(square2, target)


# --- alpha coefficients ------------------------------------------------------

def test_alpha_hand_values():
    a = alpha_coefficients(np.array([0.0 + 0j]))
    assert (a.alpha1[0], a.alpha2[0], a.alpha3[0]) == pytest.approx((1, 0, 1))
    a = alpha_coefficients(np.array([0.5 + 0j]))
    assert (a.alpha1[0], a.alpha2[0], a.alpha3[0]) == pytest.approx((1 / 3, 0, 3))
    a = alpha_coefficients(np.array([0.5j]))
    assert (a.alpha1[0], a.alpha2[0], a.alpha3[0]) == pytest.approx((5 / 3, -4 / 3, 5 / 3))


def test_alpha_rejects_near_unit_modulus():
    with pytest.raises(ValueError, match="conformality bound"):
        alpha_coefficients(np.array([1.0 - 1e-12 + 0j]))


def test_alpha_determinant_identity():
    # alpha1*alpha3 - alpha2^2 == ((1+|mu|^2)^2 - 4 rho^2 - 4 tau^2)/(1-|mu|^2)^2 == 1
    rng = np.random.default_rng(11)
    mod = np.sqrt(rng.uniform(0, 0.96, 1000))
    arg = rng.uniform(0, 2 * np.pi, 1000)
    mu = mod * np.exp(1j * arg)
    a = alpha_coefficients(mu)
    det = a.alpha1 * a.alpha3 - a.alpha2 ** 2
    rho, tau = mu.real, mu.imag
    m2 = rho**2 + tau**2
    oracle = ((1 + m2) ** 2 - 4 * rho**2 - 4 * tau**2) / (1 - m2) ** 2
    assert (det > 0).all()
    assert np.abs(det - oracle).max() < 1e-12


# --- assembly ----------------------------------------------------------------

def _cotangent_oracle(planar):
    """Independent harmonic matrix via the per-face cotangent local stiffness."""
    import scipy.sparse as sp
    uv = planar.uv
    n = planar.base.n_vertices
    K = np.zeros((n, n))
    for (i, j, k) in planar.faces:
        for (a, b, c) in ((i, j, k), (j, k, i), (k, i, j)):
            e1 = uv[b] - uv[a]
            e2 = uv[c] - uv[a]
            cot_a = float(e1 @ e2) / abs(e1[0] * e2[1] - e1[1] * e2[0])
            # edge (b, c) opposite corner a
            K[b, b] += cot_a / 2
            K[c, c] += cot_a / 2
            K[b, c] -= cot_a / 2
            K[c, b] -= cot_a / 2
    return K


def test_assembly_matches_cotangent_oracle(square2, disk2k):
    for planar in (square2,):
        K = assemble_lbs(planar, np.zeros(planar.base.n_faces, complex)).matrix.toarray()
        assert np.abs(K - _cotangent_oracle(planar)).max() < 1e-12
    small = disk2k  # only spot-check the big mesh diagonal against the oracle
    K = assemble_lbs(small, np.zeros(small.base.n_faces, complex)).matrix
    oracle = _cotangent_oracle(small)
    assert np.abs(K.toarray() - oracle).max() < 1e-12


def test_assembly_symmetric_under_fan_half_turn(fan4):
    from qcreg.mesh import PlanarMesh
    planar = PlanarMesh(fan4, fan4.vertices[:, :2])
    mu = np.full(4, 0.3 - 0.2j)
    K = assemble_lbs(planar, mu).matrix.toarray()
    perm = np.array([0, 3, 4, 1, 2])  # rotation by pi: 1<->3, 2<->4
    assert np.abs(K - K[np.ix_(perm, perm)]).max() < 1e-12


def test_assembly_row_sums_vanish(disk2k):
    rng = np.random.default_rng(2)
    nf = disk2k.base.n_faces
    for _ in range(5):
        nu = rng.standard_normal(nf) + 1j * rng.standard_normal(nf)
        K = assemble_lbs(disk2k, cap_modulus(nu, 0.8)).matrix
        rows = np.asarray(K.sum(axis=1)).ravel()
        interior = disk2k.base.interior_mask()
        assert np.abs(rows[interior]).max() < 1e-12


def test_assembly_matrix_symmetric(disk2k):
    rng = np.random.default_rng(4)
    nf = disk2k.base.n_faces
    nu = cap_modulus(rng.standard_normal(nf) + 1j * rng.standard_normal(nf), 0.7)
    K = assemble_lbs(disk2k, nu).matrix
    assert np.abs((K - K.T).data).max() if (K - K.T).nnz else 0 < 1e-12


# --- lbs_solve ---------------------------------------------------------------

def test_solve_identity_square_and_disk(square2, disk2k):
    for planar in (square2, disk2k):
        out = lbs_solve(planar, np.zeros(planar.base.n_faces, complex),
                        BoundaryCondition.fixed_identity(planar))
        assert np.abs(out.uv - planar.uv).max() < 1e-10


def test_solve_affine_recovery(disk2k):
    z = disk2k.uv[:, 0] + 1j * disk2k.uv[:, 1]
    w = z + 0.25 * np.conj(z)
    target = np.column_stack([w.real, w.imag])
    pins = [(int(i), tuple(target[i])) for i in disk2k.base.boundary]
    out = lbs_solve(disk2k, np.full(disk2k.base.n_faces, 0.25 + 0j),
                    BoundaryCondition.fixed(pins))
    assert np.abs(out.uv - target).max() < 1e-10


def test_solve_free_corner_matches_dense_oracle(square2):
    # pin three corners (one displaced), leave corner 2 free, mu = 0
    pins = [(0, (0.0, 0.0)), (1, (1.2, 0.0)), (3, (0.0, 1.1))]
    out = lbs_solve(square2, np.zeros(2, complex), BoundaryCondition.fixed(pins))
    K = _cotangent_oracle(square2)
    fixed_pos = {i: np.array(p) for i, p in pins}
    rhs = -sum(K[2, j] * fixed_pos[j] for j in (0, 1, 3))
    expected = rhs / K[2, 2]
    assert np.abs(out.uv[2] - expected).max() < 1e-12
    for i, p in pins:
        assert np.abs(out.uv[i] - p).max() == 0.0


def test_residual_at_solution_and_positivity(disk2k):
    rng = np.random.default_rng(9)
    nf = disk2k.base.n_faces
    nu = cap_modulus(0.4 * (rng.standard_normal(nf) + 1j * rng.standard_normal(nf)), 0.5)
    stiff = assemble_lbs(disk2k, nu)
    out = lbs_solve(disk2k, nu, BoundaryCondition.fixed_identity(disk2k))
    r = lbs_residual(disk2k, nu, out.uv)
    mean_ci = float(np.abs(stiff.matrix.diagonal()).mean())
    assert r < 1e-10 * mean_ci
    # identity candidate with nonzero mu and incompatible boundary
    assert lbs_residual(disk2k, nu, disk2k.uv) > 1e-9


def test_residual_grows_linearly(disk2k):
    nf = disk2k.base.n_faces
    nu = np.full(nf, 0.2 + 0.1j)
    out = lbs_solve(disk2k, nu, BoundaryCondition.fixed_identity(disk2k))
    rng = np.random.default_rng(3)
    direction = rng.standard_normal(out.uv.shape)
    r1 = lbs_residual(disk2k, nu, out.uv + 1e-3 * direction)
    r2 = lbs_residual(disk2k, nu, out.uv + 2e-3 * direction)
    assert r2 / r1 == pytest.approx(2.0, rel=1e-2)


def test_solve_with_landmark_penalty_moves_point(disk2k):
    pin = int(disk2k.base.boundary[0])
    bc = BoundaryCondition.circle(pin, disk2k.uv[pin])
    src = np.array([0.2, 0.1])
    tgt = np.array([0.27, 0.05])
    out = lbs_solve(disk2k, np.zeros(disk2k.base.n_faces, complex), bc,
                    landmarks=[(src, tgt)], landmark_weight=200.0)
    fidx, bary = disk2k.locate(src[None, :])
    mapped = (out.uv[disk2k.faces[fidx[0]]] * bary[0][:, None]).sum(axis=0)
    assert np.linalg.norm(mapped - tgt) < 0.25 * np.linalg.norm(src - tgt)
    assert out.fold_free


# --- boundary condition validation -------------------------------------------

def test_boundary_condition_validation():
    with pytest.raises(ValueError, match="at least 2"):
        BoundaryCondition(mode="fixed", pinned=((0, (0.0, 0.0)),))
    with pytest.raises(ValueError, match="exactly 1"):
        BoundaryCondition(mode="circle", pinned=())
    with pytest.raises(ValueError, match="unknown boundary mode"):
        BoundaryCondition(mode="sliding")


# --- boundary energy ----------------------------------------------------------

def test_boundary_energy_uniform_gaps():
    angles = np.array([0.0, np.pi / 2, np.pi, 3 * np.pi / 2])
    assert boundary_energy(angles) == pytest.approx(8 / np.pi)


def test_boundary_energy_uniform_is_minimal():
    n = 16
    uniform = 2 * np.pi * np.arange(n) / n
    e0 = boundary_energy(uniform)
    assert e0 == pytest.approx(n * n / (2 * np.pi))
    rng = np.random.default_rng(0)
    for _ in range(20):
        gaps = rng.dirichlet(np.ones(n)) * 2 * np.pi
        angles = np.concatenate([[0.0], np.cumsum(gaps[:-1])])
        assert boundary_energy(angles) >= e0 - 1e-12


def test_boundary_energy_divergence_and_errors():
    angles = np.array([0.0, 1e-6, np.pi, 3 * np.pi / 2])
    assert boundary_energy(angles) >= 1e6
    with pytest.raises(ValueError, match="non-monotone"):
        boundary_energy(np.array([0.0, 2.0, 1.0]))
    with pytest.raises(ValueError, match="non-monotone"):
        boundary_energy(np.array([0.0, 1.0, 9.0]))  # spans more than one turn


# --- clamp_mu -----------------------------------------------------------------

def test_clamp_zero_and_large():
    out = clamp_mu(np.array([0.0 + 0j, 1000.0 + 0j]))
    assert out.mu[0] == 0
    assert out.mu[1].real < 1.0
    assert out.mu[1].real == np.nextafter(1.0, 0.0)


def test_clamp_hand_value():
    out = clamp_mu(np.array([0.5j]))
    assert out.mu[0] == pytest.approx(np.tanh(0.5) * 1j)


def test_clamp_preserves_argument():
    rng = np.random.default_rng(8)
    nu = rng.standard_normal(500) + 1j * rng.standard_normal(500)
    out = clamp_mu(nu)
    assert np.abs(np.angle(out.mu) - np.angle(nu)).max() < 1e-12
    assert (np.abs(out.mu) < 1.0).all()


def test_beltrami_field_rejects_nonfinite():
    with pytest.raises(ValueError, match="non-finite"):
        BeltramiField(np.array([np.nan + 0j]))


def test_cap_modulus():
    out = cap_modulus(np.array([0.5 + 0j, 2.0 + 0j, 0.0 + 0j]))
    assert out[0] == 0.5 + 0j  # untouched below the cap
    assert abs(out[1]) == pytest.approx(MU_CAP)
    assert out[2] == 0


# --- CSV serialization ---------------------------------------------------------

def test_mu_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(6)
    mu = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    write_mu_csv(mu, tmp_path / "mu.csv")
    again = read_mu_csv(tmp_path / "mu.csv")
    assert np.array_equal(again.mu, mu)
