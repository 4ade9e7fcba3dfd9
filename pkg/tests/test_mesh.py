import numpy as np
import pytest

from qcreg.errors import DegenerateFaceError, MeshParseError, MeshTopologyError
from qcreg.mesh import (PlanarMesh, TriMesh, boundary_loop, face_areas,
                        face_derivatives, hat_gradients, load_mesh, load_planar,
                        save_mesh, save_planar)
from qcreg.synth import unit_disk_mesh


def test_two_triangle_square_counts(square2):
    m = square2.base
    assert (m.n_vertices, m.n_edges, m.n_faces) == (4, 5, 2)
    assert m.euler_characteristic == 1
    assert m.boundary.tolist() == [0, 1, 2, 3]


def test_load_off_square(tmp_path):
    p = tmp_path / "sq.off"
    p.write_text("OFF\n4 2 5\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n")
    m = load_mesh(p)
    assert m.n_vertices == 4 and m.n_faces == 2 and len(m.boundary) == 4


def test_load_tetrahedron_reports_topology(tmp_path):
    p = tmp_path / "tet.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
                 "f 1 3 2\nf 1 2 4\nf 2 3 4\nf 1 4 3\n")
    with pytest.raises(MeshTopologyError, match="0 boundary loops, Euler characteristic 2"):
        load_mesh(p)


def test_duplicated_face_is_non_manifold(tmp_path):
    p = tmp_path / "dup.off"
    p.write_text("OFF\n4 3 0\n0 0 0\n1 0 0\n1 1 0\n0 1 0\n3 0 1 2\n3 0 2 3\n3 0 1 2\n")
    with pytest.raises(MeshTopologyError, match="non-manifold edge"):
        load_mesh(p)


def test_inconsistent_orientation_rejected():
    with pytest.raises(MeshTopologyError, match="non-manifold edge"):
        TriMesh([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2], [0, 3, 2]])


def test_parse_failure(tmp_path):
    p = tmp_path / "bad.off"
    p.write_text("OFF\n4 2\nnot numbers\n")
    with pytest.raises(MeshParseError):
        load_mesh(p)


def test_boundary_excludes_fan_center(fan4):
    assert boundary_loop(fan4).tolist() == [1, 2, 3, 4]


def test_boundary_loop_is_simple_and_counts_unpaired_edges(disk2k):
    m = disk2k.base
    loop = boundary_loop(m)
    assert len(set(loop.tolist())) == len(loop)
    # count edges bordering exactly one face
    f = m.faces.astype(np.int64)
    nv = m.n_vertices
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    key = e.min(axis=1) * nv + e.max(axis=1)
    _, counts = np.unique(key, return_counts=True)
    assert len(loop) == int((counts == 1).sum())


def test_boundary_starts_at_smallest_index(disk2k):
    loop = disk2k.base.boundary
    assert loop[0] == loop.min()


def test_face_areas_trivial(square2):
    tri = TriMesh([[0, 0], [1, 0], [0, 1]], [[0, 1, 2]])
    assert face_areas(tri) == pytest.approx([0.5])
    assert face_areas(square2).tolist() == pytest.approx([0.5, 0.5])


def test_face_areas_shoelace_oracle():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-2, 2, (3, 2))
    # force counterclockwise
    x, y = pts[:, 0], pts[:, 1]
    shoelace = 0.5 * (x[0] * (y[1] - y[2]) + x[1] * (y[2] - y[0]) + x[2] * (y[0] - y[1]))
    if shoelace < 0:
        pts = pts[::-1]
        shoelace = -shoelace
    tri = TriMesh(pts, [[0, 1, 2]])
    assert face_areas(tri) == pytest.approx([shoelace], rel=1e-14)


def test_face_derivatives_identity_and_linear(disk2k):
    d = face_derivatives(disk2k, disk2k.uv)
    assert np.allclose(d.a, 1) and np.allclose(d.d, 1)
    assert np.allclose(d.b, 0) and np.allclose(d.c, 0)

    target = np.column_stack([2.0 * disk2k.uv[:, 0], disk2k.uv[:, 1]])
    d = face_derivatives(disk2k, target)
    assert np.allclose(d.a, 2, atol=1e-12) and np.allclose(d.d, 1, atol=1e-12)
    assert np.allclose(d.b, 0, atol=1e-12) and np.allclose(d.c, 0, atol=1e-12)


def test_face_derivatives_matches_dense_2x2_solve():
    rng = np.random.default_rng(7)
    pts = np.array([[0, 0], [1, 0], [2, 0.9], [0.8, 1.4], [-0.2, 0.8], [0.9, 0.55]])
    faces = [[0, 1, 5], [1, 2, 5], [2, 3, 5], [3, 4, 5], [4, 0, 5]]
    planar = PlanarMesh(TriMesh(pts, faces), pts)
    target = rng.standard_normal((6, 2))
    d = face_derivatives(planar, target)
    for k, (i, j, l) in enumerate(faces):
        E = np.array([pts[j] - pts[i], pts[l] - pts[i]])
        Fx = np.array([target[j] - target[i], target[l] - target[i]])
        sol = np.linalg.solve(E, Fx)  # rows: [a, c] then [b, d]
        assert d.a[k] == pytest.approx(sol[0, 0], abs=1e-12)
        assert d.c[k] == pytest.approx(sol[0, 1], abs=1e-12)
        assert d.b[k] == pytest.approx(sol[1, 0], abs=1e-12)
        assert d.d[k] == pytest.approx(sol[1, 1], abs=1e-12)


def test_face_derivatives_rejects_degenerate():
    pts = np.array([[0, 0], [1, 0], [0.5, 1e-17], [0.5, 1.0]])
    planar = PlanarMesh(TriMesh(pts, [[0, 1, 2], [0, 2, 3]]), pts)  # face 0 is a sliver
    with pytest.raises(DegenerateFaceError):
        face_derivatives(planar, pts)


def test_hat_gradients_partition_of_unity(disk2k):
    g, h, area = disk2k.face_charts()
    A, B = hat_gradients(g, h, area)
    assert np.abs(A.sum(axis=1)).max() < 1e-12
    assert np.abs(B.sum(axis=1)).max() < 1e-12


def test_mesh_roundtrip_off_and_obj(tmp_path, disk2k):
    m = unit_disk_mesh(300).base
    for name in ("m.off", "m.obj"):
        save_mesh(m, tmp_path / name)
        again = load_mesh(tmp_path / name)
        assert np.array_equal(again.faces, m.faces)
        assert np.array_equal(again.vertices, m.vertices)  # 17 digits: bit-exact


def test_planar_roundtrip_obj_with_uv(tmp_path):
    planar = unit_disk_mesh(200)
    lifted = PlanarMesh(TriMesh(np.column_stack([planar.uv, planar.uv[:, 0] ** 2]),
                                planar.faces), planar.uv)
    save_planar(lifted, tmp_path / "p.obj")
    again = load_planar(tmp_path / "p.obj")
    assert np.array_equal(again.uv, lifted.uv)
    assert np.array_equal(again.base.vertices, lifted.base.vertices)


def test_locate_finds_centroids_and_rejects_outside(disk2k):
    cent = disk2k.uv[disk2k.faces].mean(axis=1)
    idx, bary = disk2k.locate(cent)
    assert (idx == np.arange(disk2k.base.n_faces)).all()
    assert np.allclose(bary, 1.0 / 3.0, atol=1e-9)
    idx, _ = disk2k.locate(np.array([[2.0, 2.0]]))
    assert idx[0] == -1


def test_locate_vertex_positions(disk2k):
    idx, bary = disk2k.locate(disk2k.uv[:50])
    assert (idx >= 0).all()
    recon = (disk2k.uv[disk2k.faces[idx]] * bary[:, :, None]).sum(axis=1)
    assert np.abs(recon - disk2k.uv[:50]).max() < 1e-12
