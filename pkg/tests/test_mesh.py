from __future__ import annotations

import numpy as np
import pytest

from ltsdem.mesh import (
    MeshFormatError,
    TriangleMesh,
    bounding_sphere,
    load_mesh,
    make_cube,
    make_noisy_sphere,
    make_plane,
    mass_properties,
)


def test_cube_is_watertight_with_outward_normals():
    cube = make_cube(np.zeros(3), 1.0)
    assert cube.n_triangles == 12
    assert len(cube.vertices) == 8
    assert cube.is_watertight()
    a, _, _ = cube.corners()
    centers = np.stack(cube.corners()).mean(axis=0)
    # Outward orientation: each face normal points away from the center.
    assert np.all(np.einsum("ij,ij->i", cube.face_normals(), centers) > 0)


def test_cube_total_area():
    cube = make_cube(np.array([3.0, -1.0, 2.0]), 2.0)
    assert abs(cube.areas().sum() - 6 * 4.0) < 1e-12


def test_plane_spans_corners():
    plane = make_plane(np.array([0.0, 0.0, 1.0]), np.array([2.0, 3.0, 1.0]))
    assert plane.n_triangles == 2
    assert abs(plane.areas().sum() - 6.0) < 1e-12
    assert np.all(plane.vertices[:, 2] == 1.0)


def test_plane_rejects_degenerate_corners():
    with pytest.raises(ValueError):
        make_plane(np.zeros(3), np.array([1.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        make_plane(np.zeros(3), np.array([1.0, 0.0, 0.0]))


def test_sphere_exact_triangle_counts():
    for n in (4, 48, 80, 320):
        sphere = make_noisy_sphere(1.0, n, 1.0, seed=1)
        assert sphere.n_triangles == n
        assert sphere.is_watertight()


def test_sphere_vertex_distances_within_noise_band():
    r, eta = 0.5, 1.4
    mesh = make_noisy_sphere(r, 96, eta, seed=7)
    dist = np.linalg.norm(mesh.vertices, axis=1)
    assert np.all(dist >= r - 1e-12)
    assert np.all(dist <= r * eta + 1e-12)
    # Noise actually does something.
    assert dist.max() - dist.min() > 0.01 * r


def test_sphere_deterministic_in_seed():
    a = make_noisy_sphere(1.0, 80, 1.3, seed=5)
    b = make_noisy_sphere(1.0, 80, 1.3, seed=5)
    c = make_noisy_sphere(1.0, 80, 1.3, seed=6)
    np.testing.assert_array_equal(a.vertices, b.vertices)
    assert not np.array_equal(a.vertices, c.vertices)


def test_sphere_rejects_bad_arguments():
    with pytest.raises(ValueError):
        make_noisy_sphere(1.0, 48, 0.9)
    with pytest.raises(ValueError):
        make_noisy_sphere(1.0, 3)
    with pytest.raises(ValueError):
        make_noisy_sphere(1.0, 49)  # odd counts cannot close the surface


def test_unit_cube_mass_properties():
    cube = make_cube(np.zeros(3), 1.0)
    mp = mass_properties(cube, density=1.0)
    assert abs(mp.mass - 1.0) < 1e-12
    np.testing.assert_allclose(mp.com, np.zeros(3), atol=1e-12)
    np.testing.assert_allclose(mp.inertia, np.eye(3) / 6.0, atol=1e-12)


def test_sphere_mass_close_to_analytic():
    # Polyhedral volume converges to the ball volume from below; at 2000
    # faces the quadrature oracle (4/3 pi r^3) is matched within 2%.
    sphere = make_noisy_sphere(1.0, 2000, 1.0, seed=0)
    mp = mass_properties(sphere, density=1.0)
    exact = 4.0 * np.pi / 3.0
    assert abs(mp.mass - exact) / exact < 0.02
    # Inertia of a solid sphere: 2/5 m r^2 on the diagonal.
    np.testing.assert_allclose(np.diag(mp.inertia), 0.4 * mp.mass, rtol=0.03)


def test_mass_properties_translation_invariant():
    rng = np.random.default_rng(2)
    base = make_noisy_sphere(0.7, 48, 1.2, seed=3)
    mp0 = mass_properties(base)
    for _ in range(5):
        shifted = base.translated(rng.normal(scale=10.0, size=3))
        mp = mass_properties(shifted)
        assert abs(mp.mass - mp0.mass) < 1e-9
        np.testing.assert_allclose(mp.inertia, mp0.inertia, atol=1e-9)


def test_mass_properties_reject_open_mesh():
    plane = make_plane(np.zeros(3), np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        mass_properties(plane)


def test_bounding_sphere_of_unit_sphere_mesh():
    mesh = make_noisy_sphere(1.0, 128, 1.0, seed=0)
    sph = bounding_sphere(mesh, epsilon=0.01)
    assert 1.01 <= sph.radius <= 1.02
    np.testing.assert_allclose(sph.center, np.zeros(3), atol=0.01)


def test_bounding_sphere_covers_cube_diagonal():
    cube = make_cube(np.zeros(3), 1.0)
    sph = bounding_sphere(cube, epsilon=0.01)
    assert sph.radius >= np.sqrt(3.0) / 2.0 + 0.01 - 1e-12
    # Every vertex within radius - epsilon of the center.
    d = np.linalg.norm(cube.vertices - sph.center, axis=1)
    assert np.all(d <= sph.radius - 0.01 + 1e-12)


def test_bounding_sphere_single_vertex():
    mesh = TriangleMesh.__new__(TriangleMesh)
    mesh.vertices = np.zeros((1, 3))
    mesh.triangles = np.zeros((0, 3), dtype=np.int64)
    sph = bounding_sphere(mesh, epsilon=0.05)
    assert abs(sph.radius - 0.05) < 1e-15


def test_obj_round_trip(tmp_path):
    path = tmp_path / "tri.obj"
    path.write_text(
        "# comment\n"
        "v 0 0 0\n"
        "v 1 0 0\n"
        "v 0 1 0\n"
        "v 0 0 1\n"
        "f 1 2 3\nf 1 4 2\nf 2 4 3\nf 1 3 4\n"
    )
    mesh = load_mesh(path)
    assert mesh.n_triangles == 4
    assert mesh.is_watertight()


def test_obj_rejects_quad_faces_with_line_number(tmp_path):
    path = tmp_path / "quad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
    with pytest.raises(MeshFormatError, match=":5"):
        load_mesh(path)


def test_obj_rejects_out_of_range_index(tmp_path):
    path = tmp_path / "bad.obj"
    path.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
    with pytest.raises(MeshFormatError, match=":4"):
        load_mesh(path)


def test_obj_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_mesh(tmp_path / "absent.obj")


def test_degenerate_triangle_rejected():
    with pytest.raises(MeshFormatError):
        TriangleMesh(np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]]), np.array([[0, 1, 2]]))
