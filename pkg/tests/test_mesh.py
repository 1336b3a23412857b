import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgnn.datagen import box_mesh, drum_mesh, hopper_mesh
from bgnn.geometry import DegenerateTriangleError, closest_point_on_triangle
from bgnn.mesh import NotWatertightError, ObjParseError, TriMesh, read_obj, write_obj


def test_obj_round_trip_bitwise(tmp_path):
    mesh = drum_mesh(0.05, 0.04, 7)
    write_obj(mesh, tmp_path / "m.obj")
    back = read_obj(tmp_path / "m.obj")
    assert back.vertices.tobytes() == mesh.vertices.tobytes()
    np.testing.assert_array_equal(back.faces, mesh.faces)


def test_obj_rejects_quads_with_line_number(tmp_path):
    p = tmp_path / "q.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n# a quad\nf 1 2 3 4\n")
    with pytest.raises(ObjParseError, match="line 6"):
        read_obj(p)


@pytest.mark.parametrize("text", ["v 0 0\n", "v 0 0 0\nf 1 2 3\n", "v a 0 0\n"])
def test_obj_malformed(tmp_path, text):
    p = tmp_path / "bad.obj"
    p.write_text(text)
    with pytest.raises(ObjParseError):
        read_obj(p)


def test_degenerate_face_rejected():
    with pytest.raises(DegenerateTriangleError):
        TriMesh(np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0]], float), np.array([[0, 1, 2]]))


def test_face_index_range():
    with pytest.raises(ValueError):
        TriMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))


def test_watertight_audit():
    assert box_mesh().is_watertight()
    assert drum_mesh().is_watertight()
    hopper = hopper_mesh()
    assert not hopper.is_watertight()
    with pytest.raises(NotWatertightError):
        hopper.contains(np.zeros((1, 3)))


def test_box_faces_wind_outward():
    mesh = box_mesh((1, 1, 1))
    centroids = mesh.vertices[mesh.faces].mean(axis=1)
    outward = centroids - 0.5
    assert np.all((mesh.winding_normals() * outward).sum(axis=1) > 0)


def test_contains_center_and_far_point():
    mesh = box_mesh((1, 1, 1))
    assert mesh.contains(np.array([[0.5, 0.5, 0.5]]))[0]
    assert not mesh.contains(np.array([[5.0, 0.5, 0.5]]))[0]


def test_contains_matches_box_oracle():
    mesh = box_mesh((1, 1, 1))
    pts = np.random.default_rng(0).uniform(-0.5, 1.5, size=(1000, 3))
    truth = np.all((pts > 0) & (pts < 1), axis=1)
    np.testing.assert_array_equal(mesh.contains(pts), truth)


def test_contains_surface_and_edge_points_are_outside():
    mesh = box_mesh((1, 1, 1))
    pts = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [1.0, 1.0, 0.5], [0.5, 0.5, 1.0], [1, 1, 1]], float)
    assert not mesh.contains(pts).any()


def test_contains_drum_matches_polygon():
    facets = 16
    mesh = drum_mesh(0.05, 0.04, facets)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-0.06, 0.06, size=(500, 3))
    pts[:, 1] *= 0.5
    inside = mesh.contains(pts)
    # inscribed radius of the regular polygon bounds the inside region from below
    r_in = 0.05 * np.cos(np.pi / facets)
    rad = np.hypot(pts[:, 0], pts[:, 2])
    in_len = np.abs(pts[:, 1]) < 0.02
    assert np.all(inside[(rad < r_in * 0.999) & in_len])
    assert not np.any(inside[(rad > 0.05) | ~in_len])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 11), st.sampled_from([(1, 0, 2), (2, 1, 0), (0, 2, 1)]))
def test_winding_flip_keeps_frames_bitwise(face, perm):
    mesh = box_mesh((0.3, 0.2, 0.1), origin=(0.01, 0.02, 0.03))
    faces = mesh.faces.copy()
    faces[face] = faces[face][list(perm)]
    flipped = TriMesh(mesh.vertices, faces)
    for name in ("bases", "edge0s", "edge1s", "normal_pairs"):
        assert getattr(flipped, name).tobytes() == getattr(mesh, name).tobytes()


def test_transformed_translation_and_rotation():
    mesh = box_mesh((1, 1, 1))
    moved = mesh.transformed(translation=(1.0, 2.0, 3.0))
    np.testing.assert_array_equal(moved.vertices, mesh.vertices + [1.0, 2.0, 3.0])
    R = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1]], float)
    rot = mesh.transformed(rotation=R, center=(0.5, 0.5, 0.5))
    np.testing.assert_allclose(np.sort(rot.vertices, axis=0), np.sort(mesh.vertices, axis=0), atol=1e-15)


def test_triangle_accessor_matches_frames():
    mesh = box_mesh()
    r = closest_point_on_triangle((0.05, 0.05, -1.0), mesh.triangle(0))
    assert r.dist_sq >= 1.0
