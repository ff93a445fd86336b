import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from usocc.extraction import (OccupancyGrid, TriangleMesh, grid_nodes, marching_cubes, read_mesh,
                              sample_grid, smooth, write_mesh)
from usocc.geometry import SimilarityTransform
from usocc.metrics import compute_metrics, sample_surface
from usocc.network import InputKind, OccupancyModel, default_config


def _grid(values, spacing=1.0):
    return OccupancyGrid(values, np.zeros(3), np.full(3, spacing))


def _sphere_grid(n, r=0.3, c=(0.5, 0.5, 0.5)):
    nodes = grid_nodes((n,) * 3)
    return OccupancyGrid(r - np.linalg.norm(nodes - np.array(c), axis=-1), np.zeros(3),
                         np.full(3, 1 / (n - 1)))


def _sphere_points(n, r=0.3, c=(0.5, 0.5, 0.5), seed=0):
    v = np.random.default_rng(seed).normal(size=(n, 3))
    return np.asarray(c) + r * v / np.linalg.norm(v, axis=1, keepdims=True)


# -- smoothing --------------------------------------------------------------------

def test_smooth_zero_sigma_is_identity(rng):
    g = _grid(rng.random((6, 7, 8)))
    np.testing.assert_array_equal(smooth(g, 0.0).values, g.values)


@given(c=st.floats(-1, 1), sigma=st.floats(0.3, 2.0))
def test_smooth_preserves_constants(c, sigma):
    g = _grid(np.full((5, 5, 5), c))
    np.testing.assert_allclose(smooth(g, sigma).values, c, atol=1e-12)


def test_smooth_impulse_matches_truncated_gaussian():
    v = np.zeros((15, 15, 15))
    v[7, 7, 7] = 1.0
    out = smooth(_grid(v), 1.0, 3).values
    k = np.exp(-0.5 * np.arange(-3, 4) ** 2)
    k /= k.sum()
    expected = np.zeros_like(v)
    expected[4:11, 4:11, 4:11] = k[:, None, None] * k[None, :, None] * k[None, None, :]
    np.testing.assert_allclose(out, expected, atol=1e-12)
    assert out.sum() == pytest.approx(1.0)


# -- grid sampling ----------------------------------------------------------------

def test_grid_nodes_include_corners():
    nodes = grid_nodes((3, 4, 5))
    assert nodes.shape == (3, 4, 5, 3)
    np.testing.assert_array_equal(nodes[0, 0, 0], [0, 0, 0])
    np.testing.assert_array_equal(nodes[-1, -1, -1], [1, 1, 1])


def test_sample_grid_constant_model_is_shifted_probability():
    m = OccupancyModel.initialize(default_config(InputKind.COORDINATES), 0)
    for w, b in zip(m.weights, m.biases):
        w[:] = 0
        b[:] = 0
    m.biases[-1][:] = np.log(0.8 / 0.2)
    g = sample_grid(m, None, 5)
    np.testing.assert_allclose(g.values, 0.3)
    np.testing.assert_allclose(g.spacing, 0.25)
    assert marching_cubes(g).is_empty


def test_sample_grid_feeds_features_at_nodes():
    m = OccupancyModel.initialize(default_config(), 0)
    seen = []

    def source(pts):
        seen.append(pts.copy())
        return np.zeros_like(pts)

    sample_grid(m, source, (2, 3, 4))
    np.testing.assert_array_equal(seen[0], grid_nodes((2, 3, 4)).reshape(-1, 3))
    with pytest.raises(ValueError):
        sample_grid(m, source, (1, 3, 3))


# -- marching cubes ---------------------------------------------------------------

def test_single_voxel_gives_closed_surface():
    v = np.full((3, 3, 3), -1.0)
    v[1, 1, 1] = 1.0
    mesh = marching_cubes(_grid(v))
    assert mesh.is_watertight()
    assert mesh.euler_characteristic() == 2
    assert mesh.signed_volume() > 0


def test_sphere_mesh_is_watertight_and_outward():
    mesh = marching_cubes(_sphere_grid(32))
    assert mesh.is_watertight() and mesh.euler_characteristic() == 2
    assert mesh.signed_volume() == pytest.approx(4 / 3 * np.pi * 0.3 ** 3, rel=0.02)


def test_sphere_vertices_lie_on_surface():
    n = 48
    mesh = marching_cubes(_sphere_grid(n))
    r = np.linalg.norm(mesh.vertices - 0.5, axis=1)
    # linear interpolation of a smooth field: error well below one cell
    assert np.abs(r - 0.3).max() < 0.25 / (n - 1)


def test_vertices_interpolate_linearly_along_edges():
    v = np.full((2, 2, 2), -1.0)
    v[0] = 3.0  # the x = 0 face is inside; crossing at x = 3 / 4
    mesh = marching_cubes(_grid(v, 2.0))
    np.testing.assert_allclose(mesh.vertices[:, 0], 1.5)


def test_no_crossing_gives_empty_mesh():
    assert marching_cubes(_grid(np.full((4, 4, 4), -0.2))).is_empty
    assert marching_cubes(_grid(np.full((4, 4, 4), 0.2))).is_empty


def test_extraction_converges_with_resolution():
    ref = _sphere_points(20000, seed=1)
    cds = []
    for n in (16, 32, 64):
        pts = sample_surface(marching_cubes(_sphere_grid(n)), 20000, 0)
        cds.append(compute_metrics(pts, ref).cd)
    assert cds[0] > cds[1] > cds[2]


def test_cleaned_drops_degenerate_triangles():
    mesh = TriangleMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]], float),
                        np.array([[0, 1, 2], [0, 1, 3]]))
    c = mesh.cleaned()
    assert len(c) == 1 and len(c.vertices) == 3


def test_triangle_index_checked():
    with pytest.raises(ValueError):
        TriangleMesh(np.zeros((2, 3)), np.array([[0, 1, 2]]))


# -- files ------------------------------------------------------------------------

@pytest.mark.parametrize("ext", ["ply", "obj"])
def test_mesh_file_round_trip(tmp_path, ext):
    mesh = marching_cubes(_sphere_grid(12))
    tf = SimilarityTransform(1 / 60, np.array([0.1, 0.0, -0.2]))
    write_mesh(mesh, tmp_path / f"m.{ext}", tf)
    back, tf2 = read_mesh(tmp_path / f"m.{ext}")
    np.testing.assert_array_equal(back.vertices, mesh.vertices)
    np.testing.assert_array_equal(back.triangles, mesh.triangles)
    assert tf2.scale == tf.scale
    np.testing.assert_array_equal(tf2.translation, tf.translation)


@settings(max_examples=10, deadline=None)
@given(scale=st.floats(0.01, 100), seed=st.integers(0, 100))
def test_mesh_file_without_transform(tmp_path_factory, scale, seed):
    d = tmp_path_factory.mktemp("m")
    verts = np.random.default_rng(seed).random((4, 3)) * scale
    mesh = TriangleMesh(verts, np.array([[0, 1, 2], [0, 2, 3]]))
    write_mesh(mesh, d / "m.ply")
    back, tf = read_mesh(d / "m.ply")
    assert tf is None
    np.testing.assert_array_equal(back.vertices, verts)
