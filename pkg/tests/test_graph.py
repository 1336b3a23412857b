import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bgnn.datagen import box_mesh, drum_mesh, hopper_mesh
from bgnn.geometry import closest_point_on_triangle
from bgnn.graph import (
    BoundaryGraph, BoundaryMode, EdgeFeatureLaw, FrameWindow, GraphConfig, build_graph, edge_features,
    edge_growth, neighbor_pairs, node_features, read_graph_csv, sample_boundary, write_graph_csv,
)
from bgnn.mesh import TriMesh

FLOOR = TriMesh(np.array([[-10, -10, 0], [10, -10, 0], [0, 10, 0]], float), np.array([[0, 1, 2]]))


def static_window(x, history=2, dt=0.01):
    x = np.asarray(x, dtype=np.float64)
    return FrameWindow(np.repeat(x[None], history + 1, axis=0), dt)


def brute_pairs(x, r):
    out = set()
    for i in range(len(x)):
        for j in range(i + 1, len(x)):
            d = x[j] - x[i]
            if d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= r * r:
                out.add((i, j))
    return out


# ---------------------------------------------------------------- examples

def test_collinear_particles():
    x = np.array([[0, 0, 5], [1, 0, 5], [2, 0, 5]], float)
    g = build_graph(static_window(x), FLOOR, GraphConfig(r_cutoff=1.0, history=2))
    real = {(int(s), int(r)) for s, r, v in zip(g.senders, g.receivers, g.edge_is_virtual) if not v}
    assert real == {(0, 1), (1, 0), (1, 2), (2, 1)}
    assert g.n_virtual == 0


def test_particle_above_floor():
    cfg = GraphConfig(r_cutoff=0.1, history=2)
    g = build_graph(static_window([[0.2, 0.3, 0.05]]), FLOOR, cfg)
    assert g.n_virtual == 1
    np.testing.assert_allclose(g.positions[1], [0.2, 0.3, 0.0], atol=1e-14)
    assert g.n_edges == 1 and g.senders[0] == 1 and g.receivers[0] == 0 and g.edge_is_virtual[0]
    np.testing.assert_array_equal(g.node_features[1, 6:], [1, 0, 0, -1, 0, 0, 1])
    np.testing.assert_allclose(g.edge_features[0], [0.05 ** 2, 0, 0, 0.05], atol=1e-14)


def test_particle_between_two_triangles():
    # two triangles sharing the edge x = 0 in the floor plane
    v = np.array([[0, -1, 0], [0, 1, 0], [-1, 0, 0], [1, 0, 0]], float)
    mesh = TriMesh(v, np.array([[0, 1, 2], [0, 3, 1]]))
    g = build_graph(static_window([[0.0, 0.0, 0.05]]), mesh, GraphConfig(r_cutoff=0.1, history=2))
    assert g.n_virtual == 2
    assert sorted(g.source_triangle[1:].tolist()) == [0, 1]
    assert int(g.edge_is_virtual.sum()) == 2


def test_node_feature_layout():
    np.testing.assert_array_equal(node_features(np.zeros((5, 3))), np.zeros(22))
    f = node_features(np.zeros((5, 3)), virtual=True, normal_pair=[0, 0, -1, 0, 0, 1])
    assert f[15] == 1 and f[:15].sum() == 0
    np.testing.assert_array_equal(f[16:], [0, 0, -1, 0, 0, 1])
    f = node_features(np.array([[1, 0, 0], [1, 0, 0]], float))
    np.testing.assert_array_equal(f, [1, 0, 0, 1, 0, 0] + [0] * 7)


def test_window_constant_velocity_features():
    x0 = np.zeros((1, 3))
    frames = np.stack([x0 + [k * 0.01, 0, 0] for k in range(3)])
    g = build_graph(FrameWindow(frames, 0.01), FLOOR, GraphConfig(r_cutoff=0.001, history=2))
    np.testing.assert_allclose(g.node_features[0], [1, 0, 0, 1, 0, 0] + [0] * 7, atol=1e-15)


@pytest.mark.parametrize("law,delta,expected", [
    ("plain", (1, 0, 0), [1, 1, 0, 0]),
    ("inverse_first", (2, 0, 0), [0.5, 0.5, 0, 0]),
    ("inverse_square", (2, 0, 0), [0.25, 0.25, 0, 0]),
])
def test_edge_feature_laws(law, delta, expected):
    np.testing.assert_array_equal(edge_features(np.array([delta], float), law)[0], expected)


def test_edge_feature_floor():
    out = edge_features(np.zeros((1, 3)), EdgeFeatureLaw.INVERSE_FIRST)
    assert np.all(np.isfinite(out)) and out[0, 0] == pytest.approx(1e9)


def test_neighbor_pairs_inclusive_and_empty():
    assert neighbor_pairs(np.zeros((0, 3)), 1.0).shape == (0, 2)
    x = np.array([[0, 0, 0], [0.5, 0, 0]], float)
    assert neighbor_pairs(x, 0.5).tolist() == [[0, 1]]
    with pytest.raises(ValueError):
        neighbor_pairs(x, 0.0)


def test_neighbor_pairs_brute_force():
    x = np.random.default_rng(0).uniform(0, 1, size=(100, 3))
    got = {tuple(p) for p in neighbor_pairs(x, 0.2).tolist()}
    assert got == brute_pairs(x, 0.2)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.floats(0.01, 0.5), st.integers(0, 2 ** 31))
def test_neighbor_pairs_property(n, r, seed):
    x = np.random.default_rng(seed).uniform(-1, 1, size=(n, 3))
    assert {tuple(p) for p in neighbor_pairs(x, r).tolist()} == brute_pairs(x, r)


def test_sample_boundary_lattice():
    tri = TriMesh(np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], float), np.array([[0, 1, 2]]))
    pts, ids = sample_boundary(tri, 5.0)
    assert len(pts) == 3
    big = TriMesh(np.array([[0, 0, 0], [10, 0, 0], [0, 10, 0]], float), np.array([[0, 1, 2]]))
    n1 = len(sample_boundary(big, 0.1)[0])
    n2 = len(sample_boundary(big, 0.05)[0])
    # lattice with k steps per side has (k+1)(k+2)/2 points; k = ceil(10*sqrt2/spacing)
    k1, k2 = int(np.ceil(10 * np.sqrt(2) / 0.1)), int(np.ceil(10 * np.sqrt(2) / 0.05))
    assert n1 == (k1 + 1) * (k1 + 2) // 2 and n2 == (k2 + 1) * (k2 + 2) // 2
    assert 3.8 < n2 / n1 < 4.2


def test_sample_points_lie_on_triangles():
    mesh = drum_mesh(0.05, 0.04, 8)
    pts, ids = sample_boundary(mesh, 0.01)
    for p, t in zip(pts[::7], ids[::7]):
        assert closest_point_on_triangle(p, mesh.triangle(t)).dist_sq <= 1e-30


def _scene(seed=0, n=40):
    rng = np.random.default_rng(seed)
    mesh = box_mesh((0.1, 0.1, 0.1))
    base = rng.uniform(0.0, 0.1, size=(n, 3))
    frames = np.stack([base + 0.001 * k * rng.normal(size=base.shape) for k in range(4)])
    return FrameWindow(frames, 0.01), mesh


def test_virtual_nodes_match_brute_force():
    window, mesh = _scene()
    cfg = GraphConfig(r_cutoff=0.02, history=3)
    g = build_graph(window, mesh, cfg)
    x = window.current
    expected = set()
    for i in range(len(x)):
        for t in range(len(mesh)):
            if closest_point_on_triangle(x[i], mesh.triangle(t)).dist_sq <= cfg.r_tilde_cutoff ** 2:
                expected.add((i, t))
    got = set(zip(g.target_particle[g.is_virtual].tolist(), g.source_triangle[g.is_virtual].tolist()))
    assert got == expected
    # every virtual node: exactly one outgoing edge, no incoming edges
    virt = np.flatnonzero(g.is_virtual)
    assert np.all(np.bincount(g.senders, minlength=g.n_nodes)[virt] == 1)
    assert np.all(np.bincount(g.receivers, minlength=g.n_nodes)[virt] == 0)
    assert g.n_virtual == int(g.edge_is_virtual.sum())


def test_super_node_mode():
    window, mesh = _scene(1)
    g = build_graph(window, mesh, GraphConfig(r_cutoff=0.02, history=3, boundary_mode="super_node_per_triangle"))
    base = build_graph(window, mesh, GraphConfig(r_cutoff=0.02, history=3))
    assert g.n_virtual <= len(mesh)
    assert int(g.edge_is_virtual.sum()) == int(base.edge_is_virtual.sum())


def test_sampled_mode():
    window, mesh = _scene(2)
    cfg = GraphConfig(r_cutoff=0.02, history=3, boundary_mode="sampled", sample_spacing=0.01)
    g = build_graph(window, mesh, cfg)
    assert g.n_virtual > 0
    d = g.positions[g.receivers[g.edge_is_virtual]] - g.positions[g.senders[g.edge_is_virtual]]
    assert np.all((d * d).sum(axis=1) <= 0.02 ** 2 * (1 + 1e-12))
    with pytest.raises(ValueError):
        GraphConfig(boundary_mode="sampled")


def test_bidirectional_boundary():
    window, mesh = _scene(3)
    g = build_graph(window, mesh, GraphConfig(r_cutoff=0.02, history=3, bidirectional_boundary=True))
    virt = np.flatnonzero(g.is_virtual)
    assert np.all(np.bincount(g.receivers, minlength=g.n_nodes)[virt] == 1)
    fwd = g.edge_features[g.edge_is_virtual & g.is_virtual[g.senders]]
    back = g.edge_features[g.edge_is_virtual & ~g.is_virtual[g.senders]]
    np.testing.assert_array_equal(fwd[:, 0], back[:, 0])
    np.testing.assert_array_equal(fwd[:, 1:], -back[:, 1:])


def test_history_mismatch_and_nan():
    window, mesh = _scene()
    with pytest.raises(ValueError):
        build_graph(window, mesh, GraphConfig(history=5))
    bad = window.positions.copy()
    bad[-1, 0, 0] = np.nan
    with pytest.raises(ValueError):
        FrameWindow(bad, 0.01)


def _canonical(g):
    """Edge set keyed by node identity (particle id or (particle, triangle))."""
    key = []
    for i in range(g.n_nodes):
        key.append(("v", int(g.target_particle[i]), int(g.source_triangle[i])) if g.is_virtual[i] else ("r", i))
    return key


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_permutation_equivariance(seed):
    window, mesh = _scene(seed % 1000, 25)
    cfg = GraphConfig(r_cutoff=0.03, history=3)
    perm = np.random.default_rng(seed).permutation(25)
    g = build_graph(window, mesh, cfg)
    gp = build_graph(FrameWindow(window.positions[:, perm], window.dt), mesh, cfg)
    inv = np.argsort(perm)

    def edges(graph, relabel):
        k = _canonical(graph)
        out = {}
        for e in range(graph.n_edges):
            s, r = k[graph.senders[e]], k[graph.receivers[e]]
            s, r = relabel(s), relabel(r)
            out[(s, r)] = graph.edge_features[e].tobytes()
        return out

    ident = lambda k: k  # noqa: E731

    def back(k):
        return ("r", int(perm[k[1]])) if k[0] == "r" else ("v", int(perm[k[1]]), k[2])

    assert edges(gp, back) == edges(g, ident)
    np.testing.assert_array_equal(gp.node_features[:25], g.node_features[:25][perm])


def test_translation_invariance_bitwise():
    # dyadic coordinates and shift keep every subtraction exact
    rng = np.random.default_rng(5)
    x = np.round(rng.uniform(0, 0.1, size=(4, 30, 3)) * 2 ** 20) / 2 ** 20
    mesh = box_mesh((0.125, 0.125, 0.125))
    shift = np.array([0.5, -0.25, 1.0])
    cfg = GraphConfig(r_cutoff=0.03, history=3)
    g = build_graph(FrameWindow(x, 0.01), mesh, cfg)
    h = build_graph(FrameWindow(x + shift, 0.01), mesh.transformed(translation=shift), cfg)
    assert g.node_features.tobytes() == h.node_features.tobytes()
    assert g.edge_features.tobytes() == h.edge_features.tobytes()
    np.testing.assert_array_equal(g.senders, h.senders)


def test_winding_flip_graph_bitwise():
    window, mesh = _scene(4)
    flipped = TriMesh(mesh.vertices, mesh.faces[:, ::-1])
    cfg = GraphConfig(r_cutoff=0.02, history=3)
    a, b = build_graph(window, mesh, cfg), build_graph(window, flipped, cfg)
    assert a.node_features.tobytes() == b.node_features.tobytes()
    assert a.edge_features.tobytes() == b.edge_features.tobytes()


def test_adjacency_and_concatenate():
    window, mesh = _scene(6)
    g = build_graph(window, mesh, GraphConfig(r_cutoff=0.02, history=3))
    adj = g.adjacency()
    assert sum(len(v) for v in adj) == g.n_edges
    both = BoundaryGraph.concatenate([g, g])
    assert both.n_nodes == 2 * g.n_nodes and both.n_edges == 2 * g.n_edges
    assert both.senders[g.n_edges:].min() >= g.n_nodes


def test_edge_growth_counts():
    window, mesh = _scene(7)
    g = build_graph(window, mesh, GraphConfig(r_cutoff=0.02, history=3))
    st_ = edge_growth(g)
    real_pairs = brute_pairs(window.current, 0.02)
    assert st_["n_real_edges"] == 2 * len(real_pairs)
    assert st_["n_boundary_edges"] == g.n_virtual
    assert st_["percent_increase"] == 100.0 * g.n_virtual / (2 * len(real_pairs))


def test_graph_csv_round_trip(tmp_path):
    window, mesh = _scene(8, 10)
    g = build_graph(window, mesh, GraphConfig(r_cutoff=0.03, history=3))
    write_graph_csv(g, tmp_path / "g.csv")
    back = read_graph_csv(tmp_path / "g.csv")
    np.testing.assert_array_equal(back["node_features"], g.node_features)
    np.testing.assert_array_equal(back["edge_features"], g.edge_features)
    np.testing.assert_array_equal(back["senders"], g.senders)


def test_hopper_graph_builds():
    mesh = hopper_mesh()
    g = build_graph(static_window([[0.0, 0.0, 0.0]]), mesh, GraphConfig(r_cutoff=0.05, history=2))
    assert g.n_virtual >= 1
