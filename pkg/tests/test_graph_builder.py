"""Graph construction: tokens, distances, adjacency."""

import numpy as np
import pytest

import lattisketch as ls


def points_lattice(pts, side=256, n=32):
    return ls.SketchLattice(points=np.asarray(pts, dtype=np.int64), side=side, n=n)


# ---------------------------------------------------------------------------
# tokenize


def test_tokenize_joint_origin():
    assert ls.tokenize((0, 0), 256, "joint") == 0


def test_tokenize_joint_max():
    assert ls.tokenize((255, 255), 256, "joint") == 65535


def test_tokenize_joint_formula():
    assert ls.tokenize((3, 7), 256, "joint") == 7 * 256 + 3


def test_tokenize_factorized_pair():
    assert tuple(ls.tokenize((3, 7), 256, "factorized")) == (3, 7)


def test_tokenize_out_of_range():
    with pytest.raises(ls.OutOfRange):
        ls.tokenize((256, 0), 256, "joint")
    with pytest.raises(ls.OutOfRange):
        ls.tokenize((0, -1), 256, "factorized")


# ---------------------------------------------------------------------------
# distances


def test_pairwise_single_point():
    assert ls.pairwise_distances(points_lattice([[5, 5]])).tolist() == [[0.0]]


def test_pairwise_3_4_5():
    d = ls.pairwise_distances(points_lattice([[0, 0], [3, 4]]))
    assert d[0, 1] == 5.0 and d[1, 0] == 5.0


def test_pairwise_matches_naive_oracle():
    rng = np.random.default_rng(2)
    pts = rng.integers(0, 256, size=(10, 2))
    lat = points_lattice(pts)
    d = ls.pairwise_distances(lat)
    for i in range(10):
        for j in range(10):
            want = np.hypot(pts[i, 0] - pts[j, 0], pts[i, 1] - pts[j, 1])
            assert d[i, j] == pytest.approx(want, abs=1e-9)


def test_pairwise_empty_raises():
    with pytest.raises(ls.EmptyLattice):
        ls.pairwise_distances(points_lattice(np.zeros((0, 2))))


# ---------------------------------------------------------------------------
# adjacency


def test_adjacency_single_point_self_loop():
    g = ls.build_adjacency(points_lattice([[9, 9]]), ls.GraphConfig())
    assert g.adjacency.tolist() == [[1.0]]


def test_adjacency_linked_pair_weight():
    # pixel distance 36.2 -> norm approx 0.1 -> weight approx 0.9
    lat = points_lattice([[0, 0], [36, 4]])  # hypot = 36.22...
    d = np.hypot(36, 4)
    g = ls.build_adjacency(lat, ls.GraphConfig(proximity="nearby", d_t=0.2))
    want = 1.0 - d / (256 * np.sqrt(2))
    assert g.adjacency[0, 1] == pytest.approx(want, abs=1e-12)
    assert want == pytest.approx(0.9, abs=0.001)


def test_adjacency_nearby_strict_threshold():
    side = 256
    diag = side * np.sqrt(2)
    # place two points at a distance just over the threshold
    dist = int(np.ceil(0.2 * diag)) + 1
    lat = points_lattice([[0, 0], [dist, 0]])
    g = ls.build_adjacency(lat, ls.GraphConfig(proximity="nearby", d_t=0.2))
    assert g.adjacency[0, 1] == 0.0
    # nearest mode ignores the threshold
    g2 = ls.build_adjacency(lat, ls.GraphConfig(proximity="nearest"))
    assert g2.adjacency[0, 1] > 0.0


def test_adjacency_nearest_union_symmetric():
    # chain 0 - 1 - 2 with 1 closest to 0: nearest of 2 is 1, nearest of
    # 1 is 0, nearest of 0 is 1; union links (0,1) and (1,2)
    lat = points_lattice([[0, 0], [10, 0], [25, 0]])
    g = ls.build_adjacency(lat, ls.GraphConfig(proximity="nearest"))
    a = g.adjacency
    assert a[0, 1] > 0 and a[1, 0] > 0
    assert a[1, 2] > 0 and a[2, 1] > 0
    assert a[0, 2] == 0 and a[2, 0] == 0


def test_adjacency_matches_naive_nearby_oracle():
    rng = np.random.default_rng(8)
    pts = np.unique(rng.integers(0, 256, size=(40, 2)), axis=0)
    lat = points_lattice(pts)
    cfg = ls.GraphConfig(proximity="nearby", d_t=0.2)
    g = ls.build_adjacency(lat, cfg)
    m = lat.m
    diag = 256 * np.sqrt(2)
    for i in range(m):
        for j in range(m):
            if i == j:
                assert g.adjacency[i, j] == 1.0
                continue
            d = np.hypot(*(lat.points[i] - lat.points[j]).astype(float))
            want = 1.0 - d / diag if d / diag < 0.2 else 0.0
            assert g.adjacency[i, j] == pytest.approx(want, abs=1e-12)


def test_adjacency_symmetry_range_diagonal():
    rng = np.random.default_rng(13)
    for proximity in ("nearby", "nearest"):
        pts = np.unique(rng.integers(0, 256, size=(60, 2)), axis=0)
        g = ls.build_adjacency(points_lattice(pts),
                               ls.GraphConfig(proximity=proximity))
        a = g.adjacency
        assert np.array_equal(a, a.T)
        assert a.min() >= 0.0 and a.max() <= 1.0
        assert np.all(np.diag(a) == 1.0)


def test_adjacency_no_self_loops_flag():
    lat = points_lattice([[0, 0], [5, 0]])
    g = ls.build_adjacency(lat, ls.GraphConfig(self_loops=False))
    assert np.all(np.diag(g.adjacency) == 0.0)


def test_adjacency_support_monotone_in_threshold():
    rng = np.random.default_rng(4)
    pts = np.unique(rng.integers(0, 256, size=(50, 2)), axis=0)
    lat = points_lattice(pts)
    prev_support = None
    for d_t in (0.05, 0.1, 0.2, 0.4):
        a = ls.build_adjacency(lat, ls.GraphConfig(proximity="nearby", d_t=d_t)).adjacency
        support = a > 0
        if prev_support is not None:
            assert np.all(support[prev_support])  # superset of smaller d_t
        prev_support = support


def test_adjacency_translation_invariant_tokens_change():
    pts = np.array([[10, 10], [30, 14], [20, 60]])
    cfg = ls.GraphConfig(proximity="nearby", d_t=0.3)
    a = ls.build_adjacency(points_lattice(pts), cfg).adjacency
    b_graph = ls.build_adjacency(points_lattice(pts + 100), cfg)
    assert np.allclose(a, b_graph.adjacency, atol=1e-12)
    assert not np.array_equal(
        ls.tokenize_all(points_lattice(pts), "joint"),
        ls.tokenize_all(points_lattice(pts + 100), "joint"))


def test_adjacency_empty_lattice_raises():
    with pytest.raises(ls.EmptyLattice):
        ls.build_adjacency(points_lattice(np.zeros((0, 2))), ls.GraphConfig())


def test_graph_json_round_trip():
    lat = points_lattice([[0, 0], [10, 0], [25, 30]])
    g = ls.build_adjacency(lat, ls.GraphConfig())
    back = ls.graph_from_json_obj(g.to_json_obj())
    assert np.allclose(back.adjacency, g.adjacency)
    assert np.array_equal(back.tokens, g.tokens)


def test_graph_config_validation():
    with pytest.raises(ls.OutOfRange):
        ls.GraphConfig(d_t=0.0)
    with pytest.raises(ls.OutOfRange):
        ls.GraphConfig(d_t=1.0)
    with pytest.raises(ls.OutOfRange):
        ls.GraphConfig(proximity="bogus")
