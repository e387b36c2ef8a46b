import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfbbs.topology import (Graph, LinkFailureModel, canonical_edges, connected_geometric_graph,
                            expected_weight_matrix, metropolis_weights, random_geometric_graph,
                            read_edge_list, sample_network, sensing_radius, validate_weights,
                            write_edge_list)

PATH3_W = np.array([[0.75, 0.25, 0.0], [0.25, 0.5, 0.25], [0.0, 0.25, 0.75]])


def test_graph_canonicalizes_edges():
    g = Graph(4, ((2, 1), (0, 3), (1, 2)))
    assert g.edges == ((0, 3), (1, 2))
    assert g.degrees.tolist() == [1, 1, 1, 1]


@pytest.mark.parametrize("edges", [((0, 0),), ((0, 5),)])
def test_graph_rejects_bad_edges(edges):
    with pytest.raises(ValueError):
        Graph(3, edges)


def test_geometric_graph_two_close_nodes():
    # search for a seed that places two nodes within 0.1 of each other
    for seed in range(10_000):
        pos = np.random.default_rng(seed).random((2, 2))
        if np.linalg.norm(pos[0] - pos[1]) <= 0.1:
            break
    g = random_geometric_graph(2, 1.0, seed)
    assert sensing_radius(2, 1.0) == pytest.approx(math.sqrt(math.log(2) / 2))
    assert g.edges == ((0, 1),)


@pytest.mark.parametrize("seed", [0, 7, 123])
def test_geometric_graph_matches_bruteforce_distances(seed):
    m, r = 30, 1.2
    g = random_geometric_graph(m, r, seed)
    pos = g.positions
    radius = r * math.sqrt(math.log(m) / m)
    expected = set()
    for i in range(m):
        for j in range(i + 1, m):
            if math.dist(pos[i], pos[j]) <= radius:
                expected.add((i, j))
    assert set(g.edges) == expected
    assert random_geometric_graph(m, r, seed).edges == g.edges


def test_fifty_node_network_is_usually_connected():
    g, seed = connected_geometric_graph(50, 1.0, 0)
    rep = validate_weights(metropolis_weights(g))
    assert rep.passes_assumption1
    assert seed - 0 <= 100


def test_geometric_graph_preconditions():
    with pytest.raises(ValueError):
        random_geometric_graph(1, 1.0, 0)
    with pytest.raises(ValueError):
        random_geometric_graph(5, 0.0, 0)


def test_metropolis_path3(path3):
    _, w = path3
    np.testing.assert_array_equal(w, PATH3_W)


def test_metropolis_single_edge_and_isolated_node():
    w = metropolis_weights(Graph(2, ((0, 1),)))
    np.testing.assert_array_equal(w, [[0.5, 0.5], [0.5, 0.5]])
    w = metropolis_weights(Graph(3, ((0, 1),)))
    np.testing.assert_array_equal(w[2], [0.0, 0.0, 1.0])


def test_blend_restores_positive_definiteness():
    w = metropolis_weights(Graph(2, ((0, 1),)), blend=0.2)
    rep = validate_weights(w)
    assert rep.lambda_min == pytest.approx(0.2)
    with pytest.raises(ValueError):
        metropolis_weights(Graph(2, ((0, 1),)), blend=1.0)


def test_validate_path3(path3):
    rep = validate_weights(path3[1])
    assert rep.lambda_min == pytest.approx(0.25, abs=1e-12)
    assert rep.lambda_max == pytest.approx(1.0, abs=1e-12)
    assert rep.rho_mix == pytest.approx(0.75, abs=1e-12)
    assert rep.gershgorin_min == pytest.approx(0.0)
    assert rep.passes_assumption1


def test_validate_two_node_fails_positivity():
    rep = validate_weights(np.array([[0.5, 0.5], [0.5, 0.5]]))
    assert rep.lambda_min == pytest.approx(0.0, abs=1e-12)
    assert not rep.passes_assumption1


def test_validate_identity_fails_connectivity():
    rep = validate_weights(np.eye(4))
    assert rep.rho_mix == pytest.approx(1.0)
    assert not rep.passes_assumption1


def test_validate_reports_instead_of_crashing():
    rep = validate_weights(np.array([[0.9, 0.2], [0.1, 0.8]]))
    assert not rep.symmetric and not rep.passes_assumption1
    rep = validate_weights(np.array([[0.5, 0.6], [0.6, 0.5]]))
    assert not rep.stochastic
    with pytest.raises(ValueError):
        validate_weights(np.ones((2, 3)))


def test_sample_extremes(path3):
    _, w = path3
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(sample_network(w, LinkFailureModel(1.0), rng), w)
    np.testing.assert_array_equal(sample_network(w, LinkFailureModel(0.0), rng), np.eye(3))


def test_sample_path3_one_failed_link(path3):
    _, w = path3

    class FixedDraws:
        def random(self, n):
            return np.array([0.9, 0.1])[:n]  # edge (0,1) fails, (1,2) survives at p=0.5

    out = sample_network(w, LinkFailureModel(0.5), FixedDraws())
    np.testing.assert_array_equal(out, [[1, 0, 0], [0, 0.75, 0.25], [0, 0.25, 0.75]])


def test_link_failure_model_validates():
    with pytest.raises(ValueError):
        LinkFailureModel(1.5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), p=st.floats(0.0, 1.0))
def test_samples_keep_structure(seed, p):
    g, _ = connected_geometric_graph(12, 1.5, seed % 50)
    w = metropolis_weights(g)
    lam_base = validate_weights(w).lambda_min
    wk = sample_network(w, p, np.random.default_rng(seed))
    assert np.array_equal(wk, wk.T)
    assert np.all(np.abs(wk.sum(axis=1) - 1.0) <= 1e-12)
    assert np.all(wk >= 0)
    assert np.linalg.eigvalsh(wk)[0] >= lam_base - 1e-10
    # support only shrinks
    assert np.all((wk > 0) <= (w > 0))


def test_sampling_consumes_one_draw_per_edge(path3):
    _, w = path3
    a, b = np.random.default_rng(5), np.random.default_rng(5)
    sample_network(w, 0.5, a)
    b.random(2)
    assert a.random() == b.random()


def test_expected_weight_matrix_examples(path3):
    _, w = path3
    np.testing.assert_array_equal(expected_weight_matrix(w, 1.0), w)
    np.testing.assert_array_equal(expected_weight_matrix(w, 0.0), np.eye(3))
    np.testing.assert_allclose(expected_weight_matrix(w, 0.5),
                               [[0.875, 0.125, 0], [0.125, 0.75, 0.125], [0, 0.125, 0.875]], atol=1e-15)


def test_expected_matches_monte_carlo(path3):
    _, w = path3
    p, n = 0.5, 100_000
    rng = np.random.default_rng(42)
    iu, ju = canonical_edges(w)
    acc = np.zeros_like(w)
    for _ in range(n):
        acc += sample_network(w, p, rng, (iu, ju))
    tol = 4.0 * math.sqrt(p * (1 - p) / n)
    assert np.all(np.abs(acc / n - expected_weight_matrix(w, p)) <= tol)


def test_expected_spectrum_shift():
    g, _ = connected_geometric_graph(15, 1.5, 3)
    w = metropolis_weights(g)
    for p in (0.1, 0.5, 0.9):
        lam = np.linalg.eigvalsh(w)
        lam_bar = np.linalg.eigvalsh(expected_weight_matrix(w, p))
        np.testing.assert_allclose(lam_bar, p * lam + (1 - p), atol=1e-12)
        # off the consensus direction everything stays below one
        assert np.sort(lam_bar)[-2] < 1.0


def test_edge_list_roundtrip(tmp_path, path3):
    g, w = path3
    f = tmp_path / "g.txt"
    write_edge_list(f, g, w)
    g2, w2 = read_edge_list(f)
    assert g2 == g
    np.testing.assert_array_equal(w2, w)
    write_edge_list(f, g)
    _, w3 = read_edge_list(f)
    np.testing.assert_array_equal(w3, metropolis_weights(g))


def test_edge_list_errors(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("0 1\n")
    with pytest.raises(ValueError, match="header"):
        read_edge_list(f)
    f.write_text("m=3\n0 1 2 3\n")
    with pytest.raises(ValueError, match="line 2"):
        read_edge_list(f)
