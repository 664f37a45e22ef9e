"""Graph container, normalization, SBM generator, and split behavior."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssgraph.errors import ConfigError, ShapeError
from ssgraph.evaluate import ProbeConfig, linear_probe
from ssgraph.graphs import (Dataset, generate_sbm, graph_from_arcs, normalize,
                            random_split)

from helpers import dense_adjacency, dense_normalized, random_graph


def arcs_as_set(graph):
    out = set()
    for i in range(graph.num_nodes):
        for j in graph.neighbors(i):
            out.add((i, int(j)))
    return out


class TestGraphConstruction:
    def test_symmetrization_is_forced(self):
        g = graph_from_arcs(3, np.array([0, 1]), np.array([1, 2]))
        assert g.num_nodes == 3
        assert g.num_edges == 4
        assert arcs_as_set(g) == {(0, 1), (1, 0), (1, 2), (2, 1)}

    def test_self_loops_and_duplicates_dropped(self):
        g = graph_from_arcs(3, np.array([1, 0, 1, 0]), np.array([1, 2, 1, 2]))
        assert g.num_edges == 2
        assert arcs_as_set(g) == {(0, 2), (2, 0)}

    def test_out_of_range_endpoint_rejected(self):
        with pytest.raises(ShapeError):
            graph_from_arcs(2, np.array([0]), np.array([5]))

    def test_degrees_and_validate(self):
        g = graph_from_arcs(4, np.array([0, 0, 0]), np.array([1, 2, 3]))
        np.testing.assert_array_equal(g.degrees, [3, 1, 1, 1])
        g.validate()

    @given(st.integers(2, 12), st.floats(0.0, 1.0), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_symmetry_closed_under_transposition(self, n, p, seed):
        g = random_graph(n, p, np.random.default_rng(seed))
        arcs = arcs_as_set(g)
        assert arcs == {(j, i) for i, j in arcs}
        assert not any(i == j for i, j in arcs)


class TestNormalize:
    def test_single_isolated_node_both_kinds(self):
        g = graph_from_arcs(1, np.array([], dtype=int), np.array([], dtype=int))
        for kind in ("symmetric", "row"):
            ng = normalize(g, kind)
            assert ng.weights.shape == (1,)
            np.testing.assert_allclose(ng.weights, [1.0])

    def test_two_nodes_one_edge_symmetric_quarters(self):
        g = graph_from_arcs(2, np.array([0]), np.array([1]))
        ng = normalize(g, "symmetric")
        np.testing.assert_allclose(ng.weights, 0.5)      # four arcs, all 1/2
        assert len(ng.weights) == g.num_edges + 2

    def test_path_row_kind_matches_dense_oracle(self):
        g = graph_from_arcs(3, np.array([0, 1]), np.array([1, 2]))
        ng = normalize(g, "row")
        dense = ng.matrix(np.float64)[0].toarray()
        oracle = dense_normalized(g, "row")
        np.testing.assert_allclose(dense, oracle, atol=1e-15)
        # row 1 touches both ends: each of its three weights is 1/3
        row1 = dense[1]
        np.testing.assert_allclose(row1[row1 > 0], 1.0 / 3.0)
        np.testing.assert_allclose(dense[0][dense[0] > 0], 0.5)

    def test_unknown_kind_rejected(self):
        g = graph_from_arcs(2, np.array([0]), np.array([1]))
        with pytest.raises(ConfigError):
            normalize(g, "spectral")

    @given(st.integers(1, 16), st.floats(0.0, 1.0), st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_row_sums_and_spectral_radius(self, n, p, seed):
        g = random_graph(n, p, np.random.default_rng(seed))
        row = normalize(g, "row").matrix(np.float64)[0].toarray()
        np.testing.assert_allclose(row.sum(axis=1), 1.0, atol=1e-12)
        sym = normalize(g, "symmetric").matrix(np.float64)[0].toarray()
        np.testing.assert_allclose(sym, dense_normalized(g, "symmetric"), atol=1e-12)
        eigs = np.linalg.eigvalsh(sym)
        assert np.abs(eigs).max() <= 1.0 + 1e-9

    def test_matrix_transpose_cached_pair(self):
        g = graph_from_arcs(3, np.array([0, 1]), np.array([1, 2]))
        ng = normalize(g, "row")
        mat, mat_t = ng.matrix(np.float32)
        np.testing.assert_allclose(mat.toarray().T, mat_t.toarray())


class TestSbm:
    def test_disjoint_cliques(self):
        ds = generate_sbm(2, 3, p_in=1.0, p_out=0.0, feature_dim=4, signal=0.5, seed=0)
        assert ds.graph.num_edges == 12           # two 3-cliques, both arcs stored
        assert ds.num_classes == 2
        blocks0 = set(range(3))
        for i in range(3):
            assert set(map(int, ds.graph.neighbors(i))) == blocks0 - {i}

    def test_pure_signal_features_are_separable(self):
        ds = generate_sbm(3, 20, p_in=0.2, p_out=0.02, feature_dim=5, signal=1.0, seed=1,
                          split_fractions=(0.5, 0.2))
        assert len(np.unique(ds.labels[ds.splits.train])) == 3
        result = linear_probe(ds.features, ds.labels, ds.splits, ProbeConfig(mode="grid_full"))
        assert result["test_accuracy"] == 1.0

    def test_edge_count_within_3_sigma_of_binomial_mean(self):
        blocks, npb, p_in, p_out = 4, 100, 0.1, 0.01
        n_in_pairs = blocks * npb * (npb - 1) // 2
        n_out_pairs = (blocks * (blocks - 1) // 2) * npb * npb
        mean = n_in_pairs * p_in + n_out_pairs * p_out
        var = n_in_pairs * p_in * (1 - p_in) + n_out_pairs * p_out * (1 - p_out)
        ds = generate_sbm(blocks, npb, p_in, p_out, feature_dim=8, signal=0.5, seed=0)
        undirected = ds.graph.num_edges / 2
        assert abs(undirected - mean) <= 3.0 * np.sqrt(var)

    def test_deterministic_given_seed(self):
        a = generate_sbm(3, 10, 0.3, 0.05, 6, 0.4, seed=42)
        b = generate_sbm(3, 10, 0.3, 0.05, 6, 0.4, seed=42)
        assert np.array_equal(a.graph.col_indices, b.graph.col_indices)
        assert np.array_equal(a.features, b.features)
        assert np.array_equal(a.splits.train, b.splits.train)

    def test_parameter_validation(self):
        with pytest.raises(ConfigError):
            generate_sbm(2, 5, p_in=1.5, p_out=0.0, feature_dim=4, signal=0.5, seed=0)
        with pytest.raises(ConfigError):
            generate_sbm(4, 5, p_in=0.5, p_out=0.0, feature_dim=2, signal=0.5, seed=0)
        with pytest.raises(ConfigError):
            generate_sbm(2, 5, p_in=0.5, p_out=0.0, feature_dim=4, signal=2.0, seed=0)

    def test_quadratic_generator_refuses_huge_node_counts(self):
        with pytest.raises(ConfigError):
            generate_sbm(4, 10_000, p_in=0.01, p_out=0.001, feature_dim=8,
                         signal=0.5, seed=0)


class TestRandomSplit:
    def test_ten_ten_eighty(self):
        m = random_split(10, (0.1, 0.1), seed=0)
        assert m.train.sum() == 1 and m.val.sum() == 1 and m.test.sum() == 8

    def test_all_train(self):
        m = random_split(5, (1.0, 0.0), seed=3)
        assert m.train.all() and not m.val.any() and not m.test.any()

    def test_seed_determinism_and_variation(self):
        a = random_split(1000, (0.1, 0.1), seed=5)
        b = random_split(1000, (0.1, 0.1), seed=5)
        assert np.array_equal(a.train, b.train) and np.array_equal(a.val, b.val)
        masks = [random_split(1000, (0.1, 0.1), seed=s).train for s in range(20)]
        distinct = {mask.tobytes() for mask in masks}
        assert len(distinct) == 20

    def test_disjointness_enforced(self):
        m = random_split(100, (0.3, 0.3), seed=1)
        m.validate()
        assert not (m.train & m.val).any()

    def test_bad_fractions(self):
        with pytest.raises(ConfigError):
            random_split(10, (0.8, 0.4), seed=0)


class TestDatasetValidation:
    def test_label_and_feature_shape_checks(self):
        ds = generate_sbm(2, 4, 0.5, 0.1, 4, 0.5, seed=0)
        bad = Dataset(graph=ds.graph, features=ds.features[:-1],
                      labels=ds.labels, splits=ds.splits)
        with pytest.raises(ShapeError):
            bad.validate()
