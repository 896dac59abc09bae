import numpy as np
import numpy.testing as npt
import pytest

from sppot.graph import (
    FeatureSet,
    SemanticGraph,
    adjacency_accuracy,
    build_knn_graph,
    cosine_similarity,
    gaussian_similarity,
    median_bandwidth,
    pairwise_sq_dists,
)


def features(n=10, d=4, seed=0):
    return FeatureSet(np.random.default_rng(seed).normal(size=(n, d)))


class TestFeatureSet:
    def test_shape_properties(self):
        f = features(7, 3)
        assert (f.n, f.d) == (7, 3)

    def test_rejects_1d(self):
        with pytest.raises(ValueError):
            FeatureSet(np.ones(4))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            FeatureSet(np.array([[1.0, np.nan]]))


class TestKernels:
    def test_pairwise_sq_dists_matches_direct(self):
        f = features(6, 3, seed=1)
        d2 = pairwise_sq_dists(f.vectors)
        direct = np.array([[np.sum((a - b) ** 2) for b in f.vectors] for a in f.vectors])
        npt.assert_allclose(d2, direct, atol=1e-10)
        assert np.all(d2 >= 0)

    def test_median_bandwidth_positive(self):
        assert median_bandwidth(features()) > 0

    def test_median_bandwidth_degenerate_features(self):
        f = FeatureSet(np.zeros((5, 2)))
        assert median_bandwidth(f) == 1.0

    def test_gaussian_symmetric_unit_diag(self):
        f = features(8, 3, seed=2)
        S = gaussian_similarity(f, sigma=1.5)
        npt.assert_allclose(S, S.T, atol=1e-12)
        npt.assert_array_equal(np.diag(S), np.ones(8))
        assert np.all((S > 0) & (S <= 1))

    def test_gaussian_rejects_bad_sigma(self):
        with pytest.raises(ValueError):
            gaussian_similarity(features(), 0.0)

    def test_gaussian_value(self):
        f = FeatureSet(np.array([[0.0], [2.0]]))
        S = gaussian_similarity(f, sigma=1.0)
        npt.assert_allclose(S[0, 1], np.exp(-2.0))

    def test_cosine_known_values(self):
        f = FeatureSet(np.array([[1.0, 0.0], [0.0, 2.0], [-3.0, 0.0]]))
        S = cosine_similarity(f)
        npt.assert_allclose(S[0, 1], 0.0, atol=1e-12)
        npt.assert_allclose(S[0, 2], -1.0, atol=1e-12)

    def test_cosine_rejects_zero_vector(self):
        with pytest.raises(ValueError):
            cosine_similarity(FeatureSet(np.array([[0.0, 0.0], [1.0, 1.0]])))


class TestKnnGraph:
    def test_k_edges_per_row_no_self(self):
        f = features(12, 3, seed=3)
        g = build_knn_graph(gaussian_similarity(f, 1.0), k=4)
        assert g.rows.size == 12 * 4
        for i in range(12):
            cols = g.cols[g.rows == i]
            assert cols.size == 4
            assert i not in cols

    def test_keeps_largest_similarities(self):
        S = np.array(
            [
                [1.0, 0.9, 0.1, 0.5],
                [0.9, 1.0, 0.2, 0.3],
                [0.1, 0.2, 1.0, 0.8],
                [0.5, 0.3, 0.8, 1.0],
            ]
        )
        g = build_knn_graph(S, k=2)
        A = g.to_dense()
        npt.assert_allclose(A[0], [0.0, 0.9, 0.0, 0.5])
        npt.assert_allclose(A[2], [0.0, 0.2, 0.0, 0.8])

    def test_k_capped_at_n_minus_one(self):
        f = features(4, 2, seed=4)
        g = build_knn_graph(gaussian_similarity(f, 1.0), k=10)
        assert g.rows.size == 4 * 3

    def test_negative_survivors_clamped(self):
        S = -np.ones((3, 3))
        g = build_knn_graph(S, k=2)
        assert np.all(g.values == 0.0)

    def test_rejects_bad_k(self):
        with pytest.raises(ValueError):
            build_knn_graph(np.eye(3), k=0)

    def test_dense_roundtrip(self):
        f = features(9, 3, seed=5)
        g = build_knn_graph(gaussian_similarity(f, 1.0), k=3)
        back = SemanticGraph.from_dense(g.to_dense())
        npt.assert_allclose(back.to_dense(), g.to_dense())

    def test_zero_diagonal_dense(self):
        f = features(9, 3, seed=6)
        A = build_knn_graph(gaussian_similarity(f, 1.0), k=3).to_dense()
        npt.assert_array_equal(np.diag(A), np.zeros(9))


class TestAdjacencyAccuracy:
    def test_clustered_features_link_within_class(self):
        rng = np.random.default_rng(7)
        centers = np.array([[10.0, 0.0], [-10.0, 0.0]])
        labels = np.repeat([0, 1], 10)
        X = centers[labels] + rng.normal(scale=0.5, size=(20, 2))
        f = FeatureSet(X)
        g = build_knn_graph(gaussian_similarity(f, median_bandwidth(f)), k=5)
        assert adjacency_accuracy(g, labels) > 0.95

    def test_label_length_checked(self):
        f = features(6, 2, seed=8)
        g = build_knn_graph(gaussian_similarity(f, 1.0), k=2)
        with pytest.raises(ValueError):
            adjacency_accuracy(g, np.zeros(5, dtype=int))
