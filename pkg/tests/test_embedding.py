"""Similarity algebra: hand-derived values, properties, and oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mufm.embedding import (
    Embedding,
    MaskStatus,
    cosine_similarity,
    global_average_pool,
    l2_normalize,
    similarity_matrix,
)
from mufm.errors import DimensionMismatch, ZeroVector


def naive_gap(fmap):
    """Independent oracle: per-channel mean via explicit loops."""
    h, w, c = fmap.shape
    out = np.zeros(c)
    for ch in range(c):
        total = 0.0
        for i in range(h):
            for j in range(w):
                total += fmap[i, j, ch]
        out[ch] = total / (h * w)
    return out


nonzero_vectors = arrays(
    np.float64,
    st.integers(2, 64),
    elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
).filter(lambda v: np.linalg.norm(v) > 1e-6)


class TestGlobalAveragePool:
    def test_single_position_passthrough(self):
        fmap = np.array([[[1.0, -2.0, 3.5]]])
        np.testing.assert_array_equal(global_average_pool(fmap), [1.0, -2.0, 3.5])

    def test_hand_mean(self):
        fmap = np.array([[1.0, 2.0], [3.0, 4.0]])[:, :, None]
        np.testing.assert_allclose(global_average_pool(fmap), [2.5])

    def test_constant_map(self):
        fmap = np.full((5, 7, 4), 3.25)
        np.testing.assert_allclose(global_average_pool(fmap), [3.25] * 4)

    def test_matches_naive_loop(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            h, w, c = rng.integers(1, 9, size=3)
            fmap = rng.normal(size=(h, w, c))
            np.testing.assert_allclose(
                global_average_pool(fmap), naive_gap(fmap), atol=1e-12, rtol=0
            )

    def test_linearity(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 5, 3))
        y = rng.normal(size=(6, 5, 3))
        lhs = global_average_pool(2.5 * x - 1.5 * y)
        rhs = 2.5 * global_average_pool(x) - 1.5 * global_average_pool(y)
        np.testing.assert_allclose(lhs, rhs, atol=1e-9)

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionMismatch):
            global_average_pool(np.zeros((3, 3)))


class TestL2Normalize:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_already_unit(self):
        np.testing.assert_allclose(l2_normalize([1.0, 0.0, 0.0]), [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            l2_normalize([0.0, 0.0])

    def test_below_tolerance(self):
        with pytest.raises(ZeroVector):
            l2_normalize([1e-13, 0.0])

    @given(nonzero_vectors)
    def test_unit_norm(self, v):
        assert abs(np.linalg.norm(l2_normalize(v)) - 1.0) < 1e-9


class TestCosineSimilarity:
    def test_identical_direction(self):
        assert cosine_similarity([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal_and_opposite(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0
        assert cosine_similarity([1.0, 0.0], [-1.0, 0.0]) == -1.0

    def test_hand_derived_eight_ninths(self):
        # dot = 2+2+4 = 8, norms 3*3 = 9
        assert cosine_similarity([1.0, 2.0, 2.0], [2.0, 1.0, 2.0]) == pytest.approx(8 / 9)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    @given(nonzero_vectors, st.data())
    @settings(max_examples=200)
    def test_symmetry_exact(self, a, data):
        b = data.draw(
            arrays(np.float64, a.shape[0],
                   elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False))
            .filter(lambda v: np.linalg.norm(v) > 1e-6)
        )
        assert cosine_similarity(a, b) == cosine_similarity(b, a)

    @given(nonzero_vectors)
    def test_self_similarity(self, a):
        assert abs(cosine_similarity(a, a) - 1.0) < 1e-9

    @given(nonzero_vectors, st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
    def test_positive_scale_invariance(self, a, alpha, beta):
        b = np.roll(a, 1) + 0.5
        if np.linalg.norm(b) <= 1e-6:
            return
        base = cosine_similarity(a, b)
        scaled = cosine_similarity(alpha * a, beta * b)
        assert abs(base - scaled) < 1e-9

    @given(nonzero_vectors)
    def test_negation_antisymmetry(self, a):
        b = np.roll(a, 1) + 0.25
        if np.linalg.norm(b) <= 1e-6:
            return
        assert abs(cosine_similarity(-a, b) + cosine_similarity(a, b)) < 1e-9

    @given(nonzero_vectors)
    def test_normalization_bridge(self, a):
        b = np.roll(a, 1) - 0.75
        if np.linalg.norm(b) <= 1e-6:
            return
        bridged = float(np.dot(l2_normalize(a), l2_normalize(b)))
        assert abs(cosine_similarity(a, b) - bridged) < 1e-9

    def test_unit_sphere_distance_identity(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            a = l2_normalize(rng.normal(size=16))
            b = l2_normalize(rng.normal(size=16))
            lhs = np.linalg.norm(a - b) ** 2
            rhs = 2.0 - 2.0 * cosine_similarity(a, b)
            assert abs(lhs - rhs) < 1e-9


class TestSimilarityMatrix:
    def test_self_single(self):
        e = Embedding(np.array([1.0, 0.0]), "a")
        np.testing.assert_array_equal(similarity_matrix([e], [e]), [[1.0]])

    def test_orthonormal_identity(self):
        basis = [Embedding(row, f"e{i}") for i, row in enumerate(np.eye(4))]
        np.testing.assert_allclose(similarity_matrix(basis, basis), np.eye(4), atol=1e-12)

    def test_matches_scalar_calls(self):
        rng = np.random.default_rng(3)
        probes = [Embedding(rng.normal(size=8), f"p{i}") for i in range(3)]
        gallery = [Embedding(rng.normal(size=8), f"g{j}") for j in range(4)]
        mat = similarity_matrix(probes, gallery)
        oracle = np.array(
            [[cosine_similarity(p.values, g.values) for g in gallery] for p in probes]
        )
        assert mat.shape == (3, 4)
        np.testing.assert_allclose(mat, oracle, atol=1e-12, rtol=0)

    def test_dimension_mismatch(self):
        a = Embedding(np.ones(4), "a")
        b = Embedding(np.ones(5), "b")
        with pytest.raises(DimensionMismatch):
            similarity_matrix([a], [b])


class TestEmbeddingType:
    def test_defaults(self):
        e = Embedding(np.ones(4), "x")
        assert e.subject is None
        assert e.mask_status is MaskStatus.UNKNOWN
        assert e.dimension == 4

    def test_values_read_only(self):
        e = Embedding(np.ones(4), "x")
        with pytest.raises(ValueError):
            e.values[0] = 2.0

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Embedding(np.array([1.0, np.nan]), "x")

    def test_rejects_empty(self):
        with pytest.raises(DimensionMismatch):
            Embedding(np.array([]), "x")
