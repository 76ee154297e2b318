import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trifaststmf.tropical import (
    NEG_INF,
    POS_INF,
    MaskedMatrix,
    b_norm,
    greatest_subsolution_left,
    greatest_subsolution_right,
    greatest_subsolution_sandwich,
    matrix_leq,
    maxplus_matmul,
    minplus_matmul,
    neg_transpose,
    read_matrix_csv,
    trop_add,
    trop_mul,
    tropical_identity,
    write_matrix_csv,
)

trop_values = st.one_of(st.just(NEG_INF), st.integers(-50, 50).map(float))


def naive_maxplus(A, B):
    A, B = np.asarray(A, float), np.asarray(B, float)
    out = np.full((A.shape[0], B.shape[1]), NEG_INF)
    for i in range(A.shape[0]):
        for j in range(B.shape[1]):
            for k in range(A.shape[1]):
                out[i, j] = trop_add(out[i, j], trop_mul(A[i, k], B[k, j]))
    return out


class TestScalars:
    @pytest.mark.parametrize("a,b,want", [(2, 3, 3), (NEG_INF, 4, 4), (-5, -7, -5)])
    def test_add(self, a, b, want):
        assert trop_add(a, b) == want

    @pytest.mark.parametrize("a,b,want", [(1, 1, 2), (NEG_INF, 7, NEG_INF), (-2, 5, 3)])
    def test_mul(self, a, b, want):
        assert trop_mul(a, b) == want

    @given(trop_values, trop_values, trop_values)
    def test_semiring_laws(self, a, b, c):
        assert trop_add(a, trop_add(b, c)) == trop_add(trop_add(a, b), c)
        assert trop_add(a, b) == trop_add(b, a)
        assert trop_add(a, a) == a
        assert trop_mul(a, trop_mul(b, c)) == trop_mul(trop_mul(a, b), c)
        assert trop_mul(a, trop_add(b, c)) == trop_add(trop_mul(a, b), trop_mul(a, c))
        assert trop_add(a, NEG_INF) == a
        assert trop_mul(a, 0.0) == a


class TestProducts:
    def test_maxplus_examples(self):
        A = [[0, 1], [2, 3]]
        np.testing.assert_array_equal(maxplus_matmul(A, [[0], [1]]), [[2], [4]])
        np.testing.assert_array_equal(maxplus_matmul([[5]], [[-2]]), [[3]])

    def test_minplus_examples(self):
        np.testing.assert_array_equal(minplus_matmul([[0, 1], [2, 3]], [[0], [1]]), [[0], [2]])
        np.testing.assert_array_equal(minplus_matmul([[0, 5], [5, 0]], [[0], [0]]), [[0], [0]])

    def test_identities(self):
        A = np.array([[1.0, -2.0, NEG_INF], [0.5, 3.0, 4.0]])
        np.testing.assert_array_equal(maxplus_matmul(A, tropical_identity(3)), A)
        np.testing.assert_array_equal(maxplus_matmul(tropical_identity(2), A), A)
        eye_star = -tropical_identity(3)
        B = A[:, :2].T.copy()
        np.testing.assert_array_equal(minplus_matmul(B, eye_star[:2, :2]), B)

    def test_neg_inf_absorbs_against_pos_inf(self):
        out = maxplus_matmul([[NEG_INF]], [[POS_INF]])
        assert out[0, 0] == NEG_INF
        assert minplus_matmul([[POS_INF]], [[NEG_INF]])[0, 0] == POS_INF

    def test_masked_minplus_skips_entries(self):
        C = MaskedMatrix([[1.0, 100.0], [5.0, 7.0]], [[True, False], [True, True]])
        out = minplus_matmul([[0.0, 0.0]], C)
        np.testing.assert_array_equal(out, [[1.0, 7.0]])
        empty = MaskedMatrix([[1.0]], [[False]])
        assert minplus_matmul([[0.0]], empty)[0, 0] == POS_INF

    def test_rejects_masked_maxplus_operand(self):
        with pytest.raises(ValueError):
            maxplus_matmul(MaskedMatrix([[1.0]], [[False]]), [[1.0]])

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            maxplus_matmul(np.zeros((2, 3)), np.zeros((2, 3)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_matches_naive_and_associative(self, seed):
        rng = np.random.default_rng(seed)
        m, p, q, n = rng.integers(1, 5, size=4)
        A, B, C = (rng.integers(-9, 10, s).astype(float) for s in ((m, p), (p, q), (q, n)))
        A[rng.random(A.shape) < 0.2] = NEG_INF
        np.testing.assert_array_equal(maxplus_matmul(A, B), naive_maxplus(A, B))
        np.testing.assert_array_equal(
            maxplus_matmul(maxplus_matmul(A, B), C), maxplus_matmul(A, maxplus_matmul(B, C))
        )


class TestOrderAndNorms:
    def test_neg_transpose(self):
        np.testing.assert_array_equal(neg_transpose([[1, 2]]), [[-1], [-2]])
        np.testing.assert_array_equal(neg_transpose([[0]]), [[0]])
        A = np.array([[1.0, NEG_INF], [3.0, 4.0]])
        np.testing.assert_array_equal(neg_transpose(neg_transpose(A)), A)
        assert neg_transpose([[NEG_INF]])[0, 0] == POS_INF

    def test_matrix_leq(self):
        assert matrix_leq([[1, 2]], [[1, 2]])
        assert not matrix_leq([[0, 1]], [[0, 0]])
        assert matrix_leq([[-1]], [[0]])
        masked = MaskedMatrix([[0.0, -5.0]], [[True, False]])
        assert matrix_leq([[0, 1]], masked)

    def test_b_norm(self):
        W = np.array([[1.0, -2.0], [0.0, 3.0]])
        assert b_norm(W, np.zeros((2, 2))) == 6
        assert b_norm(W) == 6
        assert b_norm(W, W) == 0
        half = MaskedMatrix(W, [[True, True], [False, False]])
        assert b_norm(half, np.zeros((2, 2))) == 3
        assert b_norm([[NEG_INF]], [[NEG_INF]]) == 0


def brute_left(A, C, lo=-20, hi=20):
    """Entrywise largest feasible integer X for A ⊗ X ⪯ C.

    Every constraint A_ik + X_kj <= C_ij bounds one entry from above only, so
    the feasible set is a box and each entry can be searched on its own.
    """
    n, p = A.shape[1], C.shape[1]
    X = np.full((n, p), float(lo))
    for k, j in itertools.product(range(n), range(p)):
        best = None
        for v in range(lo, hi + 1):
            Xt = X.copy()
            Xt[k, j] = v
            if matrix_leq(naive_maxplus(A, Xt), C):
                best = v
        X[k, j] = best
    return X


class TestSubsolutions:
    def test_left_examples(self):
        C = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(greatest_subsolution_left(tropical_identity(2), C), C)
        x = greatest_subsolution_left([[0.0], [0.0]], [[1.0], [2.0]])
        np.testing.assert_array_equal(x, [[1.0]])
        assert not matrix_leq(maxplus_matmul([[0.0], [0.0]], x + 1e-9), [[1.0], [2.0]])

    def test_right_examples(self):
        C = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(greatest_subsolution_right(tropical_identity(2), C), C)
        z = greatest_subsolution_right([[0.0, 0.0]], [[1.0, 2.0]])
        np.testing.assert_array_equal(z, [[1.0]])

    def test_sandwich_examples(self):
        C = np.array([[1.0, 2.0], [3.0, 4.0]])
        eye = tropical_identity(2)
        np.testing.assert_array_equal(greatest_subsolution_sandwich(eye, eye, C), C)
        X = greatest_subsolution_sandwich([[0.0, 0.0]], [[0.0]], [[4.0]])
        np.testing.assert_array_equal(X, [[4.0], [4.0]])
        np.testing.assert_array_equal(
            maxplus_matmul(maxplus_matmul([[0.0, 0.0]], X), [[0.0]]), [[4.0]]
        )

    def test_unconstrained_entries_are_pos_inf(self):
        C = MaskedMatrix([[1.0, 2.0]], [[True, False]])
        X = greatest_subsolution_left([[0.0]], C)
        assert X[0, 0] == 1.0 and X[0, 1] == POS_INF

    @pytest.mark.parametrize("seed", range(40))
    def test_left_matches_brute_force(self, seed):
        rng = np.random.default_rng(seed)
        m, n, p = rng.integers(1, 4, size=3)
        A = rng.integers(-5, 6, (m, n)).astype(float)
        C = rng.integers(-5, 6, (m, p)).astype(float)
        np.testing.assert_array_equal(greatest_subsolution_left(A, C), brute_left(A, C))

    @pytest.mark.parametrize("seed", range(20))
    def test_right_is_left_transposed(self, seed):
        rng = np.random.default_rng(seed)
        B = rng.integers(-5, 6, (3, 2)).astype(float)
        C = rng.integers(-5, 6, (4, 2)).astype(float)
        np.testing.assert_array_equal(
            greatest_subsolution_right(B, C), greatest_subsolution_left(B.T, C.T).T
        )

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_feasible_and_maximal(self, seed):
        rng = np.random.default_rng(seed)
        m, n, p, q = rng.integers(1, 5, size=4)
        A = rng.integers(-5, 6, (m, n)).astype(float)
        B = rng.integers(-5, 6, (p, q)).astype(float)
        C = rng.integers(-5, 6, (m, q)).astype(float)
        X = greatest_subsolution_sandwich(A, B, C)
        assert matrix_leq(maxplus_matmul(maxplus_matmul(A, X), B), C)
        # raising any single entry breaks feasibility
        k, j = rng.integers(n), rng.integers(p)
        X2 = X.copy()
        X2[k, j] += 0.5
        assert not matrix_leq(maxplus_matmul(maxplus_matmul(A, X2), B), C)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_antitone_in_a(self, seed):
        rng = np.random.default_rng(seed)
        A = rng.integers(-5, 6, (3, 2)).astype(float)
        C = rng.integers(-5, 6, (3, 2)).astype(float)
        A_big = A + rng.integers(0, 3, A.shape)
        assert matrix_leq(greatest_subsolution_left(A_big, C), greatest_subsolution_left(A, C))

    def test_mixed_product_counterexample(self):
        A = np.array([[0.0, 0.0]])
        B = np.array([[0.0, 5.0], [5.0, 0.0]])
        C = np.array([[0.0], [0.0]])
        lhs = minplus_matmul(maxplus_matmul(A, B), C)
        rhs = maxplus_matmul(A, minplus_matmul(B, C))
        np.testing.assert_array_equal(lhs, [[5.0]])
        np.testing.assert_array_equal(rhs, [[0.0]])


class TestCsv:
    def test_round_trip(self, tmp_path):
        data = np.array([[1.5, NEG_INF, 0.1 + 0.2], [np.nan, -3.0, POS_INF]])
        M = MaskedMatrix.from_nan(data)
        write_matrix_csv(tmp_path / "m.csv", M)
        back = read_matrix_csv(tmp_path / "m.csv")
        assert back == M
        np.testing.assert_array_equal(back.observed, M.observed)
        assert back.data[0, 2] == 0.1 + 0.2
        assert (tmp_path / "m.csv").read_text().splitlines()[1].startswith(",")

    def test_rejects_ragged(self, tmp_path):
        (tmp_path / "r.csv").write_text("1,2\n3\n")
        with pytest.raises(ValueError):
            read_matrix_csv(tmp_path / "r.csv")


class TestMaskedMatrix:
    def test_equality_ignores_unobserved_values(self):
        a = MaskedMatrix([[1.0, 2.0]], [[True, False]])
        b = MaskedMatrix([[1.0, 99.0]], [[True, False]])
        assert a == b

    def test_read_only(self):
        a = MaskedMatrix.full([[1.0]])
        with pytest.raises(ValueError):
            a.data[0, 0] = 2.0

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            MaskedMatrix(np.zeros((2, 2)), np.ones((2, 3), bool))
        assert math.isnan(MaskedMatrix([[1.0]], [[False]]).with_nan()[0, 0])
