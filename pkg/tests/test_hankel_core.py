"""
Tests for src/hankel_core.py - Hankel lift, antidiagonal averaging and FFT products.
"""
import pytest
import numpy as np

from src.errors import InvalidInputError, InvalidSizeError, ShapeMismatchError
from src.hankel_core import (
    HankelOperator,
    as_signal,
    hankel_adjoint_matvec,
    hankel_dense,
    hankel_matvec,
    hankel_pinv_dense,
    hankel_pinv_factored,
    hankel_pinv_factors,
    hankel_shape,
)
from src.lowrank import FactoredRankR, truncate_dense


def _rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestHankelShape:
    """Tests for hankel_shape."""

    def test_odd_length(self):
        """Odd n gives a square lift with symmetric multiplicities."""
        shape = hankel_shape(5)
        assert (shape.n1, shape.n2) == (3, 3)
        assert shape.rho.tolist() == [1, 2, 3, 2, 1]

    def test_even_length(self):
        """Even n gives n1 = n/2, n2 = n/2 + 1."""
        shape = hankel_shape(4)
        assert (shape.n1, shape.n2) == (2, 3)
        assert shape.rho.tolist() == [1, 2, 2, 1]

    def test_single_sample(self):
        """n = 1 is a 1 x 1 lift."""
        shape = hankel_shape(1)
        assert (shape.n1, shape.n2) == (1, 1)
        assert shape.rho.tolist() == [1]

    @pytest.mark.parametrize("n", [2, 15, 64, 257, 1024])
    def test_multiplicities_count_every_cell(self, n):
        """rho sums to n1 * n2 and n = n1 + n2 - 1."""
        shape = hankel_shape(n)
        assert shape.n1 + shape.n2 - 1 == n
        assert shape.rho.sum() == shape.n1 * shape.n2

    def test_zero_length_rejected(self):
        """n = 0 is an invalid size."""
        with pytest.raises(InvalidSizeError):
            hankel_shape(0)

    def test_fft_length_and_shape_factor(self):
        """nfft is the next power of two and c_s is about 2."""
        assert hankel_shape(5).nfft == 8
        assert hankel_shape(8).nfft == 8
        assert hankel_shape(1).nfft == 1
        # 125 is already a fast FFT length; the power of two is still used
        assert hankel_shape(125).nfft == 128
        assert hankel_shape(125).c_s == pytest.approx(125 / 63)


class TestAsSignal:
    """Tests for as_signal validation."""

    def test_rejects_nan(self):
        """NaN samples are invalid input."""
        with pytest.raises(InvalidInputError):
            as_signal([1.0, np.nan])

    def test_rejects_matrix(self):
        """Only 1-D vectors are signals."""
        with pytest.raises(InvalidSizeError):
            as_signal(np.ones((2, 2)))

    def test_real_input_promoted(self):
        """Real data is converted to complex128."""
        assert as_signal([1, 2, 3]).dtype == np.complex128


class TestHankelDense:
    """Tests for hankel_dense."""

    def test_read_off(self):
        """Entry (a, b) equals x[a + b]."""
        H = hankel_dense([1, 2, 3, 4, 5])
        assert np.array_equal(H, np.array([[1, 2, 3], [2, 3, 4], [3, 4, 5]]))

    def test_canonical_basis(self):
        """e_0 lifts to a single 1 in the corner."""
        H = hankel_dense(np.eye(5)[0])
        expected = np.zeros((3, 3))
        expected[0, 0] = 1
        assert np.array_equal(H, expected)

    def test_antidiagonals_constant(self, random_complex):
        """Entry (a, b) equals entry (a+1, b-1)."""
        H = hankel_dense(random_complex(33))
        assert np.array_equal(H[1:, :-1], H[:-1, 1:])


class TestHankelMatvec:
    """Tests for the FFT-based H(x) v and H(x)* u."""

    def test_single_nonzero(self):
        """H(e_0) [1, 1, 1] = [1, 0, 0]."""
        out = hankel_matvec(np.eye(5)[0], np.ones(3))
        assert np.allclose(out, [1, 0, 0], atol=1e-14)

    def test_first_column(self):
        """H(x) e_0 is the first column x[:n1]."""
        out = hankel_matvec([1, 2, 3, 4, 5], [1, 0, 0])
        assert np.allclose(out, [1, 2, 3], atol=1e-13)

    def test_adjoint_single_nonzero(self):
        """H(e_0)* e_0 = e_0."""
        out = hankel_adjoint_matvec(np.eye(5)[0], [1, 0, 0])
        assert np.allclose(out, [1, 0, 0], atol=1e-14)

    def test_adjoint_real_data_is_transpose(self, rng):
        """For real x and u the adjoint is a plain transpose product."""
        x = rng.standard_normal(9)
        u = rng.standard_normal(5)
        assert np.allclose(hankel_adjoint_matvec(x, u), hankel_dense(x).T @ u, atol=1e-12)

    @pytest.mark.parametrize("n", [15, 64, 257, 1024])
    def test_matches_dense_oracle(self, n, random_complex):
        """Fast products agree with the dense matrix to 1e-12 relative."""
        x = random_complex(n)
        shape = hankel_shape(n)
        H = hankel_dense(x)
        for _ in range(5):
            v = random_complex(shape.n2)
            u = random_complex(shape.n1)
            assert _rel(hankel_matvec(x, v), H @ v) <= 1e-12
            assert _rel(hankel_adjoint_matvec(x, u), H.conj().T @ u) <= 1e-12

    def test_block_products(self, random_complex):
        """matmat / rmatmat handle several columns at once."""
        x = random_complex(65)
        op = HankelOperator(x)
        V = random_complex(33, 4)
        U = random_complex(33, 4)
        H = hankel_dense(x)
        assert _rel(op.matmat(V), H @ V) <= 1e-12
        assert _rel(op.rmatmat(U), H.conj().T @ U) <= 1e-12

    def test_linear_operator_interface(self, random_complex):
        """The SciPy LinearOperator view reproduces H(x) products."""
        x = random_complex(40)
        lin = HankelOperator(x).as_linear_operator()
        v = random_complex(21)
        assert lin.shape == (20, 21)
        assert _rel(lin.matvec(v), hankel_dense(x) @ v) <= 1e-12

    def test_dimension_mismatch(self):
        """Wrong vector length raises a shape error."""
        with pytest.raises(ShapeMismatchError):
            hankel_matvec(np.ones(5), np.ones(4))
        with pytest.raises(ShapeMismatchError):
            hankel_adjoint_matvec(np.ones(5), np.ones(2))


class TestHankelPinv:
    """Tests for antidiagonal averaging H†."""

    def test_all_ones(self):
        """Constant antidiagonals average back to ones."""
        assert np.allclose(hankel_pinv_dense(np.ones((3, 3))), np.ones(5))

    def test_left_inverse_dense(self, random_complex):
        """H†(H(x)) = x."""
        x = random_complex(64)
        assert _rel(hankel_pinv_dense(hankel_dense(x)), x) <= 1e-13

    def test_naive_summation(self, random_complex):
        """A random 4 x 5 matrix matches a double-loop average."""
        M = random_complex(4, 5)
        expected = np.zeros(8, dtype=complex)
        count = np.zeros(8)
        for a in range(4):
            for b in range(5):
                expected[a + b] += M[a, b]
                count[a + b] += 1
        assert np.allclose(hankel_pinv_dense(M), expected / count, atol=1e-14)

    def test_non_hankel_shape_rejected(self):
        """|n1 - n2| > 1 is not a lift shape."""
        with pytest.raises(ShapeMismatchError):
            hankel_pinv_dense(np.ones((2, 5)))

    def test_single_cell(self):
        """U = e_0, V = e_0, sigma = 1 gives e_0."""
        L = FactoredRankR(U=np.eye(3, 1, dtype=complex), sigma=np.array([1.0]), V=np.eye(3, 1, dtype=complex))
        assert np.allclose(hankel_pinv_factored(L), [1, 0, 0, 0, 0])

    def test_rank_zero_is_zero_signal(self):
        """An empty factorization averages to zero."""
        out = hankel_pinv_factors(np.zeros((3, 0)), np.zeros(0), np.zeros((3, 0)))
        assert np.array_equal(out, np.zeros(5))

    @pytest.mark.parametrize("n", [15, 64, 257])
    def test_factored_left_inverse(self, n, random_complex):
        """Averaging an exact factorization of H(x) returns x."""
        x = random_complex(n)
        shape = hankel_shape(n)
        L = truncate_dense(hankel_dense(x), min(shape.n1, shape.n2))
        assert _rel(hankel_pinv_factored(L), x) <= 1e-12

    def test_factored_matches_dense(self, random_complex):
        """Random rank-3 factors: FFT path equals the dense average."""
        U = random_complex(33, 3)
        V = random_complex(33, 3)
        sigma = np.array([3.0, 2.0, 0.5])
        dense = (U * sigma) @ V.conj().T
        assert _rel(hankel_pinv_factors(U, sigma, V), hankel_pinv_dense(dense)) <= 1e-12
