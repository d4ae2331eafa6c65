"""
Structured Hankel operators for spectrally sparse signals.

This module provides the lifting H (vector -> nearly square Hankel matrix), its
left inverse H† (antidiagonal averaging) and FFT-based applications of H, H*
and H† that never form the n1 x n2 matrix. The dense versions are kept as
reference oracles for the fast paths.

Indexing is 0-based: entry (a, b) of H(x) is x[a + b].
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy import fft as sp_fft
from scipy import linalg as sp_linalg
from scipy.sparse.linalg import LinearOperator

from src.errors import InvalidInputError, InvalidSizeError, ShapeMismatchError


ComplexSignal = npt.NDArray[np.complex128]


# ================================
# CONFIGURATION CONSTANTS
# ================================

# Dense oracles allocate n1*n2 entries; refuse beyond this length.
DENSE_ORACLE_MAX_N = 4096


# ================================
# SIGNALS AND SHAPES
# ================================

def as_signal(x, name: str = "signal") -> ComplexSignal:
    """
    Validate and convert a sequence of samples into a ComplexSignal.

    Args:
        x: Any 1-D array-like of real or complex numbers.
        name: Label used in error messages.

    Returns:
        A contiguous complex128 copy-free view when possible.

    Raises:
        InvalidSizeError: If the input is empty or not one-dimensional.
        InvalidInputError: If any entry is NaN or infinite.
    """
    arr = np.ascontiguousarray(x, dtype=np.complex128)
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidSizeError(f"{name} must be a non-empty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains NaN or Inf entries")
    return arr


@dataclass(frozen=True)
class HankelShape:
    """
    Dimensions of the nearly square Hankel lift of a length-n signal.

    rho[t] is the number of cells on antidiagonal t (the weights of H†).
    """
    n: int
    n1: int
    n2: int
    rho: np.ndarray = field(repr=False, compare=False)

    @property
    def nfft(self) -> int:
        """Transform length: next power of two >= n."""
        return 1 << max(self.n - 1, 0).bit_length()

    @property
    def c_s(self) -> float:
        """Shape factor max(n/n1, n/n2)."""
        return max(self.n / self.n1, self.n / self.n2)

    def to_dict(self) -> dict:
        return {"n": self.n, "n1": self.n1, "n2": self.n2}


def hankel_shape(n: int) -> HankelShape:
    """
    Build the HankelShape for a signal of length n.

    n odd gives n1 = n2 = (n+1)/2, n even gives n1 = n/2 and n2 = n/2 + 1.

    Raises:
        InvalidSizeError: If n < 1.
    """
    n = int(n)
    if n < 1:
        raise InvalidSizeError(f"Signal length must be >= 1, got {n}")
    if n % 2 == 1:
        n1 = n2 = (n + 1) // 2
    else:
        n1, n2 = n // 2, n // 2 + 1
    t = np.arange(n)
    rho = np.minimum.reduce([t + 1, np.full(n, n1), np.full(n, n2), n - t])
    return HankelShape(n=n, n1=n1, n2=n2, rho=rho.astype(np.int64))


def _shape_from_matrix(n1: int, n2: int) -> HankelShape:
    if abs(n1 - n2) > 1 or n1 < 1 or n2 < 1:
        raise ShapeMismatchError(f"Matrix of shape ({n1}, {n2}) is not a nearly square Hankel shape")
    n = n1 + n2 - 1
    t = np.arange(n)
    rho = np.minimum.reduce([t + 1, np.full(n, n1), np.full(n, n2), n - t])
    return HankelShape(n=n, n1=n1, n2=n2, rho=rho.astype(np.int64))


# ================================
# DENSE ORACLES
# ================================

def hankel_dense(x) -> np.ndarray:
    """
    Materialize H(x) as an n1 x n2 complex matrix.

    Only meant as a test oracle; gated to n <= DENSE_ORACLE_MAX_N.
    """
    x = as_signal(x)
    shape = hankel_shape(x.size)
    if shape.n > DENSE_ORACLE_MAX_N:
        raise InvalidSizeError(f"Dense Hankel oracle is limited to n <= {DENSE_ORACLE_MAX_N}")
    return sp_linalg.hankel(x[:shape.n1], x[shape.n1 - 1:])


def hankel_pinv_dense(M) -> ComplexSignal:
    """
    Apply H† to a dense matrix: entry t is the mean of antidiagonal t.

    Raises:
        ShapeMismatchError: If |n1 - n2| > 1.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.ndim != 2:
        raise ShapeMismatchError(f"Expected a matrix, got shape {M.shape}")
    shape = _shape_from_matrix(*M.shape)
    ia, ib = np.indices(M.shape)
    idx = (ia + ib).ravel()
    flat = M.ravel()
    real = np.bincount(idx, weights=flat.real, minlength=shape.n)
    imag = np.bincount(idx, weights=flat.imag, minlength=shape.n)
    return (real + 1j * imag) / shape.rho


# ================================
# FAST OPERATORS
# ================================

class HankelOperator:
    """
    Implicit H(x) backed by FFT convolutions.

    The transform of x is computed once per operator, so repeated products
    against the same signal (Lanczos sweeps, the two products of an
    accelerated step) only pay for the transform of the right-hand side.
    """

    def __init__(self, x, shape: Optional[HankelShape] = None):
        self.x = as_signal(x)
        self.shape = shape or hankel_shape(self.x.size)
        if self.shape.n != self.x.size:
            raise ShapeMismatchError(f"Shape n={self.shape.n} does not match signal length {self.x.size}")
        self._nfft = self.shape.nfft
        self._xf = sp_fft.fft(self.x, self._nfft)

    @property
    def dims(self):
        return (self.shape.n1, self.shape.n2)

    def matmat(self, V: np.ndarray) -> np.ndarray:
        """H(x) @ V for V of shape (n2,) or (n2, k)."""
        V = np.asarray(V, dtype=np.complex128)
        if V.shape[0] != self.shape.n2:
            raise ShapeMismatchError(f"Right operand has {V.shape[0]} rows, expected n2={self.shape.n2}")
        n1, n2 = self.dims
        # result_i = sum_j x[i+j] v[j] = conv(x, v reversed)[i + n2 - 1]
        vf = sp_fft.fft(V[::-1], self._nfft, axis=0)
        xf = self._xf if V.ndim == 1 else self._xf[:, None]
        out = sp_fft.ifft(xf * vf, axis=0)
        return out[n2 - 1:n2 - 1 + n1]

    def rmatmat(self, U: np.ndarray) -> np.ndarray:
        """H(x)* @ U for U of shape (n1,) or (n1, k)."""
        U = np.asarray(U, dtype=np.complex128)
        if U.shape[0] != self.shape.n1:
            raise ShapeMismatchError(f"Right operand has {U.shape[0]} rows, expected n1={self.shape.n1}")
        n1, n2 = self.dims
        uf = sp_fft.fft(np.conj(U[::-1]), self._nfft, axis=0)
        xf = self._xf if U.ndim == 1 else self._xf[:, None]
        out = sp_fft.ifft(xf * uf, axis=0)
        return np.conj(out[n1 - 1:n1 - 1 + n2])

    def as_linear_operator(self) -> LinearOperator:
        """Expose the operator through SciPy's LinearOperator protocol."""
        return LinearOperator(
            shape=self.dims,
            matvec=self.matmat,
            rmatvec=self.rmatmat,
            matmat=self.matmat,
            rmatmat=self.rmatmat,
            dtype=np.complex128,
        )


def hankel_matvec(x, v) -> np.ndarray:
    """
    Compute H(x) v without forming H(x).

    Raises:
        ShapeMismatchError: If len(v) != n2.
    """
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1:
        raise ShapeMismatchError(f"Expected a vector, got shape {v.shape}")
    return HankelOperator(x).matmat(v)


def hankel_adjoint_matvec(x, u) -> np.ndarray:
    """
    Compute H(x)* u (conjugate transpose action) without forming H(x).

    Raises:
        ShapeMismatchError: If len(u) != n1.
    """
    u = np.asarray(u, dtype=np.complex128)
    if u.ndim != 1:
        raise ShapeMismatchError(f"Expected a vector, got shape {u.shape}")
    return HankelOperator(x).rmatmat(u)


def hankel_pinv_factors(U: np.ndarray, sigma: np.ndarray, V: np.ndarray) -> ComplexSignal:
    """
    H†(U diag(sigma) V*) as a sum of rank-one FFT convolutions.

    The r products are accumulated in the frequency domain so only one
    inverse transform is needed.
    """
    U = np.asarray(U, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    sigma = np.asarray(sigma, dtype=np.float64)
    if U.ndim != 2 or V.ndim != 2 or U.shape[1] != V.shape[1] or sigma.shape != (U.shape[1],):
        raise ShapeMismatchError(
            f"Inconsistent factors: U {U.shape}, sigma {sigma.shape}, V {V.shape}"
        )
    shape = _shape_from_matrix(U.shape[0], V.shape[0])
    if U.shape[1] == 0:
        return np.zeros(shape.n, dtype=np.complex128)
    nfft = shape.nfft
    uf = sp_fft.fft(U * sigma, nfft, axis=0)
    vf = sp_fft.fft(np.conj(V), nfft, axis=0)
    summed = sp_fft.ifft(np.sum(uf * vf, axis=1))[:shape.n]
    return summed / shape.rho


def hankel_pinv_factored(L) -> ComplexSignal:
    """
    Apply H† to a FactoredRankR without materializing U Σ V*.

    r = 0 gives the zero signal.
    """
    return hankel_pinv_factors(L.U, L.sigma, L.V)

