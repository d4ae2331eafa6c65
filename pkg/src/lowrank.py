"""
Factored rank-r matrices over the Hankel lift.

Provides:
- FactoredRankR / TangentSpace value types
- the tangent-space projection (dense oracle)
- the QR-accelerated rank-r truncation of P_T H(w) (never forms H(w))
- a PROPACK Lanczos truncated SVD driven only by FFT products
- the incoherence diagnostic
"""

import logging
import re
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sp_linalg
from scipy.linalg import LinAlgError
from scipy.sparse.linalg import svds

from src.errors import InvalidSizeError, LanczosConvergenceError, ShapeMismatchError
from src.hankel_core import HankelOperator, HankelShape, as_signal, hankel_shape


# ================================
# CONFIGURATION CONSTANTS
# ================================

LANCZOS_TOL = 1e-10
LANCZOS_MIN_STEPS = 100       # cap is max(10 r, LANCZOS_MIN_STEPS)
LANCZOS_SEED = 20200707       # start vector and block draws
RANGE_OVERSAMPLE = 10         # extra columns for the rank-deficient fallback


# ================================
# VALUE TYPES
# ================================

@dataclass(frozen=True, eq=False)
class FactoredRankR:
    """
    L = U diag(sigma) V* with orthonormal U (n1 x r), V (n2 x r) and
    non-increasing sigma >= 0. Trailing zero singular values are kept.
    """
    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        r = self.sigma.shape[0]
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[1] != r or self.V.shape[1] != r:
            raise ShapeMismatchError(
                f"Inconsistent factors: U {self.U.shape}, sigma {self.sigma.shape}, V {self.V.shape}"
            )

    @property
    def rank(self) -> int:
        return int(self.sigma.shape[0])

    @property
    def dims(self):
        return (self.U.shape[0], self.V.shape[0])

    @property
    def sigma1(self) -> float:
        return float(self.sigma[0]) if self.rank else 0.0

    @property
    def hankel(self) -> HankelShape:
        n1, n2 = self.dims
        return hankel_shape(n1 + n2 - 1)

    def to_dense(self) -> np.ndarray:
        """U Σ V*; test helper only."""
        return (self.U * self.sigma) @ self.V.conj().T

    def orthonormality_error(self) -> float:
        """max(||U*U - I||_F, ||V*V - I||_F)."""
        eye = np.eye(self.rank)
        return max(
            float(np.linalg.norm(self.U.conj().T @ self.U - eye)),
            float(np.linalg.norm(self.V.conj().T @ self.V - eye)),
        )

    @classmethod
    def zeros(cls, n1: int, n2: int, r: int) -> "FactoredRankR":
        """Zero matrix with canonical-basis factors."""
        return cls(
            U=np.eye(n1, r, dtype=np.complex128),
            sigma=np.zeros(r),
            V=np.eye(n2, r, dtype=np.complex128),
        )


@dataclass(frozen=True, eq=False)
class TangentSpace:
    """Column/row spaces (U, V) of a rank-r iterate; references, not copies."""
    U: np.ndarray
    V: np.ndarray

    @classmethod
    def at(cls, L: FactoredRankR) -> "TangentSpace":
        return cls(U=L.U, V=L.V)


# ================================
# TANGENT SPACE PROJECTION
# ================================

def tangent_project_dense(T: TangentSpace, M) -> np.ndarray:
    """
    P_T M = U U* M + M V V* - U U* M V V* on a dense matrix (test oracle).

    Raises:
        ShapeMismatchError: If M is not n1 x n2.
    """
    M = np.asarray(M, dtype=np.complex128)
    if M.shape != (T.U.shape[0], T.V.shape[0]):
        raise ShapeMismatchError(f"Matrix {M.shape} does not match tangent space {(T.U.shape[0], T.V.shape[0])}")
    UhM = T.U.conj().T @ M
    MV = M @ T.V
    return T.U @ UhM + MV @ T.V.conj().T - T.U @ (UhM @ T.V) @ T.V.conj().T


def truncate_dense(M, r: int) -> FactoredRankR:
    """D_r M through a dense SVD (test oracle)."""
    Um, s, Vmh = sp_linalg.svd(np.asarray(M, dtype=np.complex128), full_matrices=False)
    return FactoredRankR(U=Um[:, :r], sigma=s[:r], V=Vmh[:r].conj().T)


# ================================
# ACCELERATED RANK-r STEP
# ================================

def accelerated_rank_r(
    L_prev: FactoredRankR,
    w,
    r: int,
    operator: Optional[HankelOperator] = None,
) -> FactoredRankR:
    """
    Rank-r truncated SVD of P_T H(w), with T the tangent space at L_prev.

    Two FFT block products, two thin QRs and one 2r x 2r SVD:
        C = H(w) V,  D = H(w)* U
        (I - V V*) D = Q1 R1,  (I - U U*) C = Q2 R2
        M = [[U* C, R1*], [R2, 0]] = U_M Σ_M V_M*
        L = ([U Q2] U_M[:, :r]) Σ_M[:r] ([V Q1] V_M[:, :r])*

    Args:
        L_prev: Current iterate defining the tangent space.
        w: Signal whose Hankel lift is projected (z - s_{k+1}).
        r: Target rank.
        operator: Prebuilt HankelOperator for w (optional).

    Returns:
        FactoredRankR of rank r; rank-deficient inputs give trailing zeros.
    """
    w = as_signal(w, "w")
    op = operator or HankelOperator(w)
    if op.dims != L_prev.dims:
        raise ShapeMismatchError(f"Iterate dims {L_prev.dims} do not match Hankel dims {op.dims}")
    if not 1 <= r <= 2 * L_prev.rank:
        raise InvalidSizeError(f"Target rank {r} outside [1, {2 * L_prev.rank}]")

    U, V = L_prev.U, L_prev.V
    C = op.matmat(V)
    D = op.rmatmat(U)

    UhC = U.conj().T @ C
    C_perp = C - U @ UhC
    C_perp -= U @ (U.conj().T @ C_perp)
    D_perp = D - V @ (V.conj().T @ D)
    D_perp -= V @ (V.conj().T @ D_perp)

    Q1, R1 = sp_linalg.qr(D_perp, mode="economic")
    Q2, R2 = sp_linalg.qr(C_perp, mode="economic")

    k = L_prev.rank
    M = np.zeros((2 * k, 2 * k), dtype=np.complex128)
    M[:k, :k] = UhC
    M[:k, k:] = R1.conj().T
    M[k:, :k] = R2

    Um, s, Vmh = sp_linalg.svd(M)
    U_new = np.hstack([U, Q2]) @ Um[:, :r]
    V_new = np.hstack([V, Q1]) @ Vmh[:r].conj().T
    return FactoredRankR(U=U_new, sigma=s[:r], V=V_new)


# ================================
# LANCZOS TRUNCATED SVD
# ================================

def _range_svd(op: HankelOperator, r: int, block: int, rng: np.random.Generator) -> FactoredRankR:
    """
    Rank-r SVD of H(w) restricted to the range of H(w) Omega, Omega Gaussian with
    ``block`` columns. Exact when block >= rank(H(w)), in particular for block = n1.
    """
    n1, n2 = op.dims
    omega = rng.standard_normal((n2, block)) + 1j * rng.standard_normal((n2, block))
    Q, _ = sp_linalg.qr(op.matmat(omega), mode="economic")
    B = op.rmatmat(Q).conj().T
    Ub, s, Vbh = sp_linalg.svd(B, full_matrices=False)
    return FactoredRankR(U=Q @ Ub[:, :r], sigma=s[:r].copy(), V=Vbh[:r].conj().T)


def truncated_svd_hankel(
    w,
    r: int,
    tol: float = LANCZOS_TOL,
    max_steps: Optional[int] = None,
    operator: Optional[HankelOperator] = None,
) -> FactoredRankR:
    """
    Rank-r truncated SVD of H(w) by PROPACK Lanczos bidiagonalization.

    The matrix is only touched through FFT products (``as_linear_operator``).
    When the step cap covers the whole left space the lift is decomposed
    exactly from one block product. When H(w) has rank below r, PROPACK stops
    on an invariant subspace and the missing triplets come back with zero
    singular values.

    Args:
        w: Signal to lift.
        r: Number of triplets, 1 <= r <= min(n1, n2).
        tol: Relative accuracy handed to PROPACK.
        max_steps: Krylov dimension cap (default max(10 r, 100)).
        operator: Prebuilt HankelOperator for w (optional).

    Returns:
        FactoredRankR with the leading r triplets.

    Raises:
        InvalidSizeError: If r is out of range.
        LanczosConvergenceError: If the cap is hit; ``best`` holds a block
            approximation built with the same number of products.
    """
    w = as_signal(w, "w")
    op = operator or HankelOperator(w)
    n1, n2 = op.dims
    kmax = min(n1, n2)
    if not 1 <= r <= kmax:
        raise InvalidSizeError(f"Rank r={r} must satisfy 1 <= r <= {kmax}")

    if not np.any(w):
        return FactoredRankR.zeros(n1, n2, r)

    cap = min(max_steps or max(10 * r, LANCZOS_MIN_STEPS), kmax)
    cap = max(cap, r)
    rng = np.random.default_rng(LANCZOS_SEED)
    if cap == kmax:
        return _range_svd(op, r, kmax, rng)

    v0 = rng.standard_normal(n1) + 1j * rng.standard_normal(n1)
    try:
        u, s, vh = svds(op.as_linear_operator(), k=r, tol=tol, maxiter=cap, v0=v0,
                        solver="propack", rng=rng)
    except LinAlgError as e:
        if "invariant subspace" in str(e):
            found = re.search(r"dimension (\d+)", str(e))
            dim = int(found.group(1)) if found else r
            logging.debug(f"Lanczos found an invariant subspace of dimension {dim} (r={r})")
            return _range_svd(op, r, min(max(dim, r) + RANGE_OVERSAMPLE, kmax), rng)
        raise LanczosConvergenceError(
            f"Lanczos did not reach tol={tol:g} for r={r} in {cap} steps",
            best=_range_svd(op, r, cap, rng),
        ) from e

    # svds hands PROPACK's triplets back in ascending order
    logging.debug(f"Lanczos converged (r={r}, cap={cap})")
    return FactoredRankR(
        U=np.ascontiguousarray(u[:, ::-1]),
        sigma=np.ascontiguousarray(s[::-1]),
        V=np.ascontiguousarray(vh[::-1].conj().T),
    )


def leading_singular_value(w, operator: Optional[HankelOperator] = None) -> float:
    """sigma_1(H(w)) from a one-triplet Lanczos run."""
    try:
        return truncated_svd_hankel(w, 1, operator=operator).sigma1
    except LanczosConvergenceError as e:
        logging.warning(f"sigma_1 estimate did not fully converge: {e}")
        return e.best.sigma1


# ================================
# DIAGNOSTICS
# ================================

def incoherence(L: FactoredRankR) -> float:
    """
    Empirical incoherence mu = n / (c_s r) * max(||U||_{2,inf}^2, ||V||_{2,inf}^2).
    """
    shape = L.hankel
    r = L.rank
    row_u = np.max(np.sum(np.abs(L.U) ** 2, axis=1))
    row_v = np.max(np.sum(np.abs(L.V) ** 2, axis=1))
    return float(shape.n / (shape.c_s * r) * max(row_u, row_v))
