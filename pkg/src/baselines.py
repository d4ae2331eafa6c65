"""
Comparison methods for ASAP.

- SAP with a fixed rank: same initialization, thresholds and stopping rule as
  ASAP, but every iteration recomputes a full Lanczos truncated SVD of
  H(z - s_{k+1}) instead of the tangent-space accelerated truncation.
- Cadzow denoising: alternate rank-r truncation and antidiagonal averaging.
"""

import logging

from src.asap import RecoveryParams, RecoveryResult, alternating_projections
from src.errors import InvalidParamsError, LanczosConvergenceError
from src.hankel_core import ComplexSignal, as_signal, hankel_pinv_factored, hankel_shape
from src.lowrank import FactoredRankR, truncated_svd_hankel


def _full_svd_update(L_prev: FactoredRankR, w: ComplexSignal, r: int) -> FactoredRankR:
    try:
        return truncated_svd_hankel(w, r)
    except LanczosConvergenceError as e:
        # Inside the loop the best Lanczos iterate is still a usable projection.
        logging.warning(f"SAP: continuing with best Lanczos iterate ({e})")
        return e.best


def sap_recover(z, params: RecoveryParams) -> RecoveryResult:
    """
    Fixed-rank Structured Alternating Projections.

    Shares everything with asap_recover except the low-rank step:
    L_{k+1} = D_r H(z - s_{k+1}) via implicit Lanczos.
    """
    return alternating_projections(z, params, _full_svd_update, method="sap")


def cadzow_denoise(z, r: int, iters: int = 1) -> ComplexSignal:
    """
    Cadzow iterations x <- H†(D_r H(x)), starting from z.

    iters = 1 is the estimator behind estimate_params. With
    r >= min(n1, n2) there is nothing to truncate and z is returned.

    Raises:
        InvalidParamsError: If iters < 1.
        LanczosConvergenceError: Propagated from the truncated SVD.
    """
    if iters < 1:
        raise InvalidParamsError(f"iters must be >= 1, got {iters}")
    x = as_signal(z, "z").copy()
    shape = hankel_shape(x.size)
    if r >= min(shape.n1, shape.n2):
        return x
    for _ in range(iters):
        x = hankel_pinv_factored(truncated_svd_hankel(x, r))
    return x
