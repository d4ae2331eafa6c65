"""
Accelerated Structured Alternating Projections (ASAP).

Separates z = x + s into a spectrally sparse part x (low-rank Hankel lift) and
a sparse corruption s:

1. Initialization: one hard-thresholding step at zeta_0 = beta_init * sigma_1(H(z)),
   then a Lanczos truncated SVD of H(z - s_0).
2. Main loop: threshold z - x_k at zeta_{k+1} = beta * gamma^k * sigma_1(L_k),
   project H(z - s_{k+1}) onto the tangent space at L_k and truncate to rank r
   (QR-accelerated), average antidiagonals to get x_{k+1}.
3. Stop when ||z - x_k - s_k|| / ||z|| < epsilon or after max_iter iterations.

Thresholding parameters default to the one-step Cadzow estimates of the
incoherence and of sigma_1(H(x)).
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, List, NamedTuple, Optional, Tuple

import numpy as np

from src.errors import InvalidInputError, InvalidParamsError, NumericalBreakdownError
from src.hankel_core import (
    ComplexSignal,
    HankelOperator,
    as_signal,
    hankel_pinv_factored,
    hankel_shape,
)
from src.lowrank import (
    FactoredRankR,
    accelerated_rank_r,
    incoherence,
    leading_singular_value,
    truncated_svd_hankel,
)


# ================================
# CONFIGURATION CONSTANTS
# ================================

DEFAULT_MAX_ITER = 100
DEFAULT_GAMMA = 0.95
DEFAULT_EPSILON = 1e-6


# ================================
# PARAMETERS AND RESULTS
# ================================

@dataclass(frozen=True)
class RecoveryParams:
    """Knobs of the initialization and the main loop."""
    r: int
    epsilon: float
    beta: float
    beta_init: float
    gamma: float
    max_iter: int = DEFAULT_MAX_ITER

    def __post_init__(self):
        problems = []
        if int(self.r) != self.r or self.r < 1:
            problems.append(f"r must be a positive integer (got {self.r})")
        if not 0.0 < self.gamma < 1.0:
            problems.append(f"gamma must lie in (0, 1) (got {self.gamma})")
        if not self.epsilon > 0.0:
            problems.append(f"epsilon must be > 0 (got {self.epsilon})")
        if not self.beta > 0.0:
            problems.append(f"beta must be > 0 (got {self.beta})")
        if not self.beta_init > 0.0:
            problems.append(f"beta_init must be > 0 (got {self.beta_init})")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            problems.append(f"max_iter must be a positive integer (got {self.max_iter})")
        if problems:
            raise InvalidParamsError("; ".join(problems))

    def with_overrides(self, **overrides) -> "RecoveryParams":
        """Copy with the non-None overrides applied (re-validated)."""
        clean = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **clean) if clean else self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SparseEstimate:
    """Sparse vector of length n stored as (sorted support, values)."""
    n: int
    support: np.ndarray
    values: np.ndarray

    @classmethod
    def empty(cls, n: int) -> "SparseEstimate":
        return cls(n=n, support=np.zeros(0, dtype=np.int64), values=np.zeros(0, dtype=np.complex128))

    @classmethod
    def from_dense(cls, v) -> "SparseEstimate":
        v = np.asarray(v, dtype=np.complex128)
        idx = np.flatnonzero(v)
        return cls(n=v.size, support=idx.astype(np.int64), values=v[idx].copy())

    @property
    def size(self) -> int:
        return int(self.support.size)

    def to_dense(self) -> ComplexSignal:
        out = np.zeros(self.n, dtype=np.complex128)
        out[self.support] = self.values
        return out


class ParamEstimates(NamedTuple):
    """One-step Cadzow estimates used to form the thresholding parameters."""
    mu_hat: float
    sigma1x_hat: float
    sigma1z: float
    kappa_hat: float = math.inf


class InitialEstimate(NamedTuple):
    L0: FactoredRankR
    x0: ComplexSignal
    s0: SparseEstimate


@dataclass(eq=False)
class RecoveryResult:
    """
    Output of a recovery run together with its per-iteration traces.

    errors[k] is err_k (errors[0] belongs to the initialization), so
    len(errors) == iterations + 1. zeta_trace[k] is the threshold used to
    produce s_{k+1}.
    """
    x_hat: ComplexSignal
    s_hat: SparseEstimate
    errors: List[float]
    sigma1_trace: List[float]
    iterations: int
    converged: bool
    zeta_trace: List[float] = field(default_factory=list)
    support_sizes: List[int] = field(default_factory=list)
    supports: List[np.ndarray] = field(default_factory=list)
    iteration_times: List[float] = field(default_factory=list)
    init_time: float = 0.0
    wall_time: float = 0.0
    method: str = "asap"
    L_final: Optional[FactoredRankR] = None

    @property
    def time_per_iteration(self) -> float:
        return float(np.mean(self.iteration_times)) if self.iteration_times else 0.0

    def to_report(self, params: RecoveryParams) -> dict:
        """JSON run report with the fixed key set."""
        return {
            "params": params.to_dict(),
            "n": int(self.x_hat.size),
            "r": int(params.r),
            "err_trace": [float(e) for e in self.errors],
            "sigma1_trace": [float(s) for s in self.sigma1_trace],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "wall_ms": float(self.wall_time * 1000.0),
        }


# ================================
# ELEMENTARY OPERATORS
# ================================

def hard_threshold(v, zeta: float) -> SparseEstimate:
    """
    Keep the entries with |v[t]| > zeta (strict), drop the rest.

    Raises:
        InvalidParamsError: If zeta < 0.
    """
    if zeta < 0:
        raise InvalidParamsError(f"Threshold must be >= 0, got {zeta}")
    v = np.asarray(v, dtype=np.complex128)
    idx = np.flatnonzero(np.abs(v) > zeta)
    return SparseEstimate(n=v.size, support=idx.astype(np.int64), values=v[idx].copy())


def _dense(s, n: int) -> ComplexSignal:
    if isinstance(s, SparseEstimate):
        return s.to_dense()
    if s is None:
        return np.zeros(n, dtype=np.complex128)
    return np.asarray(s, dtype=np.complex128)


def residual(z, x_hat, s_hat) -> float:
    """err = ||z - x_hat - s_hat||_2 / ||z||_2, with 0/0 defined as 0."""
    z = np.asarray(z, dtype=np.complex128)
    x_hat = np.asarray(x_hat, dtype=np.complex128)
    s_dense = _dense(s_hat, z.size)
    if x_hat.shape != z.shape or s_dense.shape != z.shape:
        raise InvalidInputError(f"Length mismatch: z {z.shape}, x_hat {x_hat.shape}, s_hat {s_dense.shape}")
    num = np.linalg.norm(z - x_hat - s_dense)
    den = np.linalg.norm(z)
    if den == 0.0:
        return 0.0 if num == 0.0 else math.inf
    return float(num / den)


# ================================
# PARAMETER ESTIMATION
# ================================

def tuning_parameters(
    mu_hat: float,
    c_s: float,
    r: int,
    n: int,
    sigma1x_hat: float,
    sigma1z: float,
) -> tuple:
    """
    beta = mu c_s r / (2 n),  beta_init = 2 mu c_s r sigma1x / (n sigma1(H(z))).

    Returns:
        (beta, beta_init)
    """
    if sigma1z <= 0.0 or sigma1x_hat <= 0.0:
        raise InvalidInputError("Degenerate spectral estimates (sigma_1 = 0); nothing to recover")
    beta = mu_hat * c_s * r / (2.0 * n)
    beta_init = 2.0 * mu_hat * c_s * r * sigma1x_hat / (n * sigma1z)
    return beta, beta_init


def theory_beta(mu_hat: float, c_s: float, r: int, n: int, kappa: float) -> float:
    """Condition-scaled threshold parameter mu c_s r / (2 kappa n) of the convergence guarantee."""
    if not kappa >= 1.0 or not math.isfinite(kappa):
        raise InvalidInputError(f"Condition number estimate must be finite and >= 1, got {kappa}")
    return mu_hat * c_s * r / (2.0 * kappa * n)


def estimate_params(z, r: int, averaged: bool = True) -> ParamEstimates:
    """
    One-step Cadzow estimates.

    L~ = D_r H(z) gives sigma1z = sigma_1(H(z)) (first triplet of the run).
    With averaged=True the Cadzow step is completed, x~ = H†(L~), and
    L^ = D_r H(x~) supplies mu_hat, sigma1x_hat and kappa_hat. Averaging
    spreads the corruption energy held by L~ back over the antidiagonals,
    so sigma1x_hat / sigma1z drops below 1 on corrupted data and stays at
    1 on exact-rank data. With averaged=False L~ is used directly and the
    ratio is always 1.

    mu_hat is clamped to its maximum possible value n / (c_s r).
    """
    z = as_signal(z, "z")
    shape = hankel_shape(z.size)
    L_z = truncated_svd_hankel(z, r)
    L = truncated_svd_hankel(hankel_pinv_factored(L_z), r) if averaged else L_z
    mu_hat = incoherence(L)
    mu_max = shape.n / (shape.c_s * r)
    if mu_hat > mu_max:
        logging.warning(f"Incoherence estimate {mu_hat:.4g} exceeds its maximum {mu_max:.4g}; clamping")
        mu_hat = mu_max
    sigma_r = float(L.sigma[r - 1])
    kappa = L.sigma1 / sigma_r if sigma_r > 0 else math.inf
    logging.debug(f"Cadzow estimates: mu={mu_hat:.4g}, sigma1x={L.sigma1:.4g}, "
                  f"sigma1z={L_z.sigma1:.4g}, kappa={kappa:.4g}")
    return ParamEstimates(mu_hat=mu_hat, sigma1x_hat=L.sigma1, sigma1z=L_z.sigma1, kappa_hat=kappa)


def default_params(
    z,
    r: int,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    estimates: Optional[ParamEstimates] = None,
    max_iter: int = DEFAULT_MAX_ITER,
    beta_rule: str = "experiment",
    x_inf_bound: Optional[float] = None,
) -> RecoveryParams:
    """
    Build RecoveryParams from the Cadzow estimates.

    Args:
        z: Observed signal.
        r: Model order.
        gamma: Threshold decay in (0, 1).
        epsilon: Target relative residual.
        estimates: Precomputed ParamEstimates (estimated from z if None).
        max_iter: Iteration cap.
        beta_rule: "experiment" (mu c_s r / 2n) or "theory" (divides by kappa).
        x_inf_bound: Known bound on ||x||_inf; sets zeta_0 = 2 * bound directly.

    Raises:
        InvalidInputError: If the estimates are degenerate.
        InvalidParamsError: If beta_rule is unknown.
    """
    z = as_signal(z, "z")
    shape = hankel_shape(z.size)
    est = estimates or estimate_params(z, r)
    beta, beta_init = tuning_parameters(est.mu_hat, shape.c_s, r, shape.n, est.sigma1x_hat, est.sigma1z)
    if beta_rule == "theory":
        beta = theory_beta(est.mu_hat, shape.c_s, r, shape.n, est.kappa_hat)
    elif beta_rule != "experiment":
        raise InvalidParamsError(f"Unknown beta_rule '{beta_rule}' (expected 'experiment' or 'theory')")
    if x_inf_bound is not None:
        if x_inf_bound <= 0:
            raise InvalidParamsError(f"x_inf_bound must be > 0, got {x_inf_bound}")
        beta_init = 2.0 * x_inf_bound / est.sigma1z
    return RecoveryParams(r=r, epsilon=epsilon, beta=beta, beta_init=beta_init, gamma=gamma, max_iter=max_iter)


# ================================
# ALGORITHMS
# ================================

def asap_initialize(z, params: RecoveryParams, sigma1z: Optional[float] = None) -> InitialEstimate:
    """
    One-step alternating projections:
        zeta_0 = beta_init * sigma_1(H(z)),  s_0 = T_zeta0(z),
        L_0 = D_r H(z - s_0),  x_0 = H†(L_0).
    """
    z = as_signal(z, "z")
    if sigma1z is None:
        sigma1z = leading_singular_value(z)
    zeta0 = params.beta_init * sigma1z
    s0 = hard_threshold(z, zeta0)
    L0 = truncated_svd_hankel(z - s0.to_dense(), params.r)
    x0 = hankel_pinv_factored(L0)
    logging.debug(f"Initialization: zeta0={zeta0:.4g}, |supp(s0)|={s0.size}, sigma1(L0)={L0.sigma1:.4g}")
    return InitialEstimate(L0=L0, x0=x0, s0=s0)


LowRankUpdate = Callable[[FactoredRankR, ComplexSignal, int], FactoredRankR]


def alternating_projections(
    z,
    params: RecoveryParams,
    update: LowRankUpdate,
    method: str,
) -> RecoveryResult:
    """
    Shared initialization + thresholding loop; ``update`` performs the
    rank-r projection L_{k+1} = update(L_k, z - s_{k+1}, r).
    """
    start = time.perf_counter()
    z = as_signal(z, "z")
    n = z.size
    if n < 2 * params.r + 1:
        logging.warning(f"n={n} < 2r+1={2 * params.r + 1}: the Hankel lift cannot separate r components")

    if not np.any(z):
        return RecoveryResult(
            x_hat=np.zeros(n, dtype=np.complex128),
            s_hat=SparseEstimate.empty(n),
            errors=[0.0],
            sigma1_trace=[0.0],
            iterations=0,
            converged=True,
            support_sizes=[0],
            supports=[np.zeros(0, dtype=np.int64)],
            method=method,
        )

    L, x, s = asap_initialize(z, params)
    init_time = time.perf_counter() - start
    errors = [residual(z, x, s)]
    sigma1_trace = [L.sigma1]
    zeta_trace: List[float] = []
    supports = [s.support]
    iteration_times: List[float] = []

    k = 0
    while errors[-1] >= params.epsilon and k < params.max_iter:
        tick = time.perf_counter()
        zeta = params.beta * params.gamma ** k * sigma1_trace[k]
        s = hard_threshold(z - x, zeta)
        L = update(L, z - s.to_dense(), params.r)
        x = hankel_pinv_factored(L)
        k += 1
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(L.sigma))):
            raise NumericalBreakdownError(f"{method}: non-finite iterate at iteration {k}", iteration=k)
        errors.append(residual(z, x, s))
        sigma1_trace.append(L.sigma1)
        zeta_trace.append(zeta)
        supports.append(s.support)
        iteration_times.append(time.perf_counter() - tick)
        logging.debug(f"{method} k={k}: err={errors[-1]:.3e}, zeta={zeta:.3e}, |supp|={s.size}")

    converged = errors[-1] < params.epsilon
    if not converged:
        logging.warning(f"{method} stopped at max_iter={params.max_iter} with err={errors[-1]:.3e}")

    return RecoveryResult(
        x_hat=x,
        s_hat=s,
        errors=errors,
        sigma1_trace=sigma1_trace,
        iterations=k,
        converged=converged,
        zeta_trace=zeta_trace,
        support_sizes=[int(sup.size) for sup in supports],
        supports=supports,
        iteration_times=iteration_times,
        init_time=init_time,
        wall_time=time.perf_counter() - start,
        method=method,
        L_final=L,
    )


def _accelerated_update(L: FactoredRankR, w: ComplexSignal, r: int) -> FactoredRankR:
    return accelerated_rank_r(L, w, r, operator=HankelOperator(w))


def asap_recover(z, params: RecoveryParams) -> RecoveryResult:
    """
    Run ASAP on z with the given parameters.

    Returns a RecoveryResult; a zero z gives a trivially converged zero result
    and hitting max_iter returns the last iterate with converged=False.

    Raises:
        NumericalBreakdownError: If an iterate becomes non-finite.
        LanczosConvergenceError: If the initialization SVD fails.
    """
    return alternating_projections(z, params, _accelerated_update, method="asap")


def recover(
    z,
    r: int,
    gamma: float = DEFAULT_GAMMA,
    epsilon: float = DEFAULT_EPSILON,
    max_iter: int = DEFAULT_MAX_ITER,
    **overrides,
) -> Tuple[RecoveryResult, RecoveryParams]:
    """
    Convenience wrapper: estimate_params -> default_params -> asap_recover.

    ``overrides`` may carry beta / beta_init to replace the estimated values.

    Returns:
        (RecoveryResult, RecoveryParams)
    """
    params = default_params(z, r, gamma=gamma, epsilon=epsilon, max_iter=max_iter)
    params = params.with_overrides(**overrides)
    return asap_recover(z, params), params
