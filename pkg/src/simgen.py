"""
Synthetic test instances: spectrally sparse signals, sparse corruptions and
additive Gaussian noise at an exact realized SNR.

Random numbers come from numpy's counter-based Philox bit generator, so a seed
gives the same instance on every platform running the same numpy.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from src.asap import SparseEstimate
from src.errors import InfeasibleSeparationError, InvalidInputError, InvalidSpecError
from src.hankel_core import ComplexSignal, as_signal


# ================================
# CONFIGURATION CONSTANTS
# ================================

MAX_REJECTION_ATTEMPTS = 100_000
DAMPING_SCALE = 8.0           # d_j ~ U[0, DAMPING_SCALE / n]
NOISELESS = math.inf          # snr_db sentinel meaning "no noise"

SeedLike = Union[None, int, np.random.Generator]


def make_rng(seed: SeedLike = None) -> np.random.Generator:
    """Philox-backed generator; passes an existing Generator through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(base_seed: int, *key: int) -> int:
    """Deterministic per-trial seed from (base_seed, cell, trial, ...)."""
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in key))
    # 63 bits so the seed fits a signed int64 CSV column
    return int(seq.generate_state(1, dtype=np.uint64)[0]) >> 1


def wraparound_distance(f, g):
    """min(|f - g|, 1 - |f - g|) on the unit frequency circle."""
    d = np.abs(np.asarray(f) - np.asarray(g)) % 1.0
    return np.minimum(d, 1.0 - d)


def min_separation(freqs) -> float:
    """Smallest pairwise wrap-around distance (inf for fewer than two)."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size < 2:
        return math.inf
    dist = wraparound_distance(freqs[:, None], freqs[None, :])
    dist[np.diag_indices(freqs.size)] = math.inf
    return float(dist.min())


# ================================
# SPECTRAL MODEL
# ================================

@dataclass(frozen=True, eq=False)
class SpectralModel:
    """r damped complex sinusoids: x[t] = sum_j a_j exp((2 pi i f_j - d_j) t)."""
    amplitudes: np.ndarray
    frequencies: np.ndarray
    dampings: np.ndarray
    n: int

    def __post_init__(self):
        r = self.amplitudes.size
        if self.frequencies.size != r or self.dampings.size != r:
            raise InvalidSpecError("amplitudes, frequencies and dampings must have equal length")
        if np.any(np.abs(self.amplitudes) == 0):
            raise InvalidSpecError("all amplitudes must be non-zero")
        if np.any(self.dampings < 0):
            raise InvalidSpecError("dampings must be >= 0")
        pairs = set(zip(np.round(self.frequencies % 1.0, 15).tolist(), np.round(self.dampings, 15).tolist()))
        if len(pairs) != r:
            raise InvalidSpecError("(frequency, damping) pairs must be distinct")

    @property
    def r(self) -> int:
        return int(self.amplitudes.size)

    @property
    def components(self):
        return list(zip(self.amplitudes.tolist(), self.frequencies.tolist(), self.dampings.tolist()))

    def synthesize(self, n: Optional[int] = None) -> ComplexSignal:
        t = np.arange(self.n if n is None else n)
        poles = 2j * np.pi * self.frequencies - self.dampings
        return np.exp(np.outer(t, poles)) @ self.amplitudes.astype(np.complex128)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "amplitudes_re": self.amplitudes.real.tolist(),
            "amplitudes_im": self.amplitudes.imag.tolist(),
            "frequencies": self.frequencies.tolist(),
            "dampings": self.dampings.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SpectralModel":
        return cls(
            amplitudes=np.asarray(data["amplitudes_re"]) + 1j * np.asarray(data["amplitudes_im"]),
            frequencies=np.asarray(data["frequencies"], dtype=float),
            dampings=np.asarray(data["dampings"], dtype=float),
            n=int(data["n"]),
        )


def gen_signal(
    n: int,
    r: int,
    separation: Optional[float] = None,
    damped: bool = False,
    seed: SeedLike = None,
) -> Tuple[ComplexSignal, SpectralModel]:
    """
    Draw a spectrally r-sparse signal.

    Frequencies are i.i.d. U[0, 1), redrawn until every pairwise wrap-around
    distance is >= separation (when given); |a_j| = 1 + 10^(0.5 c_j) with
    c_j ~ U[0, 1], arg(a_j) ~ U[0, 2 pi); d_j ~ U[0, 8/n] if damped else 0.

    Raises:
        InvalidSpecError: If n < 1, r < 1 or r * separation >= 1.
        InfeasibleSeparationError: If rejection sampling exceeds its budget.
    """
    if n < 1 or r < 1:
        raise InvalidSpecError(f"Need n >= 1 and r >= 1, got n={n}, r={r}")
    if separation is not None and r * separation >= 1.0:
        raise InvalidSpecError(f"r * separation = {r * separation:.3g} >= 1 is infeasible")
    rng = make_rng(seed)

    for _ in range(MAX_REJECTION_ATTEMPTS):
        freqs = rng.random(r)
        sep = min_separation(freqs)
        if sep > 0 and (separation is None or sep >= separation):
            break
    else:
        raise InfeasibleSeparationError(
            f"No frequency draw with separation >= {separation} after {MAX_REJECTION_ATTEMPTS} attempts"
        )

    magnitudes = 1.0 + 10.0 ** (0.5 * rng.random(r))
    phases = rng.uniform(0.0, 2.0 * np.pi, r)
    dampings = rng.uniform(0.0, DAMPING_SCALE / n, r) if damped else np.zeros(r)
    model = SpectralModel(
        amplitudes=magnitudes * np.exp(1j * phases),
        frequencies=freqs,
        dampings=dampings,
        n=n,
    )
    return model.synthesize(), model


# ================================
# CORRUPTIONS AND NOISE
# ================================

@dataclass(frozen=True)
class CorruptionSpec:
    """m corruptions (count, or rate alpha with m = round(alpha n)) of magnitude scale c."""
    scale: float = 1.0
    count: Optional[int] = None
    rate: Optional[float] = None
    seed: Optional[int] = None

    def resolve_count(self, n: int) -> int:
        if self.count is not None:
            m = int(self.count)
        elif self.rate is not None:
            m = int(math.floor(self.rate * n + 0.5))
        else:
            raise InvalidSpecError("CorruptionSpec needs either count or rate")
        if m < 0 or m > n:
            raise InvalidSpecError(f"Corruption count m={m} must lie in [0, n={n}]")
        if not self.scale > 0:
            raise InvalidSpecError(f"Corruption scale must be > 0, got {self.scale}")
        return m


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = NOISELESS
    seed: Optional[int] = None


def gen_corruptions(x, spec: CorruptionSpec, rng: SeedLike = None) -> SparseEstimate:
    """
    m distinct uniform locations; real parts ~ U[-c E|Re x|, c E|Re x|] and
    imaginary parts ~ U[-c E|Im x|, c E|Im x|] with sample-mean magnitudes.
    """
    x = as_signal(x, "x")
    n = x.size
    m = spec.resolve_count(n)
    rng = make_rng(rng if rng is not None else spec.seed)
    if m == 0:
        return SparseEstimate.empty(n)
    support = np.sort(rng.choice(n, size=m, replace=False)).astype(np.int64)
    bound_re = spec.scale * np.mean(np.abs(x.real))
    bound_im = spec.scale * np.mean(np.abs(x.imag))
    values = rng.uniform(-bound_re, bound_re, m) + 1j * rng.uniform(-bound_im, bound_im, m)
    return SparseEstimate(n=n, support=support, values=values)


def add_noise(x, spec: NoiseSpec, rng: SeedLike = None) -> Tuple[ComplexSignal, float]:
    """
    Circular complex Gaussian noise rescaled so that
    10 log10(||x||^2 / ||eta||^2) equals snr_db exactly.

    Returns:
        (eta, realized_snr_db)

    Raises:
        InvalidInputError: If x is the zero signal.
    """
    x = as_signal(x, "x")
    norm_x = np.linalg.norm(x)
    if norm_x == 0:
        raise InvalidInputError("Cannot set an SNR relative to the zero signal")
    if math.isinf(spec.snr_db) and spec.snr_db > 0:
        return np.zeros_like(x), math.inf
    rng = make_rng(rng if rng is not None else spec.seed)
    g = (rng.standard_normal(x.size) + 1j * rng.standard_normal(x.size)) / np.sqrt(2.0)
    eta = g * (norm_x / np.linalg.norm(g)) * 10.0 ** (-spec.snr_db / 20.0)
    return eta, output_snr(x, x + eta)


def output_snr(x_true, x_hat) -> float:
    """10 log10(||x||^2 / ||x - x_hat||^2); +inf for an exact match."""
    x_true = np.asarray(x_true, dtype=np.complex128)
    x_hat = np.asarray(x_hat, dtype=np.complex128)
    if x_true.shape != x_hat.shape:
        raise InvalidInputError(f"Length mismatch: {x_true.shape} vs {x_hat.shape}")
    signal = np.linalg.norm(x_true)
    if signal == 0:
        raise InvalidInputError("Reference signal has zero norm")
    err = np.linalg.norm(x_true - x_hat)
    if err == 0:
        return math.inf
    return float(20.0 * np.log10(signal / err))


def relative_error(x_true, x_hat) -> float:
    """||x_hat - x|| / ||x||, the recovery success measure."""
    x_true = np.asarray(x_true, dtype=np.complex128)
    return float(np.linalg.norm(np.asarray(x_hat) - x_true) / np.linalg.norm(x_true))
