"""
Harmonic retrieval on recovered signals.

esprit_model reads the (amplitude, frequency, damping) triples back out of a
spectrally sparse signal so a recovery can be scored against the generator's
ground truth, not only by its sample-wise error.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import linalg as sp_linalg
from scipy.optimize import linear_sum_assignment

from src.errors import InvalidParamsError, ShapeMismatchError
from src.hankel_core import as_signal, hankel_shape
from src.lowrank import truncated_svd_hankel
from src.simgen import SpectralModel, wraparound_distance


def esprit_model(x, r: int) -> SpectralModel:
    """
    Estimate r damped sinusoids with ESPRIT on the Hankel lift.

    The leading right singular vectors of H(x) span the Vandermonde vectors
    [z_j^0, ..., z_j^(n2-1)]; the poles z_j are the eigenvalues of the shift
    that maps the first n2-1 rows of that basis onto the last n2-1 rows.
    Amplitudes then come from a least-squares fit of the n x r Vandermonde
    system.

    Raises:
        InvalidParamsError: If r < 1 or r >= n2 (no room for the shift).
    """
    x = as_signal(x, "x")
    shape = hankel_shape(x.size)
    if r < 1 or r >= shape.n2 or r > shape.n1:
        raise InvalidParamsError(f"ESPRIT needs 1 <= r < n2={shape.n2} and r <= n1={shape.n1}, got r={r}")

    L = truncated_svd_hankel(x, r)
    W = np.conj(L.V)
    psi, *_ = sp_linalg.lstsq(W[:-1], W[1:])
    poles = sp_linalg.eigvals(psi)

    t = np.arange(shape.n)
    vander = poles[None, :] ** t[:, None]
    amplitudes, *_ = sp_linalg.lstsq(vander, x)

    frequencies = np.mod(np.angle(poles) / (2.0 * np.pi), 1.0)
    dampings = -np.log(np.abs(poles))
    if np.any(dampings < 0):
        logging.debug(f"ESPRIT: clamping {int(np.sum(dampings < 0))} growing poles to zero damping")
    return SpectralModel(
        amplitudes=np.asarray(amplitudes, dtype=np.complex128),
        frequencies=frequencies,
        dampings=np.maximum(dampings, 0.0),
        n=shape.n,
    )


def match_components(truth: SpectralModel, estimate: SpectralModel) -> np.ndarray:
    """
    Pair estimated and true components one-to-one by wrap-around frequency
    distance (Hungarian assignment).

    Returns:
        Per-true-component frequency errors, ordered like ``truth``.

    Raises:
        ShapeMismatchError: If the models have different orders.
    """
    if truth.r != estimate.r:
        raise ShapeMismatchError(f"Model orders differ: {truth.r} vs {estimate.r}")
    cost = wraparound_distance(truth.frequencies[:, None], estimate.frequencies[None, :])
    rows, cols = linear_sum_assignment(cost)
    errors = np.empty(truth.r)
    errors[rows] = cost[rows, cols]
    return errors


def power_spectrum(x, nfft: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    |FFT|^2 of x on the grid k / nfft, k = 0..nfft-1.

    Args:
        x: Signal.
        nfft: Transform length (default: the signal length).
    """
    x = as_signal(x, "x")
    nfft = x.size if nfft is None else int(nfft)
    if nfft < 1:
        raise InvalidParamsError(f"nfft must be >= 1, got {nfft}")
    spectrum = sp_fft.fft(x, nfft)
    return np.arange(nfft) / nfft, np.abs(spectrum) ** 2
