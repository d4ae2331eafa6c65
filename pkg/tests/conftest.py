"""
Pytest configuration and shared fixtures for the recovery tests.
"""
import sys
import pytest
import numpy as np
from pathlib import Path

# Add project root to path for imports
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))

from src.simgen import gen_signal, make_rng


@pytest.fixture
def rng():
    """Seeded Philox generator for ad-hoc random data."""
    return make_rng(1234)


@pytest.fixture
def random_complex(rng):
    """Factory for i.i.d. complex Gaussian vectors/matrices."""
    def _draw(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return _draw


@pytest.fixture
def sparse_signal():
    """Spectrally 5-sparse signal of length 125 with separated frequencies."""
    x, model = gen_signal(125, 5, separation=1.5 / 125, seed=7)
    return x, model


@pytest.fixture
def small_sparse_signal():
    """Spectrally 3-sparse signal of length 63."""
    x, model = gen_signal(63, 3, separation=1.5 / 63, seed=11)
    return x, model


@pytest.fixture
def experiments_dir():
    """Directory holding the shipped YAML experiment configs."""
    return PROJECT_ROOT / "experiments"
