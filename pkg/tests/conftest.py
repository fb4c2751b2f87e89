import numpy as np
import pytest

from wbsense import siggen


@pytest.fixture
def small_cfg():
    """Tiny generation config used across siggen tests."""
    return siggen.GenerationConfig(
        signal_length=4096,
        num_subbands=16,
        snr_mode="per-user-random",
        snr_range_db=(0.0, 20.0),
        num_random_samples=8,
        master_seed=1234,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(0)
