import numpy as np
import pytest

from flowcast import SynthConfig, generate


@pytest.fixture(scope="session")
def noiseless():
    """Exact rank-3 dataset: 132 days x (96*12) at 15-minute resolution."""
    return generate(SynthConfig(seed=7, noise_sigma=0.0, n_components=3))


@pytest.fixture(scope="session")
def noisy():
    return generate(SynthConfig(seed=13))


@pytest.fixture(scope="session")
def small():
    """Cheap dataset for controller/delay tests: 24 days, T=48, M=4."""
    cfg = SynthConfig(seed=5, n_days=24, intervals_per_day=48, n_movements=4,
                      n_components=2, noise_sigma=6.0)
    return generate(cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
