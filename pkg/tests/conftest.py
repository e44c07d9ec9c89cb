import numpy as np
import pytest

from hawkes_pot.evt_core import MarkedEventSeries
from hawkes_pot.hawkes_core import ExponentialKernel, HawkesParams
from hawkes_pot.mcmc_engine import ChainConfig, PriorConfig


@pytest.fixture
def rng():
    """Fresh seeded generator for every test."""
    return np.random.default_rng(20240611)


@pytest.fixture
def exp_params():
    return HawkesParams(mu=1.0, kappa=0.5, kernel=ExponentialKernel(1.0))


@pytest.fixture
def toy_train():
    """Six events on [0, 10] with the cluster pattern of B = {0, 1, 1, 0, 4, 5}."""
    return MarkedEventSeries(
        window_end=10.0,
        threshold=0.0,
        times=np.array([0.5, 0.9, 1.6, 5.0, 5.4, 6.1]),
        excesses=np.array([0.8, 1.4, 0.3, 2.2, 0.6, 1.1]),
    )


@pytest.fixture
def toy_test():
    return MarkedEventSeries(
        window_end=14.0,
        threshold=0.0,
        times=np.array([10.7, 11.2, 13.5]),
        excesses=np.array([0.9, 0.4, 1.7]),
        window_start=10.0,
    )


@pytest.fixture
def priors():
    return PriorConfig()


@pytest.fixture
def tiny_chains():
    """Short chains for plumbing tests; not meant for inference."""
    return ChainConfig(
        n_chains=2,
        iterations=60,
        burn_in=20,
        n_representative=3,
        mark_chains=2,
        mark_iterations=60,
        mark_warmup=20,
        z_draws=4,
        log_every=0,
    )
