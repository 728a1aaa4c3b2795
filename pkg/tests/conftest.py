import numpy as np
import pytest

from dephase import (
    EtaGrid,
    Gaussian,
    InitialDatum,
    OmegaGrid,
    RunConfig,
    WeightParams,
)
from dephase.solver import run


@pytest.fixture(scope="session")
def gaussian_datum():
    return InitialDatum(g=Gaussian(1.0), perturbations=((1, 0.1 + 0.0j),))


@pytest.fixture(scope="session")
def reference_config(gaussian_datum):
    """The standard coupled run: mu=0.2, unit Gaussian, eps=0.1."""
    return RunConfig(
        mu=0.2,
        dt=0.01,
        t_max=20.0,
        k_max=16,
        omega_grid=OmegaGrid(8.0, 257),
        eta_grid=EtaGrid(25.0, 201),
        weight_params=WeightParams.default(0.5),
        initial=gaussian_datum,
    )


@pytest.fixture(scope="session")
def reference_run(reference_config):
    return run(reference_config)


@pytest.fixture(scope="session")
def refined_config(reference_config):
    """Simultaneous refinement: dt/2, k_max x2, omega points x2."""
    return reference_config.replace(
        dt=reference_config.dt / 2,
        k_max=reference_config.k_max * 2,
        omega_grid=OmegaGrid(8.0, 513),
    )


@pytest.fixture(scope="session")
def refined_run(refined_config):
    return run(refined_config)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
