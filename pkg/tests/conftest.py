import numpy as np
import pytest

from adelim import models, tcl


@pytest.fixture
def rng():
    return np.random.default_rng(20240613)


@pytest.fixture(scope="session")
def three_level_sys():
    return models.three_level(models.three_level_reference(0.1))


@pytest.fixture(scope="session")
def three_level_ctx(three_level_sys):
    return tcl.build_context(three_level_sys)


@pytest.fixture(scope="session")
def rabi_params_small():
    return models.rabi_reference(g=0.05, n_tr=6)


@pytest.fixture(scope="session")
def rabi_sys_small(rabi_params_small):
    return models.rabi(rabi_params_small)


@pytest.fixture(scope="session")
def rabi_ctx_small(rabi_params_small, rabi_sys_small):
    basis = models.rabi_reduced_basis(rabi_params_small)
    return tcl.build_context(rabi_sys_small, basis=basis)


def random_density(rng, d):
    A = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = A @ A.conj().T
    return rho / np.trace(rho)
