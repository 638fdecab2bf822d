import numpy as np
import pytest

from wavepolymer.spectrum import DomainConfig, attach_spectrum, build_eigenbasis


@pytest.fixture
def small_cfg():
    return DomainConfig(J=1.0, T=1.0, n_modes=8, n_x=32, n_t=20, seed=7)


@pytest.fixture
def small_modes(small_cfg):
    basis = build_eigenbasis(small_cfg)
    return attach_spectrum(basis, 1.0, 2.0).apply(basis)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
