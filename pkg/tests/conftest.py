import numpy as np
import pytest

from qdfusion.cascade import TimeGrid, from_lifetimes, nominal_emitter, pair_state


@pytest.fixture(scope="session")
def emitter():
    """Reference-device parameters (125.5 ps X, 38.8 ps XX)."""
    return nominal_emitter()


@pytest.fixture(scope="session")
def grid256(emitter):
    return TimeGrid.default(emitter, n_bins=256)


@pytest.fixture(scope="session")
def grid512(emitter):
    return TimeGrid.default(emitter, n_bins=512)


@pytest.fixture(scope="session")
def pair512(emitter, grid512):
    return pair_state(emitter, grid512)


@pytest.fixture(scope="session")
def calibrated_model():
    """Dephasing model fitted to the measured visibilities and pair fidelity."""
    from qdfusion.experiment import calibrate

    return calibrate()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
