import numpy as np
import pytest

from visclimit import grids, thermo


@pytest.fixture
def model():
    return thermo.GasModel(a0=1.0, gamma=2.0, mu=1.0, eta=1.0)


@pytest.fixture
def model14():
    return thermo.GasModel(a0=1.0, gamma=1.4, mu=1.0, eta=1.0)


@pytest.fixture
def torus16():
    return grids.Grid(16, 16, 1.0, 1.0, "torus")


@pytest.fixture
def channel32():
    return grids.Grid(32, 32, 1.0, 1.0, "channel")


def fit_slope(hs, errs):
    """Least-squares slope of log(err) against log(h)."""
    hs = np.asarray(hs, float)
    errs = np.asarray(errs, float)
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
