import numpy as np
import pytest

from basketexec import load_preset


@pytest.fixture(scope="session")
def six_preset():
    return load_preset("six_stock_sept2017")


@pytest.fixture(scope="session")
def toy_preset():
    return load_preset("toy_one_asset")


@pytest.fixture(scope="session")
def pair_preset():
    return load_preset("pair_drift")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
