from datetime import date, timedelta

import numpy as np
import pytest

from epfbench.data import MarketDataset
from epfbench.synthetic import make_synthetic_dataset


@pytest.fixture(scope="session")
def ds600():
    return make_synthetic_dataset(n_days=600, seed=1)


@pytest.fixture(scope="session")
def ds300():
    return make_synthetic_dataset(n_days=300, seed=2)


def constant_dataset(n_days=100, price=25.0, exog1=10.0, exog2=5.0, start=date(2015, 1, 1)):
    dates = tuple(start + timedelta(days=i) for i in range(n_days))
    return MarketDataset(
        market_id="CONST",
        dates=dates,
        prices=np.full((n_days, 24), price),
        exog1=np.full((n_days, 24), exog1),
        exog2=np.full((n_days, 24), exog2),
    )


@pytest.fixture
def const_ds():
    return constant_dataset()
