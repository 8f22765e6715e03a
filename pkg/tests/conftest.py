import numpy as np
import pytest

from latentfolio import market_data as md


def make_rigged_series(n=3, T=160, growth=(1.000, 1.010, 0.999), risk_free=0.0):
    """Deterministic market where one asset strictly dominates every period."""
    close = np.empty((T, n))
    close[0] = 100.0
    g = np.asarray(growth, dtype=float)
    for t in range(1, T):
        close[t] = close[t - 1] * g
    open_ = np.vstack([close[0], close[:-1]])
    high = np.maximum(open_, close) * 1.0001
    low = np.minimum(open_, close) * 0.9999
    dates = np.datetime64("2020-01-01") + np.arange(T)
    return md.OhlcSeries(tickers=[f"A{i}" for i in range(n)], dates=dates,
                         open=open_, high=high, low=low, close=close,
                         risk_free_annual=risk_free, periods_per_year=252)


def make_constant_series(n=2, T=50, price=100.0, risk_free=0.0):
    close = np.full((T, n), price)
    dates = np.datetime64("2020-01-01") + np.arange(T)
    return md.OhlcSeries(tickers=[f"A{i}" for i in range(n)], dates=dates,
                         open=close.copy(), high=close.copy(), low=close.copy(),
                         close=close.copy(), risk_free_annual=risk_free,
                         periods_per_year=252)


@pytest.fixture
def synth_series():
    return md.synth_gbm(seed=11, n=4, T=320, drifts=(0.1, 0.02, -0.05, 0.08), vols=0.25)


@pytest.fixture
def rigged_series():
    return make_rigged_series()


@pytest.fixture
def constant_series():
    return make_constant_series()
