import numpy as np
import pytest

from latentfolio import kalman
from latentfolio.errors import ValidationError


def test_noiseless_measurement_limit():
    model = kalman.local_level(q=0.0, r=1e-15, mu0=0.0, p0=1.0)
    mean, cov, innovation, gain = kalman.kalman_step(model, [0.0], [[1.0]], [3.7])
    assert gain[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert mean[0] == pytest.approx(3.7, abs=1e-12)


def test_uninformative_measurement_limit():
    model = kalman.local_level(q=0.0, r=1e12, mu0=0.5, p0=1.0)
    mean, _, _, _ = kalman.kalman_step(model, [0.5], [[1.0]], [100.0])
    assert mean[0] == pytest.approx(0.5, abs=1e-9)


def test_hand_recursion_running_mean_shrinkage():
    model = kalman.local_level(q=0.0, r=1.0, mu0=0.0, p0=1.0)
    result = kalman.filter_series(model, [1.0, 1.0, 1.0])
    assert np.allclose(result.states.ravel(), [1 / 2, 2 / 3, 3 / 4], atol=1e-14)


def test_single_measurement_equals_one_step():
    model = kalman.local_level(q=0.3, r=0.7, mu0=0.1, p0=2.0)
    result = kalman.filter_series(model, [1.5])
    mean, cov, innovation, gain = kalman.kalman_step(model, model.mu0, model.P0, [1.5])
    assert np.array_equal(result.states[0], mean)
    assert np.array_equal(result.covariances[0], cov)
    assert np.array_equal(result.innovations[0], innovation)
    assert np.array_equal(result.gains[0], gain)


def test_posterior_variance_monotone_on_constant_input():
    model = kalman.local_level(q=0.0, r=1.0, mu0=0.0, p0=1.0)
    result = kalman.filter_series(model, np.ones(40))
    variances = result.covariances[:, 0, 0]
    assert np.all(np.diff(variances) <= 1e-15)


def test_static_state_variance_vanishes():
    model = kalman.local_level(q=0.0, r=1.0, mu0=0.0, p0=1.0)
    result = kalman.filter_series(model, np.zeros(5000))
    assert result.covariances[-1, 0, 0] < 1e-3


def test_filtering_beats_raw_measurements():
    rng = np.random.default_rng(42)
    T = 400
    truth = np.cumsum(rng.standard_normal(T))
    measured = truth + rng.standard_normal(T)
    model = kalman.local_level(q=1.0, r=1.0, mu0=measured[0], p0=1.0)
    filtered = kalman.filter_series(model, measured).states[:, 0]
    mse_filtered = np.mean((filtered - truth) ** 2)
    mse_raw = np.mean((measured - truth) ** 2)
    assert mse_filtered < mse_raw


def test_covariances_symmetric_psd():
    rng = np.random.default_rng(7)
    F = np.array([[1.0, 1.0], [0.0, 1.0]])
    G = np.array([[1.0, 0.0]])
    model = kalman.KalmanModel(F=F, G=G, Q=0.1 * np.eye(2), R=np.array([[0.5]]),
                               mu0=np.zeros(2), P0=np.eye(2))
    result = kalman.filter_series(model, rng.standard_normal(100))
    for P in result.covariances:
        assert np.max(np.abs(P - P.T)) <= 1e-10
        assert np.min(np.linalg.eigvalsh(P)) >= -1e-10


def test_filter_is_bit_deterministic():
    rng = np.random.default_rng(3)
    ys = rng.standard_normal(50)
    model = kalman.local_level(q=0.2, r=0.9, mu0=0.0, p0=1.0)
    a = kalman.filter_series(model, ys)
    b = kalman.filter_series(model, ys)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.covariances, b.covariances)


def test_fit_noise_white_noise_recovers_variance():
    rng = np.random.default_rng(5)
    sigma = 0.7
    series = sigma * rng.standard_normal(5000)
    q, r = kalman.fit_noise_params(series)
    assert r == pytest.approx(sigma**2, rel=0.1)
    assert q == pytest.approx(0.1 * r)


def test_fit_noise_kappa_zero_gives_zero_q():
    rng = np.random.default_rng(6)
    q, r = kalman.fit_noise_params(rng.standard_normal(100), kappa=0.0)
    assert q == 0.0
    assert r > 0


def test_fit_noise_constant_series_clamped():
    assert kalman.fit_noise_params(np.ones(20)) == (1e-12, 1e-12)


def test_fit_noise_needs_ten_points():
    with pytest.raises(ValidationError):
        kalman.fit_noise_params(np.arange(5.0))


def test_filter_panel_shapes_and_rebuild(synth_series):
    from latentfolio.market_data import log_returns
    rets = log_returns(synth_series)
    filtered, params = kalman.filter_panel(rets, kappa=0.1, fit_rows=200)
    assert filtered.shape == rets.shape
    assert params.shape == (synth_series.n_assets, 3, 2)
    prices = kalman.rebuild_prices(synth_series.close[0], filtered[:, :, 0])
    assert prices.shape == synth_series.close.shape
    assert np.allclose(prices[0], synth_series.close[0])
    assert np.all(prices > 0)
