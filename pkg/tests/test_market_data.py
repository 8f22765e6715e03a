import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentfolio import market_data as md
from latentfolio.errors import InsufficientHistoryError, ParseError, ValidationError

WELL_FORMED = """date,ticker,open,high,low,close
2020-01-01,AAA,10.0,10.5,9.8,10.2
2020-01-01,BBB,20.0,21.0,19.5,20.5
2020-01-02,AAA,10.2,10.6,10.0,10.4
2020-01-02,BBB,20.5,20.9,20.1,20.3
2020-01-03,AAA,10.4,10.8,10.2,10.6
2020-01-03,BBB,20.3,20.7,20.0,20.4
"""


def test_load_csv_well_formed(tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text(WELL_FORMED)
    series = md.load_csv(path)
    assert len(series) == 3
    assert series.tickers == ["AAA", "BBB"]
    assert series.close[0, 0] == 10.2


def test_load_csv_ohlc_violation_names_asset_and_date(tmp_path):
    bad = WELL_FORMED.replace("2020-01-02,BBB,20.5,20.9,20.1,20.3",
                              "2020-01-02,BBB,20.5,20.2,20.1,20.3")
    path = tmp_path / "prices.csv"
    path.write_text(bad)
    with pytest.raises(ValidationError) as exc:
        md.load_csv(path)
    assert "BBB" in str(exc.value) and "2020-01-02" in str(exc.value)


def test_load_csv_malformed_row_carries_row_number(tmp_path):
    bad = WELL_FORMED.replace("2020-01-03,AAA,10.4,10.8,10.2,10.6",
                              "2020-01-03,AAA,ten,10.8,10.2,10.6")
    path = tmp_path / "prices.csv"
    path.write_text(bad)
    with pytest.raises(ParseError) as exc:
        md.load_csv(path)
    assert ":6:" in str(exc.value)


def test_load_csv_rejects_missing_dates(tmp_path):
    ragged = WELL_FORMED.rsplit("\n", 2)[0] + "\n"   # drop BBB's last row
    path = tmp_path / "prices.csv"
    path.write_text(ragged)
    with pytest.raises(ValidationError) as exc:
        md.load_csv(path)
    assert "BBB" in str(exc.value)


def test_load_csv_paper_scale_shape(tmp_path):
    series = md.synth_gbm(seed=0, n=15, T=3271, drifts=0.05, vols=0.2)
    path = tmp_path / "big.csv"
    md.save_csv(series, path)
    loaded = md.load_csv(path)
    assert len(loaded) == 3271
    assert loaded.n_assets == 15


def test_load_csv_wide_format(tmp_path):
    path = tmp_path / "wide.csv"
    path.write_text(
        "date,AAA_open,AAA_high,AAA_low,AAA_close,BBB_open,BBB_high,BBB_low,BBB_close\n"
        "2020-01-01,10.0,10.5,9.8,10.2,20.0,21.0,19.5,20.5\n"
        "2020-01-02,10.2,10.6,10.0,10.4,20.5,20.9,20.1,20.3\n")
    series = md.load_csv(path, schema={"format": "wide"})
    assert len(series) == 2
    assert series.tickers == ["AAA", "BBB"]
    assert series.high[0, 1] == 21.0


def test_csv_round_trip_is_exact(tmp_path, synth_series):
    path = tmp_path / "dump.csv"
    md.save_csv(synth_series, path)
    loaded = md.load_csv(path)
    assert loaded.equals(synth_series)


def test_split_boundary_row_goes_to_training():
    series = md.synth_gbm(seed=1, n=2, T=3271, drifts=0.0, vols=0.1)
    train, test = md.split_train_test(series, 0.7)
    assert (len(train), len(test)) == (2290, 981)


def test_split_even():
    series = md.synth_gbm(seed=1, n=2, T=10, drifts=0.0, vols=0.1)
    train, test = md.split_train_test(series, 0.5)
    assert (len(train), len(test)) == (5, 5)


def test_split_degenerate_fraction_rejected():
    series = md.synth_gbm(seed=1, n=2, T=2, drifts=0.0, vols=0.1)
    with pytest.raises(ValidationError):
        md.split_train_test(series, 0.99)


def test_price_relatives_constant(constant_series):
    y = md.price_relatives(constant_series, 3)
    assert np.allclose(y.values[1:], 1.0)


def test_price_relatives_doubling():
    series = md.synth_gbm(seed=2, n=2, T=5, drifts=0.0, vols=0.0)
    series.close[3, 1] = series.close[2, 1] * 2
    series.high[3, 1] = max(series.high[3, 1], series.close[3, 1])
    y = md.price_relatives(series, 3)
    assert y.values[2] == pytest.approx(2.0)


def test_price_relatives_risk_free_leg():
    series = md.synth_gbm(seed=2, n=1, T=5, drifts=0.0, vols=0.0,
                          risk_free_annual=0.0005, periods_per_year=252)
    y = md.price_relatives(series, 1)
    assert y.values[0] == pytest.approx(1.0005 ** (1 / 252), rel=1e-14)


def test_price_relatives_out_of_range(constant_series):
    with pytest.raises(IndexError):
        md.price_relatives(constant_series, 0)
    with pytest.raises(IndexError):
        md.price_relatives(constant_series, len(constant_series))


def test_price_relatives_telescope(synth_series):
    t, k = 10, 17
    prod = np.ones(synth_series.n_assets)
    for s in range(t + 1, t + k + 1):
        prod *= md.price_relatives(synth_series, s).values[1:]
    direct = synth_series.close[t + k] / synth_series.close[t]
    assert np.allclose(prod, direct, rtol=1e-10)


def test_ohlc_tensor_constant_prices(constant_series):
    tensor = md.ohlc_tensor(constant_series, 10, 5)
    for panel in (tensor.close, tensor.high, tensor.low):
        assert np.allclose(panel, 1.0)


def test_ohlc_tensor_paper_shape():
    series = md.synth_gbm(seed=3, n=15, T=80, drifts=0.05, vols=0.2)
    assert md.ohlc_tensor(series, 70, 60).stacked().shape == (15, 60, 3)


def test_ohlc_tensor_linear_ramp_m2():
    T = 6
    close = np.linspace(100.0, 110.0, T)[:, None]
    open_ = np.vstack([close[:1], close[:-1]])
    series = md.OhlcSeries(tickers=["A"], dates=np.datetime64("2020-01-01") + np.arange(T),
                           open=open_, high=np.maximum(open_, close),
                           low=np.minimum(open_, close), close=close)
    t = 4
    tensor = md.ohlc_tensor(series, t, 2)
    expected = np.array([close[t - 1, 0] / close[t, 0], 1.0])
    assert np.allclose(tensor.close[0], expected, atol=1e-14)


def test_ohlc_tensor_insufficient_history(synth_series):
    with pytest.raises(InsufficientHistoryError):
        md.ohlc_tensor(synth_series, 10, 20)


def test_ohlc_tensor_final_close_column_is_one(synth_series):
    for t in (60, 100, 200):
        tensor = md.ohlc_tensor(synth_series, t, 60)
        assert np.max(np.abs(tensor.close[:, -1] - 1.0)) <= 1e-12


def test_synth_gbm_zero_vol_is_exponential_ramp():
    series = md.synth_gbm(seed=5, n=2, T=50, drifts=(0.3, -0.1), vols=0.0,
                          periods_per_year=252)
    dt = 1.0 / 252
    t = np.arange(50)[:, None]
    expected = 100.0 * np.exp(np.array([0.3, -0.1]) * dt * t)
    assert np.allclose(series.close, expected, rtol=1e-12)


def test_synth_gbm_seed_determinism():
    a = md.synth_gbm(seed=9, n=3, T=40, drifts=0.1, vols=0.3)
    b = md.synth_gbm(seed=9, n=3, T=40, drifts=0.1, vols=0.3)
    assert a.equals(b)


def test_synth_gbm_drift_ordering():
    series = md.synth_gbm(seed=4, n=3, T=1000, drifts=(0.5, 0.0, -0.5), vols=0.01)
    terminal = series.close[-1]
    assert terminal[0] > terminal[1] > terminal[2]


def test_synth_gbm_rejects_negative_vol():
    with pytest.raises(ValidationError):
        md.synth_gbm(seed=0, n=1, T=10, drifts=0.0, vols=-0.1)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), vol=st.floats(0.0, 0.8))
def test_synth_gbm_always_valid(seed, vol):
    series = md.synth_gbm(seed=seed, n=2, T=30, drifts=0.1, vols=vol)
    series.validate()   # OHLC ordering invariants hold by construction


def test_log_returns_shape_and_values(synth_series):
    rets = md.log_returns(synth_series)
    assert rets.shape == (len(synth_series) - 1, synth_series.n_assets, 3)
    assert np.allclose(rets[:, :, 0],
                       np.log(synth_series.close[1:] / synth_series.close[:-1]))
