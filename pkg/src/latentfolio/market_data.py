"""OHLC market data: ingestion, validation, windows, and synthetic generation.

Prices live in (T, n) arrays, one row per trading period, one column per
asset. A constant-rate risk-free leg rides along as a scalar annual rate;
price-relative vectors put its per-period growth factor at index 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientHistoryError, ParseError, ValidationError

CSV_COLUMNS = ("date", "ticker", "open", "high", "low", "close")


@dataclass(eq=False)
class OhlcSeries:
    """Aligned open/high/low/close history for n assets plus a risk-free rate."""

    tickers: list
    dates: np.ndarray              # datetime64[D], strictly increasing
    open: np.ndarray               # (T, n) > 0
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    risk_free_annual: float = 0.0005
    periods_per_year: int = 252

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        for name in ("open", "high", "low", "close"):
            setattr(self, name, np.ascontiguousarray(getattr(self, name), dtype=float))
        self.validate()

    @property
    def n_assets(self) -> int:
        return len(self.tickers)

    def __len__(self) -> int:
        return len(self.dates)

    def validate(self) -> None:
        T, n = len(self.dates), len(self.tickers)
        for name in ("open", "high", "low", "close"):
            arr = getattr(self, name)
            if arr.shape != (T, n):
                raise ValidationError(f"{name} has shape {arr.shape}, expected {(T, n)}")
            if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
                raise ValidationError(f"{name} contains non-finite or non-positive prices")
        if T >= 2 and not np.all(self.dates[1:] > self.dates[:-1]):
            raise ValidationError("dates are not strictly increasing")
        lo_bad = self.low > np.minimum(self.open, self.close) + 1e-12 * self.close
        hi_bad = self.high < np.maximum(self.open, self.close) - 1e-12 * self.close
        for bad, what in ((lo_bad, "low above min(open, close)"), (hi_bad, "high below max(open, close)")):
            if np.any(bad):
                t, i = np.argwhere(bad)[0]
                raise ValidationError(f"{what} for asset {self.tickers[i]} on {self.dates[t]}")
        if self.risk_free_annual <= -1.0:
            raise ValidationError("risk_free_annual must exceed -1")
        if self.periods_per_year < 1:
            raise ValidationError("periods_per_year must be >= 1")

    def equals(self, other: "OhlcSeries") -> bool:
        return (
            self.tickers == other.tickers
            and np.array_equal(self.dates, other.dates)
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("open", "high", "low", "close")
            )
            and self.risk_free_annual == other.risk_free_annual
            and self.periods_per_year == other.periods_per_year
        )

    def risk_free_factor(self) -> float:
        """Gross per-period growth of the risk-free leg."""
        return (1.0 + self.risk_free_annual) ** (1.0 / self.periods_per_year)

    def slice(self, start: int, stop: int) -> "OhlcSeries":
        return OhlcSeries(
            tickers=list(self.tickers),
            dates=self.dates[start:stop].copy(),
            open=self.open[start:stop].copy(),
            high=self.high[start:stop].copy(),
            low=self.low[start:stop].copy(),
            close=self.close[start:stop].copy(),
            risk_free_annual=self.risk_free_annual,
            periods_per_year=self.periods_per_year,
        )


@dataclass
class PriceRelativeVector:
    """Gross period returns, length n+1, risk-free leg at index 0."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if np.any(self.values <= 0):
            raise ValidationError("price relatives must be strictly positive")


@dataclass
class OhlcTensor:
    """Close/high/low panels of shape (n, m), normalized by the window-end close."""

    close: np.ndarray
    high: np.ndarray
    low: np.ndarray

    def stacked(self) -> np.ndarray:
        """(n, m, 3) with channel order close, high, low."""
        return np.stack([self.close, self.high, self.low], axis=-1)


def load_csv(path, schema: dict | None = None, risk_free_annual: float | None = None,
             periods_per_year: int | None = None) -> OhlcSeries:
    """Read a long-format ``date,ticker,open,high,low,close`` CSV.

    Comment lines starting with ``#`` may carry ``risk_free_annual`` /
    ``periods_per_year`` overrides written by :func:`save_csv`; explicit
    keyword arguments win over those. ``schema={"format": "wide", ...}``
    accepts one row per date with ``<ticker><sep><field>`` columns.
    """
    fmt = (schema or {}).get("format", "long")
    meta: dict = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            _absorb_meta_comment(line, meta)
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            continue
        rows.append((lineno, cells))
    if header is None:
        raise ParseError(f"{path}: no header row found")

    if fmt == "long":
        records = _parse_long(path, header, rows, schema)
    elif fmt == "wide":
        records = _parse_wide(path, header, rows, schema)
    else:
        raise ValidationError(f"unknown csv format '{fmt}'")

    rf = risk_free_annual if risk_free_annual is not None else meta.get("risk_free_annual", 0.0005)
    ppy = periods_per_year if periods_per_year is not None else meta.get("periods_per_year", 252)
    return _assemble_series(records, rf, int(ppy))


def _absorb_meta_comment(line: str, meta: dict) -> None:
    body = line.lstrip("#").strip()
    if "=" not in body:
        return
    key, _, value = body.partition("=")
    key = key.strip()
    if key == "risk_free_annual":
        meta[key] = float(value)
    elif key == "periods_per_year":
        meta[key] = int(value)


def _parse_long(path, header, rows, schema):
    lowered = [c.lower() for c in header]
    colmap = {name: name for name in CSV_COLUMNS}
    if schema:
        colmap.update({k: v.lower() for k, v in schema.items() if k in CSV_COLUMNS})
    try:
        idx = {name: lowered.index(colmap[name]) for name in CSV_COLUMNS}
    except ValueError as exc:
        raise ParseError(f"{path}: missing column ({exc})") from exc
    records = []
    for lineno, cells in rows:
        if len(cells) < len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, found {len(cells)}")
        try:
            date = np.datetime64(cells[idx["date"]], "D")
            ticker = cells[idx["ticker"]]
            ohlc = tuple(float(cells[idx[f]]) for f in ("open", "high", "low", "close"))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        records.append((date, ticker, ohlc, lineno))
    return records


def _parse_wide(path, header, rows, schema):
    sep = (schema or {}).get("sep", "_")
    date_col = (schema or {}).get("date", "date")
    lowered = [c.lower() for c in header]
    if date_col.lower() not in lowered:
        raise ParseError(f"{path}: missing date column '{date_col}'")
    date_idx = lowered.index(date_col.lower())
    fields = {}
    for j, col in enumerate(header):
        if j == date_idx:
            continue
        ticker, _, fieldname = col.rpartition(sep)
        fieldname = fieldname.lower()
        if not ticker or fieldname not in ("open", "high", "low", "close"):
            raise ParseError(f"{path}: cannot interpret wide column '{col}'")
        fields.setdefault(ticker, {})[fieldname] = j
    for ticker, got in fields.items():
        if set(got) != {"open", "high", "low", "close"}:
            raise ParseError(f"{path}: incomplete OHLC columns for '{ticker}'")
    records = []
    for lineno, cells in rows:
        if len(cells) < len(header):
            raise ParseError(f"{path}:{lineno}: expected {len(header)} cells, found {len(cells)}")
        try:
            date = np.datetime64(cells[date_idx], "D")
            for ticker, cols in fields.items():
                ohlc = tuple(float(cells[cols[f]]) for f in ("open", "high", "low", "close"))
                records.append((date, ticker, ohlc, lineno))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return records


def _assemble_series(records, risk_free_annual, periods_per_year) -> OhlcSeries:
    tickers = sorted({r[1] for r in records})
    dates = np.array(sorted({r[0] for r in records}), dtype="datetime64[D]")
    date_pos = {d: i for i, d in enumerate(dates)}
    tick_pos = {t: j for j, t in enumerate(tickers)}
    T, n = len(dates), len(tickers)
    panels = {f: np.full((T, n), np.nan) for f in ("open", "high", "low", "close")}
    for date, ticker, (o, h, l, c), lineno in records:
        t, j = date_pos[date], tick_pos[ticker]
        if not math.isnan(panels["close"][t, j]):
            raise ParseError(f"row {lineno}: duplicate entry for {ticker} on {date}")
        panels["open"][t, j], panels["high"][t, j] = o, h
        panels["low"][t, j], panels["close"][t, j] = l, c
    missing = np.isnan(panels["close"])
    if np.any(missing):
        t, j = np.argwhere(missing)[0]
        raise ValidationError(f"asset {tickers[j]} has no row for {dates[t]}; aligned calendars are required")
    return OhlcSeries(tickers=tickers, dates=dates, risk_free_annual=risk_free_annual,
                      periods_per_year=periods_per_year, **panels)


def save_csv(series: OhlcSeries, path, config_hash: str | None = None) -> None:
    """Dump in the long CSV schema; floats use repr so reload is exact."""
    lines = []
    if config_hash:
        lines.append(f"# config_hash={config_hash}")
    lines.append(f"# risk_free_annual={series.risk_free_annual!r}")
    lines.append(f"# periods_per_year={series.periods_per_year}")
    lines.append(",".join(CSV_COLUMNS))
    for t in range(len(series)):
        date = str(series.dates[t])
        for j, ticker in enumerate(series.tickers):
            lines.append(
                f"{date},{ticker},{float(series.open[t, j])!r},{float(series.high[t, j])!r},"
                f"{float(series.low[t, j])!r},{float(series.close[t, j])!r}"
            )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def split_train_test(series: OhlcSeries, fraction: float):
    """Chronological split; the fractional boundary row joins the training side."""
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"split fraction must lie in (0, 1), got {fraction}")
    T = len(series)
    n_train = math.ceil(fraction * T)
    if n_train < 2 or T - n_train < 2:
        raise ValidationError(f"split {n_train}/{T - n_train} leaves fewer than 2 rows on one side")
    return series.slice(0, n_train), series.slice(n_train, T)


def price_relatives(series: OhlcSeries, t: int) -> PriceRelativeVector:
    """Gross returns over the period ending at index t; cash factor at index 0."""
    if not 1 <= t < len(series):
        raise IndexError(f"period index {t} outside [1, {len(series) - 1}]")
    values = np.empty(series.n_assets + 1)
    values[0] = series.risk_free_factor()
    values[1:] = series.close[t] / series.close[t - 1]
    return PriceRelativeVector(values)


def log_returns(series: OhlcSeries) -> np.ndarray:
    """(T-1, n, 3) log returns per channel, channel order close/high/low."""
    out = np.empty((len(series) - 1, series.n_assets, 3))
    for c, panel in enumerate((series.close, series.high, series.low)):
        out[:, :, c] = np.log(panel[1:] / panel[:-1])
    return out


def ohlc_tensor(series: OhlcSeries, t: int, m: int) -> OhlcTensor:
    """Normalized price window: columns t-m+1..t divided elementwise by close_t."""
    if t < m:
        raise InsufficientHistoryError(f"window of length {m} needs t >= {m}, got t={t}")
    if t >= len(series):
        raise IndexError(f"t={t} outside series of length {len(series)}")
    denom = series.close[t]
    sl = slice(t - m + 1, t + 1)
    return OhlcTensor(
        close=(series.close[sl] / denom).T.copy(),
        high=(series.high[sl] / denom).T.copy(),
        low=(series.low[sl] / denom).T.copy(),
    )


def synth_gbm(seed: int, n: int, T: int, drifts, vols,
              start_prices=None, risk_free_annual: float = 0.0005,
              periods_per_year: int = 252, start_date: str = "2007-01-02",
              intraday_scale: float = 0.5) -> OhlcSeries:
    """Reproducible geometric-Brownian OHLC paths for tests and demos.

    Close follows GBM; open is the previous close; high/low pad the
    open-close envelope by a |noise| fraction proportional to the asset's
    volatility, which keeps the OHLC ordering invariants intact.
    """
    drifts = np.broadcast_to(np.asarray(drifts, dtype=float), (n,))
    vols = np.broadcast_to(np.asarray(vols, dtype=float), (n,))
    if np.any(vols < 0):
        raise ValidationError("volatilities must be non-negative")
    if T < 2:
        raise ValidationError("T must be at least 2")
    rng = np.random.default_rng(seed)
    dt = 1.0 / periods_per_year
    start = np.broadcast_to(np.asarray(start_prices if start_prices is not None else 100.0,
                                       dtype=float), (n,))
    shocks = rng.standard_normal((T - 1, n))
    steps = (drifts - 0.5 * vols**2) * dt + vols * math.sqrt(dt) * shocks
    close = np.empty((T, n))
    close[0] = start
    close[1:] = start * np.exp(np.cumsum(steps, axis=0))
    open_ = np.empty_like(close)
    open_[0] = close[0]
    open_[1:] = close[:-1]
    pad_hi = np.abs(rng.standard_normal((T, n))) * intraday_scale * vols * math.sqrt(dt)
    pad_lo = np.abs(rng.standard_normal((T, n))) * intraday_scale * vols * math.sqrt(dt)
    high = np.maximum(open_, close) * (1.0 + pad_hi)
    low = np.minimum(open_, close) * (1.0 - np.minimum(pad_lo, 0.99))
    dates = np.datetime64(start_date, "D") + np.arange(T)
    tickers = [f"A{i:02d}" for i in range(n)]
    return OhlcSeries(tickers=tickers, dates=dates, open=open_, high=high, low=low,
                      close=close, risk_free_annual=risk_free_annual,
                      periods_per_year=periods_per_year)
