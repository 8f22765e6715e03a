"""Non-learning strategies: equal weight, passive-aggressive mean reversion,
stochastic-oscillator crossover selection, and mean-variance screening.

Every strategy emits length-(n+1) simplex weights with the cash leg at
index 0 and exposes ``warmup``/``act(t)`` so the backtester can drive any
of them interchangeably. ``act`` must be called with increasing t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .market_data import OhlcSeries


def simplex_project(v) -> np.ndarray:
    """Euclidean projection onto {w >= 0, sum w = 1} by sorted thresholding."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValidationError("cannot project non-finite vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def rsv(closes) -> float:
    """Raw stochastic value of a close window, in [0, 100]; flat windows map to 50."""
    w = np.asarray(closes, dtype=float)
    if w.size == 0:
        raise ValidationError("rsv needs a non-empty window")
    lo, hi = w.min(), w.max()
    if hi <= lo:
        return 50.0
    return 100.0 * (w[-1] - lo) / (hi - lo)


@dataclass
class KdState:
    K: float = 50.0
    D: float = 50.0
    prev_K: float = 50.0
    prev_D: float = 50.0
    n_updates: int = 0


def kd_update(state: KdState, rsv_value: float) -> KdState:
    """One step of the 1/3-2/3 smoothing recursions, keeping lagged values."""
    K = rsv_value / 3.0 + state.K * 2.0 / 3.0
    D = K / 3.0 + state.D * 2.0 / 3.0
    return KdState(K=K, D=D, prev_K=state.K, prev_D=state.D, n_updates=state.n_updates + 1)


def buy_signal(state: KdState) -> bool:
    """True exactly when K crossed above D on the latest update."""
    if state.n_updates < 2:
        raise ValidationError("buy signal needs at least two oscillator updates")
    return state.prev_K <= state.prev_D and state.K > state.D


def mean_variance_weights(returns_window) -> np.ndarray:
    """Ridge-regularized mean-variance direction, scaled to unit L1 norm.

    Only the signs feed the screening strategy, so the scale convention is
    free; L1 keeps magnitudes comparable across windows.
    """
    r = np.atleast_2d(np.asarray(returns_window, dtype=float))
    m, n = r.shape
    if m <= n:
        raise ValidationError(f"need more rows ({m}) than assets ({n}) to estimate covariance")
    mu = r.mean(axis=0)
    cov = np.cov(r, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    ridge = 1e-6 * np.trace(cov) / n
    try:
        w = np.linalg.solve(cov + ridge * np.eye(n), mu)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("covariance matrix is singular even after ridge") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalError("mean-variance solve produced non-finite weights")
    norm = np.sum(np.abs(w))
    return w / norm if norm > 0 else w


def imvk_allocate(mode: str, signals, mv_weights=None) -> np.ndarray:
    """Equal wealth on the selected subset; cash gets everything when empty.

    aggressive: crossover signal alone selects an asset.
    moderate: the signal must coincide with a positive mean-variance weight.
    """
    signals = np.asarray(signals, dtype=bool)
    n = signals.size
    if mode == "aggressive":
        selected = signals
    elif mode == "moderate":
        if mv_weights is None:
            raise ValidationError("moderate mode needs mean-variance weights")
        selected = signals & (np.asarray(mv_weights, dtype=float) > 0)
    else:
        raise ValidationError(f"unknown selection mode '{mode}'")
    out = np.zeros(n + 1)
    count = int(selected.sum())
    if count == 0:
        out[0] = 1.0
    else:
        out[1:][selected] = 1.0 / count
    return out


def ew_allocate(n: int) -> np.ndarray:
    if n < 1:
        raise ValidationError("need at least one risky asset")
    out = np.zeros(n + 1)
    out[1:] = 1.0 / n
    return out


def wmamr_step(weights, closes_window, rf_factor: float, epsilon: float = 5.0) -> np.ndarray:
    """Passive-aggressive update toward the moving-average reversion forecast.

    Predicted relatives: window-mean close over current close per asset,
    with the risk-free growth factor on the cash leg. No update when the
    forecast has zero cross-sectional variance.
    """
    w = np.asarray(weights, dtype=float)
    closes = np.atleast_2d(np.asarray(closes_window, dtype=float))
    if closes.shape[0] < 2:
        raise ValidationError("moving-average window needs at least 2 rows")
    xhat = np.empty(closes.shape[1] + 1)
    xhat[0] = rf_factor
    xhat[1:] = closes.mean(axis=0) / closes[-1]
    centered = xhat - xhat.mean()
    denom = float(centered @ centered)
    if denom <= 0:
        return simplex_project(w)
    tau = max(0.0, (epsilon - float(w @ xhat)) / denom)
    return simplex_project(w + tau * centered)


class EqualWeightStrategy:
    """1/n on every risky asset, rebalanced each step."""

    def __init__(self, series: OhlcSeries):
        self._weights = ew_allocate(series.n_assets)
        self.warmup = 1

    def act(self, t: int) -> np.ndarray:
        return self._weights.copy()


class WmamrStrategy:
    def __init__(self, series: OhlcSeries, ma_window: int = 5, epsilon: float = 5.0):
        self.series = series
        self.ma_window = ma_window
        self.epsilon = epsilon
        self.warmup = ma_window
        self._w = np.full(series.n_assets + 1, 1.0 / (series.n_assets + 1))

    def act(self, t: int) -> np.ndarray:
        window = self.series.close[t - self.ma_window + 1:t + 1]
        self._w = wmamr_step(self._w, window, self.series.risk_free_factor(), self.epsilon)
        return self._w.copy()


class ImvkStrategy:
    """Kd-crossover selection, optionally intersected with mean-variance signs.

    Selection is memoryless: each step re-allocates purely from the current
    signals, falling back to cash when nothing qualifies.
    """

    def __init__(self, series: OhlcSeries, mode: str = "aggressive",
                 rsv_window: int = 60, mv_window: int = 60):
        if mode not in ("aggressive", "moderate"):
            raise ValidationError(f"unknown selection mode '{mode}'")
        self.series = series
        self.mode = mode
        self.rsv_window = rsv_window
        self.mv_window = mv_window
        self.warmup = max(rsv_window, mv_window + 1 if mode == "moderate" else 0)
        self.states = [KdState() for _ in range(series.n_assets)]

    def act(self, t: int) -> np.ndarray:
        n = self.series.n_assets
        signals = np.zeros(n, dtype=bool)
        for i in range(n):
            window = self.series.close[max(0, t - self.rsv_window + 1):t + 1, i]
            self.states[i] = kd_update(self.states[i], rsv(window))
            if self.states[i].n_updates >= 2:
                signals[i] = buy_signal(self.states[i])
        mv = None
        if self.mode == "moderate":
            closes = self.series.close[t - self.mv_window:t + 1]
            mv = mean_variance_weights(closes[1:] / closes[:-1] - 1.0)
        return imvk_allocate(self.mode, signals, mv)


def make_benchmarks(series: OhlcSeries, names, rsv_window: int = 60,
                    ma_window: int = 5, wmamr_epsilon: float = 5.0) -> dict:
    out = {}
    for name in names:
        if name == "ew":
            out[name] = EqualWeightStrategy(series)
        elif name == "wmamr":
            out[name] = WmamrStrategy(series, ma_window=ma_window, epsilon=wmamr_epsilon)
        elif name == "imvk_aggressive":
            out[name] = ImvkStrategy(series, mode="aggressive", rsv_window=rsv_window,
                                     mv_window=rsv_window)
        elif name == "imvk_moderate":
            out[name] = ImvkStrategy(series, mode="moderate", rsv_window=rsv_window,
                                     mv_window=rsv_window)
        else:
            raise ValidationError(f"unknown benchmark '{name}'")
    return out
