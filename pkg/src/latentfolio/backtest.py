"""Transaction-cost-aware portfolio accounting and performance metrics.

Portfolio value compounds multiplicatively through the log reward, so the
identity pv_end = pv_0 * exp(sum of rewards) holds to rounding. Metrics
follow the conventions documented on each function; where the literature
is ambiguous (annualized return) both conventions are computed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import reward
from .errors import BankruptcyError, ValidationError
from .market_data import OhlcSeries, price_relatives
from .state import uniform_weights


@dataclass
class BacktestResult:
    pv: np.ndarray            # (steps+1,) portfolio value, pv[0] = initial capital
    rewards: np.ndarray       # (steps,) per-step log rewards
    weights: np.ndarray       # (steps, n+1) action taken each step
    turnover: np.ndarray      # (steps,) sum |a - w_prev| per step
    start_index: int
    periods_per_year: int
    bankrupt: bool = False

    @property
    def steps(self) -> int:
        return len(self.rewards)

    def step_returns(self) -> np.ndarray:
        return self.pv[1:] / self.pv[:-1] - 1.0


def run_backtest(strategy, series: OhlcSeries, cost: float = 0.002,
                 pv0: float = 10000.0, start: int | None = None,
                 initial_weights=None, action_sink: list | None = None) -> BacktestResult:
    """Drive a strategy over the series, charging cost on every rebalance.

    At each step the strategy is asked for an allocation, the log reward is
    realized against the next period's price relatives, and the allocation
    becomes the held weights. A bankruptcy (cost exceeding gross return)
    halts the run and returns the partial trajectory flagged.
    """
    T = len(series)
    start = strategy.warmup if start is None else start
    if start < strategy.warmup:
        raise ValidationError(f"start {start} is inside the strategy warmup {strategy.warmup}")
    if start > T - 2:
        raise ValidationError("series too short for the strategy warmup")
    w = uniform_weights(series.n_assets) if initial_weights is None \
        else np.asarray(initial_weights, dtype=float)
    pv = [float(pv0)]
    rewards, weights, turnover = [], [], []
    bankrupt = False
    for t in range(start, T - 1):
        action = np.asarray(strategy.act(t), dtype=float)
        if action_sink is not None:
            action_sink.append(action.copy())
        y = price_relatives(series, t + 1).values
        try:
            r = reward(action, y, w, cost)
        except BankruptcyError:
            bankrupt = True
            break
        rewards.append(r)
        weights.append(action)
        turnover.append(float(np.sum(np.abs(action - w))))
        pv.append(pv[-1] * math.exp(r))
        w = action
    return BacktestResult(pv=np.array(pv), rewards=np.array(rewards),
                          weights=np.array(weights) if weights else np.zeros((0, series.n_assets + 1)),
                          turnover=np.array(turnover), start_index=start,
                          periods_per_year=series.periods_per_year, bankrupt=bankrupt)


def annual_return(result: BacktestResult, periods_per_year: int | None = None) -> float:
    """Geometric annualization of the whole trajectory."""
    ppy = periods_per_year or result.periods_per_year
    if len(result.pv) < 2:
        raise ValidationError("need at least 2 portfolio values")
    steps = len(result.pv) - 1
    return float((result.pv[-1] / result.pv[0]) ** (ppy / steps) - 1.0)


def annual_return_arithmetic(result: BacktestResult, periods_per_year: int | None = None) -> float:
    """Mean per-step simple return scaled by periods per year."""
    ppy = periods_per_year or result.periods_per_year
    return float(result.step_returns().mean() * ppy)


def annual_volatility(result: BacktestResult, periods_per_year: int | None = None) -> float:
    """Population standard deviation of per-step simple returns, annualized."""
    ppy = periods_per_year or result.periods_per_year
    rets = result.step_returns()
    if rets.size < 3:
        raise ValidationError("need at least 3 steps for a volatility estimate")
    return float(rets.std(ddof=0) * math.sqrt(ppy))


def sharpe_ratio(annual_ret: float, annual_vol: float) -> float:
    """Zero-risk-free Sharpe: annual return over annual volatility."""
    if annual_vol <= 0:
        return math.nan
    return annual_ret / annual_vol


def sharpe(result: BacktestResult) -> float:
    """Arithmetic annual return over annualized volatility; NaN if vol is zero."""
    return sharpe_ratio(annual_return_arithmetic(result), annual_volatility(result))


def downside_deviation(result: BacktestResult, periods_per_year: int | None = None) -> float:
    """Root mean square of negative step returns (full-count denominator), annualized."""
    ppy = periods_per_year or result.periods_per_year
    rets = result.step_returns()
    neg = np.minimum(rets, 0.0)
    return float(math.sqrt(float(np.mean(neg**2))) * math.sqrt(ppy))


def sortino(result: BacktestResult) -> float:
    """Arithmetic annual return over downside deviation; NaN with no down steps."""
    dd = downside_deviation(result)
    if dd <= 0:
        return math.nan
    return annual_return_arithmetic(result) / dd


def metrics(result: BacktestResult) -> dict:
    """All reported metrics for one run; NaNs mark undefined ratios."""
    return {
        "pv_end": float(result.pv[-1]),
        "annual_return_geometric": annual_return(result),
        "annual_return_arithmetic": annual_return_arithmetic(result),
        "annual_volatility": annual_volatility(result),
        "sharpe": sharpe(result),
        "sortino": sortino(result),
        "turnover_total": float(result.turnover.sum()),
        "bankrupt": result.bankrupt,
    }
