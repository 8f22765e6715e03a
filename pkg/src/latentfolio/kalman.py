"""Linear-Gaussian state estimation for cleaning return series.

The filtering unit runs a scalar local-level model (state transition and
measurement maps both identity) over each asset's log returns; filtered
prices are rebuilt by compounding filtered returns from the first price.
All covariance math is general-matrix, so richer models fit the same API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError

NOISE_FLOOR = 1e-12


@dataclass
class KalmanModel:
    F: np.ndarray      # state transition
    G: np.ndarray      # measurement map
    Q: np.ndarray      # state-noise covariance
    R: np.ndarray      # measurement-noise covariance
    mu0: np.ndarray    # initial state mean
    P0: np.ndarray     # initial state covariance

    def __post_init__(self):
        for name in ("F", "G", "Q", "R", "P0"):
            setattr(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        self.mu0 = np.atleast_1d(np.asarray(self.mu0, dtype=float))
        s = self.F.shape[0]
        d = self.G.shape[0]
        if self.F.shape != (s, s) or self.G.shape != (d, s):
            raise ValidationError("F must be square and G must map state to measurement")
        if self.Q.shape != (s, s) or self.P0.shape != (s, s) or self.R.shape != (d, d):
            raise ValidationError("Q/P0 must be state-sized and R measurement-sized")
        if self.mu0.shape != (s,):
            raise ValidationError("mu0 length must match the state dimension")
        for name in ("Q", "R", "P0"):
            mat = getattr(self, name)
            if not np.allclose(mat, mat.T, atol=1e-10):
                raise ValidationError(f"{name} must be symmetric")
            if np.min(np.linalg.eigvalsh(mat)) < -1e-10:
                raise ValidationError(f"{name} must be positive semi-definite")

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]

    @property
    def meas_dim(self) -> int:
        return self.G.shape[0]


def local_level(q: float, r: float, mu0: float = 0.0, p0: float = 1.0) -> KalmanModel:
    """Scalar random-walk-plus-noise model."""
    one = np.array([[1.0]])
    return KalmanModel(F=one, G=one, Q=np.array([[q]]), R=np.array([[r]]),
                       mu0=np.array([mu0]), P0=np.array([[p0]]))


@dataclass
class FilterResult:
    states: np.ndarray        # (T, s) posterior means
    covariances: np.ndarray   # (T, s, s) posterior covariances
    innovations: np.ndarray   # (T, d)
    gains: np.ndarray         # (T, s, d)


def _symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def kalman_step(model: KalmanModel, prior_mean, prior_cov, measurement):
    """One predict-update cycle from the previous posterior.

    Returns (posterior_mean, posterior_cov, innovation, gain). The updated
    covariance is symmetrized; a singular innovation covariance raises
    NumericalError because it signals a degenerate model.
    """
    x = np.atleast_1d(np.asarray(prior_mean, dtype=float))
    P = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    y = np.atleast_1d(np.asarray(measurement, dtype=float))
    F, G, Q, R = model.F, model.G, model.Q, model.R

    x_pred = F @ x
    P_pred = _symmetrize(F @ P @ F.T + Q)
    innovation = y - G @ x_pred
    S = G @ P_pred @ G.T + R
    try:
        gain = np.linalg.solve(S.T, (P_pred @ G.T).T).T
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular innovation covariance; model is degenerate") from exc
    if not np.all(np.isfinite(gain)):
        raise NumericalError("non-finite Kalman gain; model is degenerate")
    post_mean = x_pred + gain @ innovation
    post_cov = _symmetrize((np.eye(model.state_dim) - gain @ G) @ P_pred)
    return post_mean, post_cov, innovation, gain


def filter_series(model: KalmanModel, measurements) -> FilterResult:
    """Fold kalman_step over a measurement sequence starting from (mu0, P0)."""
    ys = np.atleast_2d(np.asarray(measurements, dtype=float))
    if ys.shape[0] == 0:
        raise ValidationError("measurement sequence is empty")
    if ys.ndim == 2 and ys.shape[1] != model.meas_dim:
        ys = ys.reshape(-1, model.meas_dim)
    T = ys.shape[0]
    states = np.empty((T, model.state_dim))
    covs = np.empty((T, model.state_dim, model.state_dim))
    innovations = np.empty((T, model.meas_dim))
    gains = np.empty((T, model.state_dim, model.meas_dim))
    x, P = model.mu0, model.P0
    for t in range(T):
        x, P, innovations[t], gains[t] = kalman_step(model, x, P, ys[t])
        states[t], covs[t] = x, P
    return FilterResult(states=states, covariances=covs, innovations=innovations, gains=gains)


def fit_noise_params(measurements, kappa: float = 0.1):
    """Heuristic (Q, R) for the scalar local-level model.

    R is half the sample variance of first differences (differencing a
    noisy level doubles the measurement-noise variance); Q scales off R.
    Both are floored so the filter stays defined on constant series.
    """
    ys = np.asarray(measurements, dtype=float).ravel()
    if ys.size < 10:
        raise ValidationError(f"need at least 10 measurements to fit noise, got {ys.size}")
    if kappa < 0:
        raise ValidationError("kappa must be non-negative")
    r = float(np.var(np.diff(ys), ddof=1)) / 2.0
    if r <= NOISE_FLOOR:
        return NOISE_FLOOR, NOISE_FLOOR   # degenerate clamp keeps the filter defined
    return kappa * r, r


def filter_panel(returns: np.ndarray, kappa: float = 0.1, fit_rows: int | None = None):
    """Filter each (asset, channel) return series with its own local-level model.

    returns: (T, n, C) raw log returns. Noise parameters are estimated on
    the first ``fit_rows`` rows only (default: all rows), so a train/test
    split can exclude look-ahead. Returns (filtered, params) where params
    has shape (n, C, 2) holding (Q, R) per series.
    """
    rets = np.asarray(returns, dtype=float)
    squeeze = rets.ndim == 2
    if squeeze:
        rets = rets[:, :, None]
    T, n, C = rets.shape
    rows = T if fit_rows is None else int(fit_rows)
    filtered = np.empty_like(rets)
    params = np.empty((n, C, 2))
    for i in range(n):
        for c in range(C):
            series = rets[:, i, c]
            q, r = fit_noise_params(series[:rows], kappa)
            model = local_level(q, r, mu0=series[0], p0=r)
            filtered[:, i, c] = filter_series(model, series).states[:, 0]
            params[i, c] = (q, r)
    if squeeze:
        return filtered[:, :, 0], params[:, 0]
    return filtered, params


def rebuild_prices(first_prices: np.ndarray, filtered_returns: np.ndarray) -> np.ndarray:
    """Compound filtered log returns from the first observed prices.

    first_prices: (n,) or (n, C); filtered_returns: (T-1, n) or (T-1, n, C).
    Returns the (T, ...) filtered price panel.
    """
    first = np.asarray(first_prices, dtype=float)
    rets = np.asarray(filtered_returns, dtype=float)
    out = np.empty((rets.shape[0] + 1,) + first.shape)
    out[0] = first
    out[1:] = first * np.exp(np.cumsum(rets, axis=0))
    return out
