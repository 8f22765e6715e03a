"""Observation assembly: covariance block + latent feature block + held weights.

A FeatureContext bundles the series, the (optionally filtered) return
panel, and whichever extractor is active. States are cached per time index
because only the previous-weights slot changes between training passes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import crbm as crbm_mod
from . import zoomsvd
from .autoencoder import Autoencoder
from .errors import InsufficientHistoryError, ValidationError
from .market_data import OhlcSeries, log_returns, ohlc_tensor
from .windows import minmax_scale

EXTRACTORS = ("autoencoder", "zoomsvd", "crbm", "none")


@dataclass
class CovarianceFeature:
    """Per-channel sample covariance of trailing returns, (n, n, C)."""

    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.ndim != 3 or self.matrices.shape[0] != self.matrices.shape[1]:
            raise ValidationError("covariance block must be (n, n, C)")


@dataclass
class StateTensor:
    cov_block: CovarianceFeature
    latent_block: np.ndarray       # (n, d, 3); d is extractor-dependent
    prev_weights: np.ndarray       # (n+1,) simplex

    def __post_init__(self):
        self.prev_weights = np.asarray(self.prev_weights, dtype=float)
        if abs(self.prev_weights.sum() - 1.0) > 1e-10 or np.any(self.prev_weights < -1e-12):
            raise ValidationError("prev_weights must lie on the simplex")
        if not np.all(np.isfinite(self.latent_block)) or not np.all(np.isfinite(self.cov_block.matrices)):
            raise ValidationError("state blocks contain non-finite entries")


def covariance_feature(returns_window: np.ndarray) -> CovarianceFeature:
    """Sample covariance (denominator m-1) per channel of an (m, n, C) window."""
    w = np.asarray(returns_window, dtype=float)
    if w.ndim == 2:
        w = w[:, :, None]
    m = w.shape[0]
    if m < 2:
        raise ValidationError("covariance needs at least 2 rows")
    centered = w - w.mean(axis=0, keepdims=True)
    out = np.einsum("mic,mjc->ijc", centered, centered) / (m - 1)
    return CovarianceFeature(0.5 * (out + out.transpose(1, 0, 2)))


@dataclass
class FeatureContext:
    series: OhlcSeries
    window: int
    extractor: str = "none"
    filtering: bool = True
    returns: np.ndarray | None = None          # (T-1, n, 3): filtered if filtering else raw
    autoencoder: Autoencoder | None = None
    stores: tuple | None = None                # one BlockStore per channel
    crbm: crbm_mod.CrbmParams | None = None
    cov_channels: int = 3                      # 3 or 1 (close only)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.extractor not in EXTRACTORS:
            raise ValidationError(f"unknown extractor '{self.extractor}'; expected one of {EXTRACTORS}")
        if self.cov_channels not in (1, 3):
            raise ValidationError("cov_channels must be 1 (close only) or 3")
        if self.returns is None:
            if self.filtering:
                raise ValidationError("filtering is on but no filtered returns were supplied")
            self.returns = log_returns(self.series)
        self.returns = np.asarray(self.returns, dtype=float)
        if self.returns.shape != (len(self.series) - 1, self.series.n_assets, 3):
            raise ValidationError("returns panel shape does not match the series")

    @property
    def n_assets(self) -> int:
        return self.series.n_assets

    @property
    def warmup(self) -> int:
        return 2 * self.window if self.extractor == "crbm" else self.window

    @property
    def latent_dim(self) -> int:
        if self.extractor == "autoencoder":
            return self.autoencoder.topology.latent_dim
        if self.extractor == "crbm":
            return self.crbm.n_hidden
        if self.extractor == "zoomsvd":
            return self.n_assets
        return self.window

    def blocks(self, t: int):
        """(cov, latent) for index t, cached; prev_weights are attached later."""
        if t not in self._cache:
            self._cache[t] = (self._cov_block(t), self._latent_block(t))
        return self._cache[t]

    def _window_rows(self, t: int) -> np.ndarray:
        m = self.window
        if t < m:
            raise InsufficientHistoryError(f"state at t={t} needs {m} return rows")
        if t > self.returns.shape[0]:
            raise IndexError(f"t={t} beyond available returns")
        return self.returns[t - m:t]

    def _cov_block(self, t: int) -> CovarianceFeature:
        rows = self._window_rows(t)
        if self.cov_channels == 1:
            return covariance_feature(rows[:, :, :1])
        return covariance_feature(rows)

    def _scaled_windows(self, t: int, offset: int = 0) -> np.ndarray:
        """(n, m, 3) per-asset scaled windows ending at return row t - offset."""
        rows = self.returns[t - offset - self.window:t - offset]
        n = self.n_assets
        out = np.empty((n, self.window, 3))
        for c in range(3):
            out[:, :, c] = minmax_scale(rows[:, :, c].T)
        return out

    def _latent_block(self, t: int) -> np.ndarray:
        n, m = self.n_assets, self.window
        kind = self.extractor
        if kind == "none":
            return ohlc_tensor(self.series, t, m).stacked()
        if kind == "autoencoder":
            if self.autoencoder is None:
                raise ValidationError("autoencoder extractor selected but not trained")
            scaled = self._scaled_windows(t)
            out = np.empty((n, self.autoencoder.topology.latent_dim, 3))
            for c in range(3):
                out[:, :, c] = self.autoencoder.encode(scaled[:, :, c])
            return out
        if kind == "crbm":
            if self.crbm is None:
                raise ValidationError("crbm extractor selected but not trained")
            if t < 2 * m:
                raise InsufficientHistoryError(f"crbm state at t={t} needs {2 * m} return rows")
            scaled = self._scaled_windows(t)
            hist = self._scaled_windows(t, offset=m)
            out = np.empty((n, self.crbm.n_hidden, 3))
            for c in range(3):
                out[:, :, c] = crbm_mod.feature(self.crbm, scaled[:, :, c], hist[:, :, c])
            return out
        if self.stores is None:
            raise ValidationError("zoomsvd extractor selected but no block stores built")
        out = np.empty((n, n, 3))
        for c in range(3):
            # columns of the scaled right factor are per-asset loadings
            out[:, :, c] = zoomsvd.feature(self.stores[c], t - 1, m).T
        return out


def build_state(ctx: FeatureContext, t: int, prev_weights) -> StateTensor:
    """Assemble the full observation for time t."""
    cov, latent = ctx.blocks(t)
    return StateTensor(cov_block=cov, latent_block=latent, prev_weights=np.asarray(prev_weights, dtype=float))


def uniform_weights(n_assets: int) -> np.ndarray:
    return np.full(n_assets + 1, 1.0 / (n_assets + 1))
