"""Conditional Gaussian-Bernoulli RBM trained by contrastive divergence.

Visible units are Gaussian with fixed scale over min-max scaled return
windows; hidden units are Bernoulli. Autoregressive weights feed the
previous window into both bias vectors, which is the only place history
enters. Hidden activation probabilities are the extracted feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .container import load_container, save_container
from .errors import DivergenceError, ValidationError


@dataclass
class CrbmParams:
    W: np.ndarray            # (hidden, visible)
    a: np.ndarray            # visible bias
    b: np.ndarray            # hidden bias
    A: np.ndarray            # (visible, history) autoregressive visible-bias weights
    B: np.ndarray            # (hidden, history) autoregressive hidden-bias weights
    sigma: float = 1.0
    history_len: int = 1

    def __post_init__(self):
        for name in ("W", "a", "b", "A", "B"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        h, v = self.W.shape
        hist = v * self.history_len
        if self.a.shape != (v,) or self.b.shape != (h,):
            raise ValidationError("bias shapes do not match the weight matrix")
        if self.A.shape != (v, hist) or self.B.shape != (h, hist):
            raise ValidationError(f"autoregressive weights must map a length-{hist} history")
        if self.sigma <= 0:
            raise ValidationError("sigma must be positive")
        if not all(np.all(np.isfinite(getattr(self, n))) for n in ("W", "a", "b", "A", "B")):
            raise ValidationError("parameters contain non-finite entries")

    @property
    def n_visible(self) -> int:
        return self.W.shape[1]

    @property
    def n_hidden(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "CrbmParams":
        return CrbmParams(W=self.W.copy(), a=self.a.copy(), b=self.b.copy(),
                          A=self.A.copy(), B=self.B.copy(), sigma=self.sigma,
                          history_len=self.history_len)


@dataclass
class CdConfig:
    k: int = 1
    learning_rate: float = 0.05
    epochs: int = 50
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("contrastive divergence needs k >= 1")
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1:
            raise ValidationError("learning_rate/epochs must be >= 0 and batch_size >= 1")


def init_params(n_visible: int = 60, n_hidden: int = 30, history_len: int = 1,
                sigma: float = 1.0, seed: int = 0, weight_scale: float = 0.01) -> CrbmParams:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xCB]))
    hist = n_visible * history_len
    return CrbmParams(
        W=weight_scale * rng.standard_normal((n_hidden, n_visible)),
        a=np.zeros(n_visible), b=np.zeros(n_hidden),
        A=np.zeros((n_visible, hist)), B=np.zeros((n_hidden, hist)),
        sigma=sigma, history_len=history_len)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.clip(x, -500, 500)))


def dynamic_biases(params: CrbmParams, history):
    """History-shifted bias pair (a_t, b_t); zero history reduces to (a, b)."""
    hist = np.asarray(history, dtype=float)
    expected = params.n_visible * params.history_len
    if hist.shape[-1] != expected:
        raise ValidationError(f"history length {hist.shape[-1]}, expected {expected}")
    return params.a + hist @ params.A.T, params.b + hist @ params.B.T


def energy(params: CrbmParams, v, h, history) -> float:
    """Joint energy with the Gaussian quadratic term on the visible layer."""
    a_t, b_t = dynamic_biases(params, history)
    v = np.asarray(v, dtype=float)
    h = np.asarray(h, dtype=float)
    s2 = params.sigma**2
    return float(np.sum((v - a_t) ** 2) / (2 * s2) - b_t @ h - h @ params.W @ (v / s2))


def hidden_given_visible(params: CrbmParams, v, history) -> np.ndarray:
    """Bernoulli activation means of the hidden layer."""
    v = np.asarray(v, dtype=float)
    _, b_t = dynamic_biases(params, history)
    return _sigmoid(b_t + (v / params.sigma**2) @ params.W.T)


def visible_given_hidden(params: CrbmParams, h, history, rng=None):
    """(sample, mean) of the Gaussian visible layer given hidden states."""
    h = np.asarray(h, dtype=float)
    a_t, _ = dynamic_biases(params, history)
    mean = a_t + h @ params.W
    if rng is None:
        return mean.copy(), mean
    return mean + params.sigma * rng.standard_normal(mean.shape), mean


def cd_k_update(params: CrbmParams, v_batch, hist_batch, config: CdConfig, rng) -> float:
    """One contrastive-divergence gradient step on a batch, in place.

    Positive statistics come from the data, negative from k alternating
    Gibbs passes. Returns the batch mean squared reconstruction error of
    the one-step visible means (a cheap training progress proxy).
    """
    v0 = np.atleast_2d(np.asarray(v_batch, dtype=float))
    hist = np.atleast_2d(np.asarray(hist_batch, dtype=float))
    if v0.shape[0] == 0:
        raise ValidationError("empty batch")
    B = v0.shape[0]
    s2 = params.sigma**2
    a_t, b_t = dynamic_biases(params, hist)

    ph0 = _sigmoid(b_t + (v0 / s2) @ params.W.T)
    h = (rng.random(ph0.shape) < ph0).astype(float)
    vk = v0
    recon = None
    for _ in range(config.k):
        mean_v = a_t + h @ params.W
        if recon is None:
            recon = mean_v
        vk = mean_v + params.sigma * rng.standard_normal(mean_v.shape)
        phk = _sigmoid(b_t + (vk / s2) @ params.W.T)
        h = (rng.random(phk.shape) < phk).astype(float)

    lr = config.learning_rate / B
    dW = ph0.T @ (v0 / s2) - phk.T @ (vk / s2)
    da = np.sum((v0 - vk) / s2, axis=0)
    db = np.sum(ph0 - phk, axis=0)
    params.W += lr * dW
    params.a += lr * da
    params.b += lr * db
    params.A += lr * ((v0 - vk) / s2).T @ hist
    params.B += lr * (ph0 - phk).T @ hist
    for name in ("W", "a", "b", "A", "B"):
        if not np.all(np.isfinite(getattr(params, name))):
            raise DivergenceError("contrastive divergence produced non-finite parameters")
    return float(np.mean(np.sum((v0 - recon) ** 2, axis=1)))


def train(params: CrbmParams, v_data, hist_data, config: CdConfig):
    """Epochs of seeded mini-batch CD; returns (params, reconstruction history)."""
    v = np.atleast_2d(np.asarray(v_data, dtype=float))
    hist = np.atleast_2d(np.asarray(hist_data, dtype=float))
    if v.shape[0] != hist.shape[0]:
        raise ValidationError("visible and history sample counts differ")
    if v.shape[0] < config.batch_size:
        raise ValidationError(f"need at least batch_size={config.batch_size} samples")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xCB, 1]))
    history = []
    for _ in range(config.epochs):
        order = rng.permutation(v.shape[0])
        errs = []
        for start in range(0, v.shape[0] - config.batch_size + 1, config.batch_size):
            sel = order[start:start + config.batch_size]
            errs.append(cd_k_update(params, v[sel], hist[sel], config, rng))
        history.append(float(np.mean(errs)))
    return params, history


def feature(params: CrbmParams, window, history) -> np.ndarray:
    """Deterministic latent feature: hidden activation means, each in (0, 1)."""
    return hidden_given_visible(params, window, history)


def save_params(params: CrbmParams, path, extra_meta: dict | None = None) -> None:
    meta = {"sigma": params.sigma, "history_len": params.history_len}
    meta.update(extra_meta or {})
    save_container(path, "crbm", meta,
                   {"W": params.W, "a": params.a, "b": params.b,
                    "A": params.A, "B": params.B})


def load_params(path) -> CrbmParams:
    _, meta, arrays = load_container(path, "crbm")
    return CrbmParams(W=arrays["W"], a=arrays["a"], b=arrays["b"],
                      A=arrays["A"], B=arrays["B"],
                      sigma=float(meta["sigma"]), history_len=int(meta["history_len"]))
