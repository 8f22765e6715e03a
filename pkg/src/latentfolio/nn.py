"""Minimal hand-rolled layers with explicit backprop.

Every layer caches what its backward pass needs during forward and
accumulates parameter gradients into ``grads`` (same shapes as ``params``).
Conv layers use (batch, channels, length) layout; dense layers (batch, dim).
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError


class Layer:
    params: list
    grads: list

    def __init__(self):
        self.params = []
        self.grads = []

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0


def glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Dense(Layer):
    def __init__(self, in_dim, out_dim, rng):
        super().__init__()
        self.W = glorot(rng, (out_dim, in_dim), in_dim, out_dim)
        self.b = np.zeros(out_dim)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]

    def forward(self, x):
        self._x = x
        return x @ self.W.T + self.b

    def backward(self, dy):
        self.grads[0] += dy.T @ self._x
        self.grads[1] += dy.sum(axis=0)
        return dy @ self.W


class Conv1d(Layer):
    """Same-padded stride-1 cross-correlation; kernel width must be odd."""

    def __init__(self, c_in, c_out, kernel, rng):
        super().__init__()
        if kernel % 2 != 1:
            raise ValidationError("conv kernel width must be odd")
        self.kernel = kernel
        self.W = glorot(rng, (c_out, c_in, kernel), c_in * kernel, c_out * kernel)
        self.b = np.zeros(c_out)
        self.params = [self.W, self.b]
        self.grads = [np.zeros_like(self.W), np.zeros_like(self.b)]

    def forward(self, x):
        pad = self.kernel // 2
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        self._xp = xp
        L = x.shape[2]
        y = np.zeros((x.shape[0], self.W.shape[0], L))
        for dk in range(self.kernel):
            y += np.einsum("oc,bcl->bol", self.W[:, :, dk], xp[:, :, dk:dk + L])
        return y + self.b[None, :, None]

    def backward(self, dy):
        pad = self.kernel // 2
        L = dy.shape[2]
        dxp = np.zeros_like(self._xp)
        self.grads[1] += dy.sum(axis=(0, 2))
        for dk in range(self.kernel):
            self.grads[0][:, :, dk] += np.einsum("bol,bcl->oc", dy, self._xp[:, :, dk:dk + L])
            dxp[:, :, dk:dk + L] += np.einsum("oc,bol->bcl", self.W[:, :, dk], dy)
        return dxp[:, :, pad:pad + L]


class AvgPool1d(Layer):
    def __init__(self, factor: int = 2):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        B, C, L = x.shape
        if L % self.factor != 0:
            raise ValidationError(f"pool factor {self.factor} does not divide length {L}")
        return x.reshape(B, C, L // self.factor, self.factor).mean(axis=3)

    def backward(self, dy):
        return np.repeat(dy, self.factor, axis=2) / self.factor


class Upsample1d(Layer):
    def __init__(self, factor: int = 2):
        super().__init__()
        self.factor = factor

    def forward(self, x):
        return np.repeat(x, self.factor, axis=2)

    def backward(self, dy):
        B, C, L = dy.shape
        return dy.reshape(B, C, L // self.factor, self.factor).sum(axis=3)


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y**2)


class Relu(Layer):
    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return dy * self._mask


class Sigmoid(Layer):
    def forward(self, x):
        self._y = 1.0 / (1.0 + np.exp(-x))
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Identity(Layer):
    def forward(self, x):
        return x

    def backward(self, dy):
        return dy


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Reshape(Layer):
    """(batch, prod) -> (batch, *target)."""

    def __init__(self, target):
        super().__init__()
        self.target = tuple(target)

    def forward(self, x):
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, dy):
        return dy.reshape(dy.shape[0], -1)


ACTIVATIONS = {"tanh": Tanh, "relu": Relu, "sigmoid": Sigmoid, "linear": Identity}


def make_activation(name: str) -> Layer:
    try:
        return ACTIVATIONS[name]()
    except KeyError:
        raise ValidationError(f"unknown activation '{name}'") from None


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    @property
    def all_params(self):
        return [p for layer in self.layers for p in layer.params]

    @property
    def all_grads(self):
        return [g for layer in self.layers for g in layer.grads]

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()


def sgd_step(params, grads, lr: float):
    for p, g in zip(params, grads):
        p -= lr * g


class Adam:
    """Adaptive-moment steps; call apply(params, grads, lr) once per update."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = None
        self.v = None

    def apply(self, params, grads, lr: float):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def flatten_params(params) -> np.ndarray:
    return np.concatenate([p.ravel() for p in params]) if params else np.array([])


def check_gradients(loss_fn, params, grads, rng, n_coords: int = 40, step: float = 1e-5):
    """Max relative error of analytic grads vs central finite differences.

    ``grads`` must already hold the analytic gradient of ``loss_fn()`` at the
    current parameters. Coordinates are sampled without replacement across
    the flattened parameter vector.
    """
    sizes = [p.size for p in params]
    total = int(np.sum(sizes))
    count = min(n_coords, total)
    coords = rng.choice(total, size=count, replace=False)
    offsets = np.cumsum([0] + sizes)
    worst = 0.0
    for coord in coords:
        k = int(np.searchsorted(offsets, coord, side="right") - 1)
        idx = np.unravel_index(coord - offsets[k], params[k].shape)
        orig = params[k][idx]
        params[k][idx] = orig + step
        lp = loss_fn()
        params[k][idx] = orig - step
        lm = loss_fn()
        params[k][idx] = orig
        numeric = (lp - lm) / (2.0 * step)
        analytic = grads[k][idx]
        denom = max(abs(numeric) + abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
