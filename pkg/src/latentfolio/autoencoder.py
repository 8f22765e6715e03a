"""Encoder-decoder feature extractor with hand-rolled backprop.

Two variants: a dense mirror-image stack and a 1-D convolutional stack
(conv+pool twice down, upsample+conv twice back up). Inputs are per-window
min-max scaled return windows; the latent code is the extracted feature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .container import load_container, save_container
from .errors import DivergenceError, ValidationError


@dataclass
class AeTopology:
    variant: str = "dense"             # 'dense' | 'conv'
    input_dim: int = 60
    latent_dim: int = 30
    hidden: tuple = (45,)              # dense variant only
    conv_channels: int = 4             # first-stage channels, conv variant
    kernel: int = 3
    activation: str = "tanh"           # 'tanh' | 'relu' | 'linear'
    sigmoid_output: bool = True

    def __post_init__(self):
        if self.variant not in ("dense", "conv"):
            raise ValidationError(f"unknown autoencoder variant '{self.variant}'")
        if self.latent_dim >= self.input_dim:
            raise ValidationError(
                f"latent_dim {self.latent_dim} must be smaller than input_dim "
                f"{self.input_dim}; an identity-capable bottleneck learns nothing")
        if self.latent_dim < 1:
            raise ValidationError("latent_dim must be positive")
        if self.variant == "conv":
            if self.input_dim % 4 != 0:
                raise ValidationError("conv variant needs input_dim divisible by 4")
            if self.latent_dim % (self.input_dim // 4) != 0:
                raise ValidationError(
                    f"conv variant needs latent_dim to be a multiple of input_dim/4 "
                    f"= {self.input_dim // 4}")

    @property
    def bottleneck_channels(self) -> int:
        return self.latent_dim // (self.input_dim // 4)


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.05
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.learning_rate < 0 or self.batch_size < 1:
            raise ValidationError("epochs/learning_rate must be >= 0 and batch_size >= 1")


class Autoencoder:
    """Mirrored encoder/decoder; weights are immutable after training."""

    def __init__(self, topology: AeTopology, seed: int = 0):
        self.topology = topology
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xAE]))
        act = topology.activation
        if topology.variant == "dense":
            sizes = (topology.input_dim, *topology.hidden, topology.latent_dim)
            enc = []
            for a, b in zip(sizes[:-1], sizes[1:]):
                enc += [nn.Dense(a, b, rng), nn.make_activation(act)]
            dec = []
            rsizes = sizes[::-1]
            for a, b in zip(rsizes[:-2], rsizes[1:-1]):
                dec += [nn.Dense(a, b, rng), nn.make_activation(act)]
            dec += [nn.Dense(rsizes[-2], rsizes[-1], rng)]
        else:
            c1 = topology.conv_channels
            c2 = topology.bottleneck_channels
            k = topology.kernel
            enc = [
                nn.Reshape((1, topology.input_dim)),
                nn.Conv1d(1, c1, k, rng), nn.make_activation(act), nn.AvgPool1d(2),
                nn.Conv1d(c1, c2, k, rng), nn.make_activation(act), nn.AvgPool1d(2),
                nn.Flatten(),
            ]
            dec = [
                nn.Reshape((c2, topology.input_dim // 4)),
                nn.Upsample1d(2), nn.Conv1d(c2, c1, k, rng), nn.make_activation(act),
                nn.Upsample1d(2), nn.Conv1d(c1, 1, k, rng),
                nn.Flatten(),
            ]
        dec.append(nn.Sigmoid() if topology.sigmoid_output else nn.Identity())
        self.encoder = nn.Sequential(enc)
        self.decoder = nn.Sequential(dec)

    @property
    def params(self):
        return self.encoder.all_params + self.decoder.all_params

    @property
    def grads(self):
        return self.encoder.all_grads + self.decoder.all_grads

    def _as_batch(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return x[None, :], True
        return x, False

    def encode(self, window):
        x, single = self._as_batch(window)
        if x.shape[1] != self.topology.input_dim:
            raise ValidationError(
                f"window length {x.shape[1]} does not match input_dim {self.topology.input_dim}")
        code = self.encoder.forward(x)
        return code[0] if single else code

    def decode(self, code):
        z, single = self._as_batch(code)
        if z.shape[1] != self.topology.latent_dim:
            raise ValidationError(
                f"code length {z.shape[1]} does not match latent_dim {self.topology.latent_dim}")
        recon = self.decoder.forward(z)
        return recon[0] if single else recon

    def reconstruct(self, window):
        return self.decode(self.encode(window))

    def reconstruction_loss(self, batch) -> float:
        """Mean over the batch of the squared reconstruction norm."""
        x, _ = self._as_batch(batch)
        if x.shape[0] == 0:
            raise ValidationError("empty batch")
        recon = self.reconstruct(x)
        return float(np.mean(np.sum((x - recon) ** 2, axis=1)))

    def _loss_and_backward(self, x) -> float:
        recon = self.decoder.forward(self.encoder.forward(x))
        diff = recon - x
        loss = float(np.mean(np.sum(diff**2, axis=1)))
        drecon = 2.0 * diff / x.shape[0]
        self.encoder.backward(self.decoder.backward(drecon))
        return loss

    def zero_grads(self):
        self.encoder.zero_grads()
        self.decoder.zero_grads()

    def save(self, path, extra_meta: dict | None = None):
        meta = {
            "topology": {
                "variant": self.topology.variant,
                "input_dim": self.topology.input_dim,
                "latent_dim": self.topology.latent_dim,
                "hidden": list(self.topology.hidden),
                "conv_channels": self.topology.conv_channels,
                "kernel": self.topology.kernel,
                "activation": self.topology.activation,
                "sigmoid_output": self.topology.sigmoid_output,
            },
            "seed": self.seed,
        }
        meta.update(extra_meta or {})
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        save_container(path, "autoencoder", meta, arrays)

    @classmethod
    def load(cls, path) -> "Autoencoder":
        _, meta, arrays = load_container(path, "autoencoder")
        topo = meta["topology"]
        topo["hidden"] = tuple(topo["hidden"])
        ae = cls(AeTopology(**topo), seed=meta["seed"])
        for i, p in enumerate(ae.params):
            stored = arrays[f"p{i}"]
            if stored.shape != p.shape:
                raise ValidationError(f"stored parameter {i} has shape {stored.shape}, expected {p.shape}")
            p[...] = stored
        return ae


def train(topology: AeTopology, config: TrainConfig, windows,
          plateau_delta: float = 1e-6, plateau_epochs: int = 10):
    """Mini-batch SGD on the squared reconstruction norm.

    Returns (autoencoder, per-epoch loss history). Deterministic for a
    fixed seed; raises DivergenceError naming the epoch if loss goes NaN.
    Stops early once the epoch loss moves less than plateau_delta for
    plateau_epochs consecutive epochs.
    """
    data = np.asarray(windows, dtype=float)
    if data.ndim != 2 or data.shape[1] != topology.input_dim:
        raise ValidationError(f"windows must be (N, {topology.input_dim})")
    if data.shape[0] < config.batch_size:
        raise ValidationError(
            f"need at least batch_size={config.batch_size} windows, got {data.shape[0]}")
    ae = Autoencoder(topology, seed=config.seed)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xAE, 1]))
    history = []
    calm = 0
    for epoch in range(config.epochs):
        order = rng.permutation(data.shape[0])
        losses = []
        for start in range(0, data.shape[0] - config.batch_size + 1, config.batch_size):
            batch = data[order[start:start + config.batch_size]]
            ae.zero_grads()
            loss = ae._loss_and_backward(batch)
            if not np.isfinite(loss):
                raise DivergenceError(f"training diverged at epoch {epoch}")
            nn.sgd_step(ae.params, ae.grads, config.learning_rate)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if len(history) >= 2 and abs(history[-1] - history[-2]) < plateau_delta:
            calm += 1
            if calm >= plateau_epochs:
                break
        else:
            calm = 0
    return ae, history


def gradient_check(ae: Autoencoder, windows, n_coords: int = 40, step: float = 1e-5,
                   seed: int = 0) -> float:
    """Compare analytic gradients against central differences on one batch."""
    x, _ = ae._as_batch(windows)
    ae.zero_grads()
    ae._loss_and_backward(x)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xFD]))
    return nn.check_gradients(
        lambda: float(np.mean(np.sum((ae.reconstruct(x) - x) ** 2, axis=1))),
        ae.params, ae.grads, rng, n_coords=n_coords, step=step)
