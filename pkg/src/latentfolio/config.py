"""Run configuration: a flat key = value file with strict key checking.

Unknown keys are rejected rather than silently ignored so typos cannot
quietly fall back to defaults. Environment variables LATENTFOLIO_SEED and
LATENTFOLIO_OUTDIR override their fields; nothing else is overridable.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ValidationError

BENCHMARK_CHOICES = ("ew", "wmamr", "imvk_aggressive", "imvk_moderate")
EXTRACTOR_CHOICES = ("autoencoder", "zoomsvd", "crbm", "none")


@dataclass
class RunConfig:
    # data source: a CSV path, or a synthetic spec when the path is empty
    data_csv: str = ""
    synth_seed: int = 7
    synth_assets: int = 15
    synth_length: int = 800
    synth_drift: tuple = (0.08,)
    synth_vol: tuple = (0.2,)
    risk_free_annual: float = 0.0005
    periods_per_year: int = 252
    # pipeline
    split_fraction: float = 0.7
    window: int = 60
    filtering: bool = True
    kalman_kappa: float = 0.1
    extractor: str = "autoencoder"
    cov_close_only: bool = False
    # extractor hyperparameters
    latent_dim: int = 30
    ae_variant: str = "dense"
    ae_hidden: tuple = (45,)
    ae_epochs: int = 100
    ae_learning_rate: float = 0.05
    ae_batch_size: int = 32
    window_stride: int = 1
    crbm_epochs: int = 50
    crbm_learning_rate: float = 0.05
    crbm_cd_k: int = 1
    crbm_history_len: int = 1
    block_size: int = 60
    # agent
    gamma: float = 0.99
    learning_rate: float = 0.01
    batch_size: int = 32
    episodes: int = 40
    exploration_init: float = 0.2
    exploration_decay: float = 0.95
    optimizer: str = "adam"
    # backtest
    benchmarks: tuple = ("ew", "wmamr", "imvk_aggressive", "imvk_moderate")
    cost: float = 0.002
    pv0: float = 10000.0
    rsv_window: int = 60
    wmamr_ma_window: int = 5
    wmamr_epsilon: float = 5.0
    # run
    seed: int = 0
    outdir: str = "runs/default"

    def validate(self) -> None:
        if self.data_csv and not Path(self.data_csv).exists():
            raise ValidationError(f"data_csv '{self.data_csv}' does not exist")
        checks = [
            (0.0 < self.split_fraction < 1.0, "split_fraction must lie in (0, 1)"),
            (self.window >= 2, "window must be >= 2"),
            (self.extractor in EXTRACTOR_CHOICES, f"extractor must be one of {EXTRACTOR_CHOICES}"),
            (self.latent_dim >= 1, "latent_dim must be >= 1"),
            (self.block_size >= 1, "block_size must be >= 1"),
            (0.0 < self.gamma <= 1.0, "gamma must lie in (0, 1]"),
            (self.learning_rate >= 0, "learning_rate must be >= 0"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (self.episodes >= 0, "episodes must be >= 0"),
            (self.cost >= 0, "cost must be >= 0"),
            (self.pv0 > 0, "pv0 must be positive"),
            (self.synth_assets >= 1, "synth_assets must be >= 1"),
            (self.synth_length >= 2, "synth_length must be >= 2"),
            (self.periods_per_year >= 1, "periods_per_year must be >= 1"),
            (self.kalman_kappa >= 0, "kalman_kappa must be >= 0"),
            (0.0 <= self.exploration_init <= 1.0, "exploration_init must lie in [0, 1]"),
            (0.0 < self.exploration_decay <= 1.0, "exploration_decay must lie in (0, 1]"),
            (self.ae_variant in ("dense", "conv"), "ae_variant must be dense or conv"),
            (self.optimizer in ("sgd", "adam"), "optimizer must be sgd or adam"),
            (self.window_stride >= 1, "window_stride must be >= 1"),
            (self.crbm_cd_k >= 1, "crbm_cd_k must be >= 1"),
            (self.crbm_history_len >= 1, "crbm_history_len must be >= 1"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValidationError(message)
        for name in self.benchmarks:
            if name not in BENCHMARK_CHOICES:
                raise ValidationError(f"unknown benchmark '{name}'; choices: {BENCHMARK_CHOICES}")
        if self.extractor != "none" and self.latent_dim >= self.window:
            raise ValidationError("latent_dim must be smaller than window")

    def canonical_lines(self, for_hash: bool = False) -> list:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            if for_hash and f.name == "outdir":
                continue   # the output location does not change what is computed
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return lines

    def hash(self) -> str:
        digest = hashlib.sha256("\n".join(self.canonical_lines(for_hash=True)).encode()).hexdigest()
        return digest[:16]

    def dump(self, path) -> None:
        Path(path).write_text("\n".join(self.canonical_lines()) + "\n", encoding="utf-8")


_BOOL_FIELDS = {"filtering", "cov_close_only"}
_TUPLE_FLOAT_FIELDS = {"synth_drift", "synth_vol"}
_TUPLE_INT_FIELDS = {"ae_hidden"}
_TUPLE_STR_FIELDS = {"benchmarks"}


def _coerce(name: str, raw: str, default):
    raw = raw.strip()
    if name in _BOOL_FIELDS:
        if raw.lower() in ("true", "1", "yes", "on"):
            return True
        if raw.lower() in ("false", "0", "no", "off"):
            return False
        raise ValidationError(f"field '{name}' expects a boolean, got '{raw}'")
    if name in _TUPLE_FLOAT_FIELDS:
        return tuple(float(v) for v in raw.split(",") if v.strip() != "")
    if name in _TUPLE_INT_FIELDS:
        return tuple(int(v) for v in raw.split(",") if v.strip() != "")
    if name in _TUPLE_STR_FIELDS:
        return tuple(v.strip() for v in raw.split(",") if v.strip() != "")
    kind = type(default)
    try:
        if kind is bool:
            raise TypeError
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except (TypeError, ValueError):
        raise ValidationError(f"field '{name}' expects {kind.__name__}, got '{raw}'") from None


def parse_config(path) -> RunConfig:
    """Parse and validate a config file; apply environment overrides."""
    text = Path(path).read_text(encoding="utf-8")
    return parse_config_text(text)


def parse_config_text(text: str) -> RunConfig:
    defaults = RunConfig()
    known = {f.name: getattr(defaults, f.name) for f in fields(defaults)}
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValidationError(f"line {lineno}: expected 'key = value', got '{stripped}'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if key not in known:
            raise ValidationError(f"line {lineno}: unknown config key '{key}'")
        if raw.strip() == "" and key != "data_csv":
            continue
        values[key] = _coerce(key, raw, known[key])
    cfg = RunConfig(**values)
    if "LATENTFOLIO_SEED" in os.environ:
        cfg.seed = int(os.environ["LATENTFOLIO_SEED"])
    if "LATENTFOLIO_OUTDIR" in os.environ:
        cfg.outdir = os.environ["LATENTFOLIO_OUTDIR"]
    cfg.validate()
    return cfg
