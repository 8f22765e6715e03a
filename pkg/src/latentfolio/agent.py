"""Shared-parameter per-asset trading policy trained by direct gradient ascent.

Each risky asset runs through the same conv/dense stack (identical weights,
so renaming assets permutes outputs); a learned scalar handles the cash
leg. Actions come from a softmax, so they always lie on the simplex. The
objective is the time-normalized discounted transaction-cost-aware log
reward over consecutive-index mini-batches, with previous weights read
from a portfolio-vector memory that training keeps refreshing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .container import load_container, save_container
from .errors import BankruptcyError, DivergenceError, ValidationError
from .market_data import price_relatives
from .state import FeatureContext, StateTensor, build_state, uniform_weights

DEFAULT_COST = 0.002


@dataclass
class AgentConfig:
    gamma: float = 0.99
    learning_rate: float = 0.01
    batch_size: int = 32
    episodes: int = 40
    exploration_init: float = 0.2
    exploration_decay: float = 0.95
    seed: int = 0
    optimizer: str = "sgd"            # 'sgd' | 'adam'
    steps_per_episode: int | None = None
    cost: float = DEFAULT_COST

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValidationError("gamma must lie in (0, 1]")
        if self.learning_rate < 0 or self.batch_size < 1 or self.episodes < 0:
            raise ValidationError("learning_rate >= 0, batch_size >= 1, episodes >= 0 required")
        if not 0.0 <= self.exploration_init <= 1.0 or not 0.0 < self.exploration_decay <= 1.0:
            raise ValidationError("exploration_init in [0,1] and decay in (0,1] required")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer '{self.optimizer}'")


class PortfolioVectorMemory:
    """Latest action per time index, initialized to the uniform allocation."""

    def __init__(self, length: int, n_assets: int):
        self.vectors = np.tile(uniform_weights(n_assets), (length, 1))

    def get(self, t: int) -> np.ndarray:
        return self.vectors[t]

    def set(self, t: int, action: np.ndarray) -> None:
        self.vectors[t] = action


class PolicyNetwork:
    """Conv latent branch + dense covariance branch, merged per asset.

    Both branches and the merge/output layers are shared across assets;
    asset votes plus a learned cash vote go through a softmax.
    """

    def __init__(self, n_assets: int, feat_len: int, feat_channels: int = 3,
                 cov_channels: int = 3, conv_channels: int = 8, kernel: int = 3,
                 cov_hidden: int = 32, merge_hidden: int = 64, seed: int = 0):
        self.n_assets = n_assets
        self.feat_len = feat_len
        self.feat_channels = feat_channels
        self.cov_channels = cov_channels
        self.seed = seed
        self._init_kwargs = dict(conv_channels=conv_channels, kernel=kernel,
                                 cov_hidden=cov_hidden, merge_hidden=merge_hidden)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA6]))
        self.latent_branch = nn.Sequential([
            nn.Conv1d(feat_channels, conv_channels, kernel, rng), nn.Tanh(),
            nn.Conv1d(conv_channels, 1, kernel, rng), nn.Tanh(),
            nn.Flatten(),
        ])
        self.cov_branch = nn.Sequential([
            nn.Dense(n_assets * cov_channels, cov_hidden, rng), nn.Tanh(),
        ])
        self.merge = nn.Sequential([
            nn.Dense(feat_len + cov_hidden, merge_hidden, rng), nn.Tanh(),
        ])
        self.head = nn.Dense(merge_hidden + 1, 1, rng)
        self.cash = np.array([0.0, 0.0])   # [bias, coefficient on held cash weight]
        self.cash_grad = np.zeros(2)

    @property
    def params(self):
        return (self.latent_branch.all_params + self.cov_branch.all_params
                + self.merge.all_params + self.head.params + [self.cash])

    @property
    def grads(self):
        return (self.latent_branch.all_grads + self.cov_branch.all_grads
                + self.merge.all_grads + self.head.grads + [self.cash_grad])

    def zero_grads(self):
        for g in self.grads:
            g[...] = 0.0

    def _check_state(self, state: StateTensor):
        n = self.n_assets
        if state.latent_block.shape != (n, self.feat_len, self.feat_channels):
            raise ValidationError(
                f"latent block {state.latent_block.shape} does not match network input "
                f"{(n, self.feat_len, self.feat_channels)}")
        if state.cov_block.matrices.shape != (n, n, self.cov_channels):
            raise ValidationError("covariance block does not match network input")

    def _forward(self, state: StateTensor) -> np.ndarray:
        self._check_state(state)
        n = self.n_assets
        feat = np.transpose(state.latent_block, (0, 2, 1))        # (n, C, L)
        conv_out = self.latent_branch.forward(feat)               # (n, L)
        cov_in = state.cov_block.matrices.reshape(n, -1)
        cov_out = self.cov_branch.forward(cov_in)                 # (n, H)
        merged = self.merge.forward(np.concatenate([conv_out, cov_out], axis=1))
        prev_risky = state.prev_weights[1:][:, None]
        votes = self.head.forward(np.concatenate([merged, prev_risky], axis=1))[:, 0]
        cash_vote = self.cash[0] + self.cash[1] * state.prev_weights[0]
        z = np.concatenate([[cash_vote], votes])
        z -= z.max()
        ez = np.exp(z)
        action = ez / ez.sum()
        self._action = action
        return action

    def _backward(self, daction: np.ndarray) -> None:
        """Accumulate parameter gradients given dJ/daction at the last forward."""
        a = self._action
        dz = a * (daction - float(daction @ a))
        self.cash_grad[0] += dz[0]
        # cash coefficient multiplies the held cash weight captured in forward
        self.cash_grad[1] += dz[0] * self._prev_cash
        dhead = self.head.backward(dz[1:][:, None])
        dmerged = self.merge.backward(dhead[:, :-1])
        dconv = dmerged[:, :self.feat_len]
        dcov = dmerged[:, self.feat_len:]
        self.cov_branch.backward(dcov)
        self.latent_branch.backward(dconv)

    def act(self, state: StateTensor) -> np.ndarray:
        """Deterministic simplex action for a state."""
        self._prev_cash = state.prev_weights[0]
        return self._forward(state).copy()

    def save(self, path, extra_meta: dict | None = None) -> None:
        meta = {"n_assets": self.n_assets, "feat_len": self.feat_len,
                "feat_channels": self.feat_channels, "cov_channels": self.cov_channels,
                "seed": self.seed}
        meta.update(self._init_kwargs)
        meta.update(extra_meta or {})
        arrays = {f"p{i}": p for i, p in enumerate(self.params)}
        save_container(path, "policy", meta, arrays)

    @classmethod
    def load(cls, path) -> "PolicyNetwork":
        _, meta, arrays = load_container(path, "policy")
        net = cls(n_assets=int(meta["n_assets"]), feat_len=int(meta["feat_len"]),
                  feat_channels=int(meta["feat_channels"]), cov_channels=int(meta["cov_channels"]),
                  conv_channels=int(meta["conv_channels"]), kernel=int(meta["kernel"]),
                  cov_hidden=int(meta["cov_hidden"]), merge_hidden=int(meta["merge_hidden"]),
                  seed=int(meta["seed"]))
        for i, p in enumerate(net.params):
            stored = arrays[f"p{i}"]
            if stored.shape != p.shape:
                raise ValidationError(f"stored parameter {i} has shape {stored.shape}, expected {p.shape}")
            p[...] = stored
        return net


def network_for_context(ctx: FeatureContext, seed: int = 0, **kwargs) -> PolicyNetwork:
    return PolicyNetwork(n_assets=ctx.n_assets, feat_len=ctx.latent_dim,
                         feat_channels=3, cov_channels=ctx.cov_channels,
                         seed=seed, **kwargs)


def reward(action, relatives, prev_action, cost: float = DEFAULT_COST) -> float:
    """Log growth net of proportional cost on total weight turnover.

    The turnover sum runs over every leg including cash: moving wealth in
    or out of cash is a trade like any other, and with simplex weights the
    sum double-counts traded value exactly once for the buy and once for
    the sell side.
    """
    a = np.asarray(action, dtype=float)
    y = np.asarray(relatives, dtype=float)
    w = np.asarray(prev_action, dtype=float)
    gross = float(a @ y)
    argument = gross - cost * float(np.sum(np.abs(a - w)))
    if argument <= 0:
        raise BankruptcyError(f"transaction cost wiped out the gross return ({argument:.3e})")
    return float(np.log(argument))


def _reward_and_grad(action, relatives, prev_action, cost):
    a = np.asarray(action, dtype=float)
    y = np.asarray(relatives, dtype=float)
    w = np.asarray(prev_action, dtype=float)
    turnover = np.sum(np.abs(a - w))
    argument = float(a @ y) - cost * float(turnover)
    if argument <= 0:
        raise BankruptcyError(f"transaction cost wiped out the gross return ({argument:.3e})")
    grad = (y - cost * np.sign(a - w)) / argument   # sign(0) = 0: zero turnover is stationary
    return float(np.log(argument)), grad


def objective(network: PolicyNetwork, batch, ctx: FeatureContext,
              pvm: PortfolioVectorMemory, gamma: float, cost: float = DEFAULT_COST,
              accumulate_grads: bool = False, actions_out: list | None = None) -> float:
    """Time-normalized discounted reward of the current policy on a batch.

    Discounting is by position within the batch (1-based). Actions are
    recomputed from the live network; previous weights come from the PVM.
    With accumulate_grads the analytic gradient lands in network.grads.
    """
    batch = list(batch)
    if not batch:
        raise ValidationError("empty batch")
    T = len(batch)
    total = 0.0
    for pos, t in enumerate(batch, start=1):
        prev = pvm.get(t - 1)
        st = build_state(ctx, t, prev)
        network._prev_cash = prev[0]
        action = network._forward(st)
        if actions_out is not None:
            actions_out.append((t, action.copy()))
        y = price_relatives(ctx.series, t + 1).values
        r, dr_da = _reward_and_grad(action, y, prev, cost)
        weight = gamma**pos / T
        total += weight * r
        if accumulate_grads:
            network._backward(weight * dr_da)
    return total


def train_step(network: PolicyNetwork, batch, ctx: FeatureContext,
               pvm: PortfolioVectorMemory, config: AgentConfig,
               optimizer=None, rng=None, epsilon: float = 0.0,
               action_sink: list | None = None) -> float:
    """One ascent step on a batch; refreshes PVM entries with the new actions.

    Exploration (probability epsilon per entry) mixes the stored action
    with a flat-Dirichlet draw before it lands in the PVM. Returns the
    objective value at the pre-update parameters.
    """
    actions: list = []
    network.zero_grads()
    J = objective(network, batch, ctx, pvm, config.gamma, config.cost,
                  accumulate_grads=True, actions_out=actions)
    if not np.isfinite(J) or any(not np.all(np.isfinite(g)) for g in network.grads):
        raise DivergenceError("non-finite objective or gradient")
    if optimizer is not None:
        neg = [-g for g in network.grads]
        optimizer.apply(network.params, neg, config.learning_rate)
    else:
        for p, g in zip(network.params, network.grads):
            p += config.learning_rate * g
    for t, action in actions:
        stored = action
        if epsilon > 0.0 and rng is not None and rng.random() < epsilon:
            stored = explore(action, 1.0, rng)
        pvm.set(t, stored)
        if action_sink is not None:
            action_sink.append(stored.copy())
    return J


def explore(action, epsilon: float, rng) -> np.ndarray:
    """With probability epsilon, mix the action halfway toward a Dirichlet draw."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValidationError("epsilon must lie in [0, 1]")
    a = np.asarray(action, dtype=float)
    if epsilon == 0.0 or rng.random() >= epsilon:
        return a.copy()
    draw = rng.dirichlet(np.ones(a.size))
    return 0.5 * a + 0.5 * draw


def train(network: PolicyNetwork, ctx: FeatureContext, config: AgentConfig,
          action_sink: list | None = None):
    """Episodes of random consecutive-index batches with decaying exploration.

    Returns (network, episode objective history, pvm). Fully deterministic
    for a fixed config seed.
    """
    T = len(ctx.series)
    first = ctx.warmup
    last = T - 2                      # last index with a following price relative
    n_valid = last - first + 1
    if n_valid < 1:
        raise ValidationError("training series is too short for a single batch")
    batch = min(config.batch_size, n_valid)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xA6, 2]))
    pvm = PortfolioVectorMemory(T, ctx.n_assets)
    optimizer = nn.Adam() if config.optimizer == "adam" else None
    steps = config.steps_per_episode or max(1, n_valid // batch)
    epsilon = config.exploration_init
    history = []
    for _ in range(config.episodes):
        js = []
        for _ in range(steps):
            start = first + int(rng.integers(0, n_valid - batch + 1))
            js.append(train_step(network, range(start, start + batch), ctx, pvm,
                                 config, optimizer=optimizer, rng=rng,
                                 epsilon=epsilon, action_sink=action_sink))
        history.append(float(np.mean(js)))
        epsilon *= config.exploration_decay
    return network, history, pvm


class PolicyStrategy:
    """Backtest adapter: sequential greedy actions with running held weights."""

    def __init__(self, network: PolicyNetwork, ctx: FeatureContext):
        self.network = network
        self.ctx = ctx
        self.warmup = ctx.warmup
        self._w = uniform_weights(ctx.n_assets)

    def act(self, t: int) -> np.ndarray:
        action = self.network.act(build_state(self.ctx, t, self._w))
        self._w = action
        return action.copy()
