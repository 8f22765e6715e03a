"""Pipeline stages behind the CLI: each writes versioned artifacts into a
stage-named subdirectory of the run directory and refuses to run before
the stage that produces its inputs.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import agent as agent_mod
from . import benchmarks as bench_mod
from . import crbm as crbm_mod
from . import kalman
from . import market_data as md
from . import zoomsvd
from .autoencoder import AeTopology, Autoencoder, TrainConfig
from .autoencoder import train as train_ae
from .backtest import run_backtest
from .config import RunConfig
from .container import load_container, save_container
from .errors import PipelineOrderError, ValidationError
from .report import report as render_report
from .report import weights_csv
from .state import FeatureContext
from .windows import paired_return_windows, return_windows

STAGES = ("ingest", "filter", "train-extractor", "train-agent", "backtest", "report")


def _require(path: Path, stage: str, needed_by: str) -> Path:
    if not path.exists():
        raise PipelineOrderError(
            f"'{needed_by}' needs {path.name} from the '{stage}' stage; run '{stage}' first")
    return path


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.outdir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def load_series(cfg: RunConfig) -> md.OhlcSeries:
    if cfg.data_csv:
        return md.load_csv(cfg.data_csv, risk_free_annual=cfg.risk_free_annual,
                           periods_per_year=cfg.periods_per_year)
    return md.synth_gbm(seed=cfg.synth_seed, n=cfg.synth_assets, T=cfg.synth_length,
                        drifts=cfg.synth_drift, vols=cfg.synth_vol,
                        risk_free_annual=cfg.risk_free_annual,
                        periods_per_year=cfg.periods_per_year)


def stage_ingest(cfg: RunConfig) -> Path:
    out = _outdir(cfg) / "ingest"
    out.mkdir(exist_ok=True)
    series = load_series(cfg)
    train, test = md.split_train_test(series, cfg.split_fraction)
    md.save_csv(series, out / "series.csv", config_hash=cfg.hash())
    (out / "split.json").write_text(json.dumps({
        "config_hash": cfg.hash(), "rows": len(series),
        "train_rows": len(train), "test_rows": len(test),
        "tickers": series.tickers,
    }, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return out


def _load_ingested(cfg: RunConfig, needed_by: str):
    out = _outdir(cfg)
    path = _require(out / "ingest" / "series.csv", "ingest", needed_by)
    series = md.load_csv(path)
    split = json.loads((out / "ingest" / "split.json").read_text(encoding="utf-8"))
    return series, int(split["train_rows"])


def stage_filter(cfg: RunConfig) -> Path:
    series, train_rows = _load_ingested(cfg, "filter")
    out = _outdir(cfg) / "filter"
    out.mkdir(exist_ok=True)
    raw = md.log_returns(series)
    filtered, params = kalman.filter_panel(raw, kappa=cfg.kalman_kappa,
                                           fit_rows=train_rows - 1)
    save_container(out / "filtered.npz", "filtered-returns",
                   {"config_hash": cfg.hash(), "train_rows": train_rows},
                   {"returns": filtered, "noise_params": params})
    _export_filtered_csv(series, out / "filtered.csv", cfg)
    return out


def _export_filtered_csv(series: md.OhlcSeries, path: Path, cfg: RunConfig) -> None:
    """Filtered prices for all four channels, rebuilt from filtered returns."""
    panels = {}
    for name in ("open", "high", "low", "close"):
        prices = getattr(series, name)
        rets = np.log(prices[1:] / prices[:-1])
        filt, _ = kalman.filter_panel(rets[:, :, None], kappa=cfg.kalman_kappa)
        panels[name] = kalman.rebuild_prices(prices[0], filt[:, :, 0])
    lines = [f"# config_hash={cfg.hash()}",
             "date,ticker,filtered_open,filtered_high,filtered_low,filtered_close"]
    for t in range(len(series)):
        date = str(series.dates[t])
        for j, ticker in enumerate(series.tickers):
            lines.append(f"{date},{ticker}," + ",".join(
                repr(float(panels[f][t, j])) for f in ("open", "high", "low", "close")))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _load_returns(cfg: RunConfig, series: md.OhlcSeries, needed_by: str) -> np.ndarray:
    if not cfg.filtering:
        return md.log_returns(series)
    path = _require(_outdir(cfg) / "filter" / "filtered.npz", "filter", needed_by)
    _, meta, arrays = load_container(path, "filtered-returns")
    if meta.get("config_hash") != cfg.hash():
        raise ValidationError("filtered returns were produced by a different config")
    return arrays["returns"]


def stage_train_extractor(cfg: RunConfig) -> Path:
    series, train_rows = _load_ingested(cfg, "train-extractor")
    out = _outdir(cfg) / "extractor"
    out.mkdir(exist_ok=True)
    if cfg.extractor == "none":
        (out / "none.json").write_text(json.dumps(
            {"config_hash": cfg.hash(), "extractor": "none"}) + "\n", encoding="utf-8")
        return out
    returns = _load_returns(cfg, series, "train-extractor")
    train_return_rows = train_rows - 1
    if cfg.extractor == "autoencoder":
        windows = return_windows(returns, cfg.window, stride=cfg.window_stride,
                                 stop=train_return_rows)
        topo = AeTopology(variant=cfg.ae_variant, input_dim=cfg.window,
                          latent_dim=cfg.latent_dim, hidden=cfg.ae_hidden)
        tc = TrainConfig(epochs=cfg.ae_epochs, learning_rate=cfg.ae_learning_rate,
                         batch_size=cfg.ae_batch_size, seed=cfg.seed)
        ae, history = train_ae(topo, tc, windows)
        ae.save(out / "autoencoder.npz", extra_meta={"config_hash": cfg.hash()})
        _write_history(out / "loss_history.csv", "epoch,mse", history, cfg.hash())
    elif cfg.extractor == "crbm":
        cur, prev = paired_return_windows(returns, cfg.window, stride=cfg.window_stride,
                                          stop=train_return_rows)
        params = crbm_mod.init_params(n_visible=cfg.window, n_hidden=cfg.latent_dim,
                                      history_len=cfg.crbm_history_len, seed=cfg.seed)
        cc = crbm_mod.CdConfig(k=cfg.crbm_cd_k, learning_rate=cfg.crbm_learning_rate,
                               epochs=cfg.crbm_epochs, batch_size=cfg.ae_batch_size,
                               seed=cfg.seed)
        params, history = crbm_mod.train(params, cur, prev, cc)
        crbm_mod.save_params(params, out / "crbm.npz", extra_meta={"config_hash": cfg.hash()})
        _write_history(out / "loss_history.csv", "epoch,reconstruction_error", history, cfg.hash())
    else:
        for c, name in enumerate(("close", "high", "low")):
            store = zoomsvd.store_phase(returns[:, :, c], b=cfg.block_size)
            store.save(out / f"store_{name}.npz", extra_meta={"config_hash": cfg.hash()})
    return out


def _write_history(path: Path, header: str, history, config_hash: str) -> None:
    lines = [f"# config_hash={config_hash}", header]
    lines += [f"{i},{v!r}" for i, v in enumerate(history)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_context(cfg: RunConfig, series: md.OhlcSeries, needed_by: str) -> FeatureContext:
    returns = _load_returns(cfg, series, needed_by)
    ext_dir = _outdir(cfg) / "extractor"
    kwargs: dict = {}
    if cfg.extractor == "autoencoder":
        kwargs["autoencoder"] = Autoencoder.load(
            _require(ext_dir / "autoencoder.npz", "train-extractor", needed_by))
    elif cfg.extractor == "crbm":
        kwargs["crbm"] = crbm_mod.load_params(
            _require(ext_dir / "crbm.npz", "train-extractor", needed_by))
    elif cfg.extractor == "zoomsvd":
        kwargs["stores"] = tuple(
            zoomsvd.BlockStore.load(_require(ext_dir / f"store_{name}.npz",
                                             "train-extractor", needed_by))
            for name in ("close", "high", "low"))
    return FeatureContext(series=series, window=cfg.window, extractor=cfg.extractor,
                          filtering=cfg.filtering, returns=returns,
                          cov_channels=1 if cfg.cov_close_only else 3, **kwargs)


def stage_train_agent(cfg: RunConfig) -> Path:
    series, train_rows = _load_ingested(cfg, "train-agent")
    out = _outdir(cfg) / "agent"
    out.mkdir(exist_ok=True)
    if cfg.extractor != "none":
        _require(_outdir(cfg) / "extractor", "train-extractor", "train-agent")
    train_series = series.slice(0, train_rows)
    full_ctx = build_context(cfg, series, "train-agent")
    ctx = FeatureContext(series=train_series, window=cfg.window, extractor=cfg.extractor,
                         filtering=cfg.filtering,
                         returns=full_ctx.returns[:train_rows - 1],
                         autoencoder=full_ctx.autoencoder, stores=full_ctx.stores,
                         crbm=full_ctx.crbm, cov_channels=full_ctx.cov_channels)
    net = agent_mod.network_for_context(ctx, seed=cfg.seed)
    acfg = agent_mod.AgentConfig(gamma=cfg.gamma, learning_rate=cfg.learning_rate,
                                 batch_size=cfg.batch_size, episodes=cfg.episodes,
                                 exploration_init=cfg.exploration_init,
                                 exploration_decay=cfg.exploration_decay,
                                 seed=cfg.seed, optimizer=cfg.optimizer, cost=cfg.cost)
    net, history, _ = agent_mod.train(net, ctx, acfg)
    net.save(out / "policy.npz", extra_meta={"config_hash": cfg.hash()})
    _write_history(out / "episodes.csv", "episode,objective", history, cfg.hash())
    return out


def _bench_warmup(cfg: RunConfig) -> int:
    """Pre-test rows each configured benchmark needs before its first action."""
    needs = [1]
    if "wmamr" in cfg.benchmarks:
        needs.append(cfg.wmamr_ma_window)
    if "imvk_aggressive" in cfg.benchmarks or "imvk_moderate" in cfg.benchmarks:
        needs.append(cfg.rsv_window)
    if "imvk_moderate" in cfg.benchmarks:
        needs.append(cfg.rsv_window + 1)
    return max(needs)


def stage_backtest(cfg: RunConfig) -> Path:
    series, train_rows = _load_ingested(cfg, "backtest")
    out = _outdir(cfg) / "backtest"
    out.mkdir(exist_ok=True)
    policy_path = _require(_outdir(cfg) / "agent" / "policy.npz", "train-agent", "backtest")

    test_offset = train_rows
    ctx_full = build_context(cfg, series, "backtest")
    if test_offset < ctx_full.warmup:
        raise ValidationError("test split starts inside the agent warmup; enlarge the training split")
    net = agent_mod.PolicyNetwork.load(policy_path)

    results = {}
    # the agent sees full history but is scored from the first test index
    agent_strategy = agent_mod.PolicyStrategy(net, ctx_full)
    results["agent"] = run_backtest(agent_strategy, series, cost=cfg.cost,
                                    pv0=cfg.pv0, start=test_offset)
    dates_by_method = {"agent": series.dates}

    bench_start = _bench_warmup(cfg)
    if cfg.benchmarks:
        if test_offset < bench_start:
            raise ValidationError("test split starts inside the benchmark warmup")
        bench_series = series.slice(test_offset - bench_start, len(series))
        for name, strat in bench_mod.make_benchmarks(
                bench_series, cfg.benchmarks, rsv_window=cfg.rsv_window,
                ma_window=cfg.wmamr_ma_window, wmamr_epsilon=cfg.wmamr_epsilon).items():
            results[name] = run_backtest(strat, bench_series, cost=cfg.cost,
                                         pv0=cfg.pv0, start=bench_start)
            dates_by_method[name] = bench_series.dates

    arrays = {}
    meta = {"config_hash": cfg.hash(), "methods": sorted(results),
            "periods_per_year": series.periods_per_year}
    for name, res in results.items():
        arrays[f"{name}_pv"] = res.pv
        arrays[f"{name}_rewards"] = res.rewards
        arrays[f"{name}_weights"] = res.weights
        arrays[f"{name}_turnover"] = res.turnover
        arrays[f"{name}_info"] = np.array([res.start_index, res.periods_per_year,
                                           int(res.bankrupt)])
        weights_csv(res, dates_by_method[name], series.tickers,
                    out / f"{name}_weights.csv", cfg.hash())
    save_container(out / "results.npz", "backtest-results", meta, arrays)
    return out


def stage_report(cfg: RunConfig) -> Path:
    out = _outdir(cfg) / "report"
    path = _require(_outdir(cfg) / "backtest" / "results.npz", "backtest", "report")
    _, meta, arrays = load_container(path, "backtest-results")
    from .backtest import BacktestResult
    results = {}
    for name in meta["methods"]:
        info = arrays[f"{name}_info"]
        results[name] = BacktestResult(
            pv=arrays[f"{name}_pv"], rewards=arrays[f"{name}_rewards"],
            weights=arrays[f"{name}_weights"], turnover=arrays[f"{name}_turnover"],
            start_index=int(info[0]), periods_per_year=int(info[1]),
            bankrupt=bool(info[2]))
    render_report(results, out, config_hash=meta.get("config_hash", ""))
    return out


STAGE_FUNCS = {
    "ingest": stage_ingest,
    "filter": stage_filter,
    "train-extractor": stage_train_extractor,
    "train-agent": stage_train_agent,
    "backtest": stage_backtest,
    "report": stage_report,
}


def run_stage(name: str, cfg: RunConfig) -> Path:
    if name not in STAGE_FUNCS:
        raise ValidationError(f"unknown stage '{name}'; choices: {STAGES}")
    if name == "filter" and not cfg.filtering:
        raise ValidationError("filtering is disabled in this config; skip the filter stage")
    return STAGE_FUNCS[name](cfg)


def run_pipeline(cfg: RunConfig) -> Path:
    """All stages in order, honoring the filtering flag."""
    for name in STAGES:
        if name == "filter" and not cfg.filtering:
            continue
        run_stage(name, cfg)
    return _outdir(cfg) / "report"
