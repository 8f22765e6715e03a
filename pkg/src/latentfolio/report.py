"""Comparison reports: metrics table (JSON + CSV) and a pv-trajectory chart.

The SVG is written by hand so regenerating from identical results is
byte-identical; floats are serialized via repr for the same reason.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .backtest import BacktestResult, metrics
from .errors import ValidationError

METRIC_COLUMNS = ("pv_end", "annual_return_geometric", "annual_return_arithmetic",
                  "annual_volatility", "sharpe", "sortino", "turnover_total")

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000")


def _jsonable(value):
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def report(results: dict, outdir, config_hash: str = "") -> dict:
    """Render metrics.json, metrics.csv and pv.svg for named backtest results.

    Returns {name: metrics dict}. Methods appear in insertion order in the
    CSV and the chart; the JSON is sorted for stable bytes.
    """
    if not results:
        raise ValidationError("no results to report")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    table = {name: metrics(res) for name, res in results.items()}

    payload = {
        "config_hash": config_hash,
        "methods": [
            {"method": name, **{k: _jsonable(v) for k, v in row.items()}}
            for name, row in table.items()
        ],
    }
    (outdir / "metrics.json").write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")

    lines = [f"# config_hash={config_hash}", "method," + ",".join(METRIC_COLUMNS)]
    for name, row in table.items():
        cells = [name] + [repr(row[c]) for c in METRIC_COLUMNS]
        lines.append(",".join(cells))
    (outdir / "metrics.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    svg = pv_chart_svg({name: res.pv for name, res in results.items()}, config_hash)
    (outdir / "pv.svg").write_text(svg, encoding="utf-8")
    return table


def pv_chart_svg(pv_by_name: dict, config_hash: str = "", width: int = 860,
                 height: int = 480) -> str:
    """Linear-axis line chart of portfolio-value trajectories with a legend."""
    margin_l, margin_r, margin_t, margin_b = 70, 180, 24, 40
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    n_steps = max(len(pv) for pv in pv_by_name.values())
    lo = min(float(np.min(pv)) for pv in pv_by_name.values())
    hi = max(float(np.max(pv)) for pv in pv_by_name.values())
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def sx(i):
        return margin_l + plot_w * (i / max(n_steps - 1, 1))

    def sy(v):
        return margin_t + plot_h * (1.0 - (v - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f"<!-- config_hash={config_hash} -->",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#888" stroke-width="1"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        v = lo + frac * (hi - lo)
        y = sy(v)
        parts.append(f'<line x1="{margin_l}" y1="{y:.2f}" x2="{margin_l + plot_w}" '
                     f'y2="{y:.2f}" stroke="#ddd" stroke-width="0.5"/>')
        parts.append(f'<text x="{margin_l - 6}" y="{y + 4:.2f}" font-size="11" '
                     f'text-anchor="end" font-family="sans-serif">{v:.0f}</text>')
    parts.append(f'<text x="{margin_l + plot_w / 2:.0f}" y="{height - 10}" font-size="12" '
                 f'text-anchor="middle" font-family="sans-serif">rebalancing step</text>')
    for idx, (name, pv) in enumerate(pv_by_name.items()):
        color = PALETTE[idx % len(PALETTE)]
        pts = " ".join(f"{sx(i):.2f},{sy(float(v)):.2f}" for i, v in enumerate(pv))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = margin_t + 16 + 18 * idx
        lx = margin_l + plot_w + 12
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" font-size="12" '
                     f'font-family="sans-serif">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def weights_csv(result: BacktestResult, dates, tickers, path, config_hash: str = "") -> None:
    """date x asset weight matrix for one strategy, cash leg first."""
    lines = [f"# config_hash={config_hash}", "date,cash," + ",".join(tickers)]
    for k in range(result.steps):
        date = str(dates[result.start_index + k])
        cells = ",".join(repr(float(x)) for x in result.weights[k])
        lines.append(f"{date},{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
