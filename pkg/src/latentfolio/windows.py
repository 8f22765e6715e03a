"""Window cutting and per-window min-max scaling shared by the extractors."""

from __future__ import annotations

import numpy as np

from .errors import InsufficientHistoryError


def minmax_scale(windows: np.ndarray) -> np.ndarray:
    """Scale each row to [0, 1] by its own min and max; flat rows map to 0.5.

    Using only values inside the window keeps scaling causal: nothing from
    the future (or from other windows) leaks in.
    """
    w = np.atleast_2d(np.asarray(windows, dtype=float))
    lo = w.min(axis=1, keepdims=True)
    hi = w.max(axis=1, keepdims=True)
    span = hi - lo
    flat = span[:, 0] <= 0
    span[flat] = 1.0
    out = (w - lo) / span
    out[flat] = 0.5
    if np.asarray(windows).ndim == 1:
        return out[0]
    return out


def return_windows(returns: np.ndarray, m: int, stride: int = 1, stop: int | None = None) -> np.ndarray:
    """Pool length-m windows over all assets and channels of a return panel.

    returns: (T, n, C). Windows end at rows m-1, m-1+stride, ... < stop.
    Output is ((#ends) * n * C, m), scaled per window, suitable for training
    one extractor shared across assets and channels.
    """
    rets = np.asarray(returns, dtype=float)
    T = rets.shape[0]
    stop = T if stop is None else min(stop, T)
    if stop < m:
        raise InsufficientHistoryError(f"need at least {m} return rows, have {stop}")
    ends = range(m, stop + 1, stride)
    chunks = []
    for end in ends:
        block = rets[end - m:end]                      # (m, n, C)
        chunks.append(block.reshape(m, -1).T)          # (n*C, m)
    return minmax_scale(np.concatenate(chunks, axis=0))


def paired_return_windows(returns: np.ndarray, m: int, stride: int = 1, stop: int | None = None):
    """(current, previous) scaled window pairs for history-conditioned models.

    Window ends start at 2m so every sample has a full predecessor window.
    Both members of a pair are scaled independently.
    """
    rets = np.asarray(returns, dtype=float)
    T = rets.shape[0]
    stop = T if stop is None else min(stop, T)
    if stop < 2 * m:
        raise InsufficientHistoryError(f"need at least {2 * m} return rows, have {stop}")
    cur, prev = [], []
    for end in range(2 * m, stop + 1, stride):
        cur.append(rets[end - m:end].reshape(m, -1).T)
        prev.append(rets[end - 2 * m:end - m].reshape(m, -1).T)
    return (minmax_scale(np.concatenate(cur, axis=0)),
            minmax_scale(np.concatenate(prev, axis=0)))
