"""Block-wise SVD storage with arbitrary-range queries.

The store compresses a row stream into per-block compact SVDs (incremental
rank updates, raw rows discarded). A range query slices the boundary
blocks through their stored factors (partial) and merges everything by
factoring the stacked scaled-V cores (stitched), so no raw data is needed.
The extracted feature is the singular-value-scaled right factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .container import load_container, save_container
from .errors import InsufficientHistoryError, ValidationError

RANK_RTOL = 1e-12   # singular values below RANK_RTOL * s_max count as zero


@dataclass
class SvdTriple:
    """Compact SVD: U (M, R) and V (N, R) column-orthonormal, S descending."""

    U: np.ndarray
    S: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        self.U = np.atleast_2d(np.asarray(self.U, dtype=float))
        self.S = np.atleast_1d(np.asarray(self.S, dtype=float))
        self.V = np.atleast_2d(np.asarray(self.V, dtype=float))

    @property
    def rank(self) -> int:
        return self.S.size

    @property
    def rows(self) -> int:
        return self.U.shape[0]

    @property
    def cols(self) -> int:
        return self.V.shape[0]

    def matrix(self) -> np.ndarray:
        return (self.U * self.S) @ self.V.T


def _sign_fix(U: np.ndarray, V: np.ndarray):
    """Flip column pairs so each V column's largest-magnitude entry is positive."""
    if V.shape[1] == 0:
        return U, V
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, V * signs


def _truncate(U, S, V) -> SvdTriple:
    if S.size:
        keep = S > RANK_RTOL * S[0]
        U, S, V = U[:, keep], S[keep], V[:, keep]
    U, V = _sign_fix(U, V)
    return SvdTriple(U=U, S=S, V=V)


def compact_svd(A) -> SvdTriple:
    """Thin SVD with numerical-zero truncation and a stable sign convention."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if not np.all(np.isfinite(A)):
        raise ValidationError("matrix contains non-finite entries")
    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    return _truncate(U, S, Vt.T)


class BlockStore:
    """Sequential store of per-block compact SVDs over a row stream.

    Each sealed block covers exactly ``block_size`` rows; the trailing block
    may be open (fewer rows). Appending performs a rank-update on the open
    block's factors, so raw rows are never retained.
    """

    def __init__(self, block_size: int = 60, n_cols: int | None = None):
        if block_size < 1:
            raise ValidationError("block size must be >= 1")
        self.block_size = block_size
        self.n_cols = n_cols
        self.blocks: list[SvdTriple] = []
        self._open: SvdTriple | None = None
        self._open_rows = 0

    @property
    def total_rows(self) -> int:
        return len(self.blocks) * self.block_size + self._open_rows

    def append(self, row) -> None:
        row = np.asarray(row, dtype=float).ravel()
        if self.n_cols is None:
            self.n_cols = row.size
        if row.size != self.n_cols:
            raise ValidationError(f"row has {row.size} columns, store expects {self.n_cols}")
        if self._open is None:
            self._open = SvdTriple(U=np.zeros((0, 0)), S=np.zeros(0), V=np.zeros((self.n_cols, 0)))
            self._open_rows = 0
        self._open = _append_row(self._open, row)
        self._open_rows += 1
        if self._open_rows == self.block_size:
            self.blocks.append(self._open)
            self._open = None
            self._open_rows = 0

    def extend(self, rows) -> None:
        for row in np.atleast_2d(np.asarray(rows, dtype=float)):
            self.append(row)

    def block_triples(self) -> list:
        """All blocks in order, the open block (if any) last."""
        out = list(self.blocks)
        if self._open is not None:
            out.append(self._open)
        return out

    def save(self, path, extra_meta: dict | None = None) -> None:
        triples = self.block_triples()
        meta = {"block_size": self.block_size, "n_cols": self.n_cols,
                "total_rows": self.total_rows, "n_blocks": len(triples),
                "block_rows": [t.rows for t in triples]}
        meta.update(extra_meta or {})
        arrays = {}
        for j, t in enumerate(triples):
            arrays[f"b{j}_U"], arrays[f"b{j}_S"], arrays[f"b{j}_V"] = t.U, t.S, t.V
        save_container(path, "block-store", meta, arrays)

    @classmethod
    def load(cls, path) -> "BlockStore":
        _, meta, arrays = load_container(path, "block-store")
        store = cls(block_size=int(meta["block_size"]), n_cols=int(meta["n_cols"]))
        for j in range(int(meta["n_blocks"])):
            triple = SvdTriple(U=arrays[f"b{j}_U"], S=arrays[f"b{j}_S"], V=arrays[f"b{j}_V"])
            if triple.rows == store.block_size:
                store.blocks.append(triple)
            else:
                store._open = triple
                store._open_rows = triple.rows
        if store.total_rows != int(meta["total_rows"]):
            raise ValidationError(f"{path}: row count mismatch in stored blocks")
        return store


def _append_row(triple: SvdTriple, row: np.ndarray) -> SvdTriple:
    """Rank-update the factors of an implied matrix after appending one row."""
    U, S, V = triple.U, triple.S, triple.V
    k, R = U.shape
    m = V.T @ row
    residual = row - V @ m
    rnorm = float(np.linalg.norm(residual))
    scale = max(S[0] if S.size else 0.0, float(np.linalg.norm(row)), 1.0)
    carrier = np.zeros((k + 1, R + 1))
    carrier[:k, :R] = U
    carrier[k, R] = 1.0
    if rnorm > RANK_RTOL * scale:
        core = np.zeros((R + 1, R + 1))
        core[:R, :R] = np.diag(S)
        core[R, :R] = m
        core[R, R] = rnorm
        V_big = np.concatenate([V, residual[:, None] / rnorm], axis=1)
    else:
        if R == 0:
            # zero row onto an empty factorization: row count grows, rank stays 0
            return SvdTriple(U=np.zeros((k + 1, 0)), S=S, V=V)
        core = np.concatenate([np.diag(S), m[None, :]], axis=0)  # (R+1, R)
        V_big = V
    Uc, Sc, Vct = np.linalg.svd(core, full_matrices=False)
    return _truncate(carrier @ Uc, Sc, V_big @ Vct.T)


def store_phase(rows, b: int) -> BlockStore:
    """Build a BlockStore by streaming all rows through incremental updates."""
    store = BlockStore(block_size=b)
    store.extend(rows)
    return store


def partial_svd(block: SvdTriple, start: int, stop: int) -> SvdTriple:
    """SVD of rows [start, stop) of the block's implied matrix, factor-only.

    Slices the left factor, re-factors the sliced-and-scaled core, and
    absorbs the core's right factor into V. No raw rows are touched.
    """
    if not 0 <= start < stop <= block.rows:
        raise ValidationError(f"row range [{start}, {stop}) outside block of {block.rows} rows")
    if start == 0 and stop == block.rows:
        return block
    core = block.U[start:stop] * block.S          # (rows, R)
    Uc, Sc, Vct = np.linalg.svd(core, full_matrices=False)
    return _truncate(Uc, Sc, block.V @ Vct.T)


def stitched_svd(parts) -> SvdTriple:
    """SVD of the vertical concatenation of the parts' implied matrices."""
    parts = list(parts)
    if not parts:
        raise ValidationError("cannot stitch an empty list of factorizations")
    cols = {p.cols for p in parts}
    if len(cols) != 1:
        raise ValidationError(f"parts disagree on column count: {sorted(cols)}")
    if len(parts) == 1:
        return parts[0]
    core = np.concatenate([(p.S[:, None] * p.V.T) for p in parts], axis=0)
    Uc, Sc, Vct = np.linalg.svd(core, full_matrices=False)
    row_counts = [p.rows for p in parts]
    rank_offsets = np.cumsum([0] + [p.rank for p in parts])
    U = np.zeros((sum(row_counts), core.shape[0]))
    r0 = 0
    for p, off in zip(parts, rank_offsets[:-1]):
        U[r0:r0 + p.rows, off:off + p.rank] = p.U
        r0 += p.rows
    return _truncate(U @ Uc, Sc, Vct.T)


def query(store: BlockStore, t_i: int, t_f: int) -> SvdTriple:
    """SVD of stream rows [t_i, t_f] (inclusive) assembled from stored blocks."""
    if not 0 <= t_i <= t_f < store.total_rows:
        raise ValidationError(
            f"query range [{t_i}, {t_f}] outside stored rows [0, {store.total_rows - 1}]")
    b = store.block_size
    triples = store.block_triples()
    first, last = t_i // b, t_f // b
    parts = []
    for j in range(first, last + 1):
        lo = t_i - j * b if j == first else 0
        hi = t_f - j * b + 1 if j == last else triples[j].rows
        parts.append(partial_svd(triples[j], lo, hi))
    return stitched_svd(parts)


def feature(store: BlockStore, t: int, m: int) -> np.ndarray:
    """Scaled right factor of the trailing m-row window ending at row t.

    Returns an (N, N) array whose first R rows are diag(S) @ V.T, zero-padded
    below when the window is rank-deficient. The left factor is discarded;
    its row count grows with the window and carries no per-asset structure.
    """
    if t < m - 1:
        raise InsufficientHistoryError(f"window of {m} rows needs t >= {m - 1}, got {t}")
    triple = query(store, t - m + 1, t)
    N = store.n_cols
    out = np.zeros((N, N))
    out[:triple.rank] = triple.S[:, None] * triple.V.T
    return out
