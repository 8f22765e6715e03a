"""Versioned npz container used by every serialized artifact.

Layout: one ``__header__`` entry holding a JSON string (kind, version, meta)
plus arbitrary named float arrays. The meta dict must be JSON-serializable.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ValidationError

CONTAINER_VERSION = 1


def save_container(path, kind: str, meta: dict, arrays: dict) -> None:
    header = {"kind": kind, "version": CONTAINER_VERSION, "meta": meta}
    payload = {"__header__": np.array(json.dumps(header, sort_keys=True))}
    for name, arr in arrays.items():
        if name == "__header__":
            raise ValidationError("array name '__header__' is reserved")
        payload[name] = np.asarray(arr)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_container(path, expected_kind: str | None = None):
    """Returns (kind, meta, arrays). Raises ValidationError on kind mismatch."""
    with np.load(path, allow_pickle=False) as data:
        if "__header__" not in data:
            raise ValidationError(f"{path}: not a container file (missing header)")
        header = json.loads(str(data["__header__"]))
        arrays = {k: data[k] for k in data.files if k != "__header__"}
    kind = header.get("kind")
    if header.get("version") != CONTAINER_VERSION:
        raise ValidationError(f"{path}: unsupported container version {header.get('version')}")
    if expected_kind is not None and kind != expected_kind:
        raise ValidationError(f"{path}: expected kind '{expected_kind}', found '{kind}'")
    return kind, header.get("meta", {}), arrays
