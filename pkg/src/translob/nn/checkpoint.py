"""Versioned JSON checkpoints: parameter values, optional Adam state, free-form metadata."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from .optim import AdamState

CHECKPOINT_FORMAT = "translob-checkpoint"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params, adam: Optional[AdamState] = None, meta: Optional[dict] = None) -> None:
    blob = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "meta": meta or {},
        "params": {p.id: {"shape": list(p.shape), "data": p.data.ravel().tolist()} for p in params},
        "adam": adam.to_dict() if adam is not None else None,
    }
    Path(path).write_text(json.dumps(blob))


def load_checkpoint(path) -> dict:
    blob = json.loads(Path(path).read_text())
    if blob.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a checkpoint")
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob.get('version')}")
    return blob


def restore_params(params, blob: dict) -> None:
    """Copy checkpoint values into ``params``; every id must exist with a matching shape."""
    stored = blob["params"]
    missing = [p.id for p in params if p.id not in stored]
    if missing:
        raise CheckpointError(f"checkpoint lacks tensor {missing[0]!r}")
    for p in params:
        shape = tuple(stored[p.id]["shape"])
        if shape != p.shape:
            raise CheckpointError(f"shape mismatch for tensor {p.id!r}: checkpoint {shape}, model {p.shape}")
    for p in params:
        p.data = np.array(stored[p.id]["data"], dtype=np.float64).reshape(p.shape)
        p.zero_grad()
