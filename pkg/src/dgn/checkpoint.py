"""Versioned checkpoint container.

A checkpoint is a ``torch.save`` dict::

    format    "dgn-checkpoint"
    version   1
    config    DgnConfig as a plain dict
    params    {state_dict key: tensor}
    shapes    {state_dict key: [dims]}
    train     optional {iteration, optimizer, rng, best_psnr, schedule}

Loading rebuilds the model from ``config`` and rejects any missing,
unexpected or mis-shaped entry.
"""
from __future__ import annotations

import os
from pathlib import Path

import torch

from .errors import CheckpointError
from .model import DGN, DgnConfig

FORMAT = "dgn-checkpoint"
VERSION = 1


def save_checkpoint(path, model: DGN, train=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    params = {k: v.detach().clone() for k, v in model.state_dict().items()}
    blob = {
        "format": FORMAT,
        "version": VERSION,
        "config": model.cfg.to_dict(),
        "params": params,
        "shapes": {k: list(v.shape) for k, v in params.items()},
        "train": train,
    }
    # write-then-rename keeps the previous checkpoint intact if the write fails
    tmp = path.with_name(path.name + ".tmp")
    try:
        torch.save(blob, tmp)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
    return path


def read_checkpoint(path):
    try:
        blob = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:  # torch raises a variety of unpickling errors
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(blob, dict) or blob.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not a {FORMAT} file")
    if blob.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {blob.get('version')}")
    return blob


def load_checkpoint(path, dtype=None):
    """Return ``(model, train_meta)`` restored from ``path``."""
    blob = read_checkpoint(path)
    cfg = DgnConfig.from_dict(blob["config"])
    model = DGN(cfg)
    expected = model.state_dict()
    params, shapes = blob["params"], blob["shapes"]
    missing = sorted(set(expected) - set(params))
    unexpected = sorted(set(params) - set(expected))
    if missing or unexpected:
        raise CheckpointError(f"parameter names differ: missing={missing} unexpected={unexpected}")
    for name, ref in expected.items():
        t = params[name]
        if list(t.shape) != list(ref.shape) or shapes.get(name) != list(ref.shape):
            raise CheckpointError(
                f"shape mismatch for {name}: stored {list(t.shape)} (tag {shapes.get(name)}), model {list(ref.shape)}"
            )
    model = model.to(next(iter(params.values())).dtype if dtype is None else dtype)
    model.load_state_dict(params)
    return model, blob.get("train")
