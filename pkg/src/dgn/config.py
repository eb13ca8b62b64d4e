"""YAML run configuration.

A config file is a mapping with optional sections::

    model:     DgnConfig fields (lsh: nested LshConfig fields)
    schedule:  base_lr, factor, and either total_iters (scaled default
               milestones) or explicit milestones
    optim:     betas, eps, weight_decay, grad_clip
    train:     batch_size, patch_size, augment, checkpoint_every, sigma_range
    curate:    delta, brightness_threshold, normalize_brightness, patch_size
    eval:      sigma
    degrade:   task, scale, sigma

Command-line flags override values read from the file.
"""
from __future__ import annotations

from pathlib import Path

import yaml

from .errors import InvalidConfig
from .model import DgnConfig
from .schedule import LrSchedule
from .train import OptimConfig

SECTIONS = ("model", "schedule", "optim", "train", "curate", "eval", "degrade")


def load_config(path=None):
    if path is None:
        return {}
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: top level must be a mapping")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise InvalidConfig(f"{path}: unknown sections {sorted(unknown)}")
    return data


def model_config(data) -> DgnConfig:
    return DgnConfig.from_dict(dict(data.get("model", {}))).validate()


def schedule_config(data, total_iters=None) -> LrSchedule:
    sec = dict(data.get("schedule", {}))
    if total_iters is not None:
        sec["total_iters"] = total_iters
    if "milestones" in sec:
        return LrSchedule(**sec)
    if "total_iters" in sec:
        return LrSchedule.scaled(sec.pop("total_iters"), **sec)
    return LrSchedule(**sec)


def optim_config(data) -> OptimConfig:
    sec = dict(data.get("optim", {}))
    try:
        return OptimConfig(**sec)
    except TypeError as exc:
        raise InvalidConfig(f"optim section: {exc}") from exc
