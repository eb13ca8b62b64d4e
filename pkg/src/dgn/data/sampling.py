"""Random paired patch sampling with rotation/flip augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from ..errors import InvalidArgument
from .degradation import SamplePair


@dataclass(frozen=True)
class BatchConfig:
    batch_size: int = 8
    patch_size: int = 256
    scale: int = 4
    augment: bool = True


def augment(t, rot, flip):
    """Horizontal flip (if ``flip``) followed by ``rot`` counter-clockwise quarter turns."""
    if flip:
        t = t.flip(-1)
    return torch.rot90(t, int(rot), dims=(-2, -1)) if rot % 4 else t


def crop_pair(pair: SamplePair, y, x, lq_patch, scale):
    """Crop an LQ window at ``(y, x)`` and the matching HQ window at ``(y*s, x*s)``."""
    hp = lq_patch * scale
    ys, xs = y * scale, x * scale

    def lq_crop(t):
        return None if t is None else t[..., y : y + lq_patch, x : x + lq_patch]

    def hq_crop(t):
        return None if t is None else t[..., ys : ys + hp, xs : xs + hp]

    return SamplePair(lq_crop(pair.lq), hq_crop(pair.hq), lq_crop(pair.lq_depth), hq_crop(pair.hq_depth), pair.image_id)


def sample_batch(dataset, cfg: BatchConfig, rng: np.random.Generator) -> SamplePair:
    """Draw ``cfg.batch_size`` paired crops; all four tensors share one transform."""
    if not dataset:
        raise InvalidArgument("dataset is empty")
    if cfg.patch_size % cfg.scale:
        raise InvalidArgument(f"patch {cfg.patch_size} not divisible by scale {cfg.scale}")
    lp = cfg.patch_size // cfg.scale
    items = []
    for _ in range(cfg.batch_size):
        pair = dataset[int(rng.integers(len(dataset)))]
        lh, lw = pair.lq.shape[-2:]
        if lp > lh or lp > lw:
            raise InvalidArgument(f"crop {cfg.patch_size} larger than image {pair.hq.shape[-2:]}")
        y = int(rng.integers(lh - lp + 1))
        x = int(rng.integers(lw - lp + 1))
        crop = crop_pair(pair, y, x, lp, cfg.scale)
        if cfg.augment:
            rot, flip = int(rng.integers(4)), int(rng.integers(2))
            crop = SamplePair(
                *(None if t is None else augment(t, rot, flip) for t in (crop.lq, crop.hq, crop.lq_depth, crop.hq_depth)),
                image_id=crop.image_id,
            )
        items.append(crop)

    def stack(name):
        ts = [getattr(p, name) for p in items]
        return None if any(t is None for t in ts) else torch.stack(ts)

    return SamplePair(stack("lq"), stack("hq"), stack("lq_depth"), stack("hq_depth"))
