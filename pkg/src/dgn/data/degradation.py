"""Degradation synthesis: bicubic downsampling and additive white Gaussian noise."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
import torch

from ..errors import InvalidArgument

CUBIC_A = -0.5


@dataclass
class SamplePair:
    """LQ/HQ images with their depth maps; tensors are ``(3, h, w)`` or batched ``(B, 3, h, w)``."""

    lq: torch.Tensor
    hq: torch.Tensor
    lq_depth: Optional[torch.Tensor]
    hq_depth: Optional[torch.Tensor]
    image_id: str = ""


def cubic(x, a=CUBIC_A):
    x = np.abs(x)
    x2, x3 = x * x, x * x * x
    return np.where(
        x <= 1,
        (a + 2) * x3 - (a + 3) * x2 + 1,
        np.where(x < 2, a * x3 - 5 * a * x2 + 8 * a * x - 4 * a, 0.0),
    )


@lru_cache(maxsize=64)
def resize_matrix(in_size, out_size, antialias=True, a=CUBIC_A):
    """Dense ``(out_size, in_size)`` bicubic resampling matrix.

    Pixel centres are aligned (half-pixel convention). When downscaling with
    ``antialias`` the kernel is stretched by the scale factor. Taps falling
    outside the input are dropped and each row renormalized to sum to one.
    """
    scale = in_size / out_size
    stretch = max(scale, 1.0) if antialias else 1.0
    support = 2.0 * stretch
    m = np.zeros((out_size, in_size))
    for i in range(out_size):
        centre = (i + 0.5) * scale
        lo = max(0, int(math.floor(centre - support)))
        hi = min(in_size, int(math.ceil(centre + support)) + 1)
        taps = np.arange(lo, hi)
        w = cubic((taps + 0.5 - centre) / stretch, a)
        m[i, lo:hi] = w / w.sum()
    m.setflags(write=False)
    return m


def bicubic_resize(img: torch.Tensor, out_h, out_w, antialias=True) -> torch.Tensor:
    """Resize the last two dims of ``img``; computed in float64, returned in the input dtype."""
    h, w = img.shape[-2:]
    rh = torch.tensor(resize_matrix(h, out_h, antialias)).to(img.device)
    rw = torch.tensor(resize_matrix(w, out_w, antialias)).to(img.device)
    out = rh @ img.to(torch.float64) @ rw.T
    return out.to(img.dtype)


def bicubic_upsample(lq, s):
    h, w = lq.shape[-2:]
    return bicubic_resize(lq, h * s, w * s).clamp(0, 1)


def degrade_sr(hq, s=4, seed=0, depth=None) -> SamplePair:
    """Bicubic ``x s`` downsample of ``hq``.

    ``depth`` is an ``(lq_depth, hq_depth)`` pair; when omitted a synthetic
    field seeded by ``seed`` is attached.
    """
    h, w = hq.shape[-2:]
    if s < 1 or h % s or w % s:
        raise InvalidArgument(f"HQ dims {h}x{w} are not divisible by scale {s}")
    lq = bicubic_resize(hq, h // s, w // s).clamp(0, 1)
    if depth is None:
        from .depth import synthetic_depth_pair

        depth = synthetic_depth_pair((h // s, w // s), (h, w), seed, dtype=hq.dtype)
    return SamplePair(lq, hq, depth[0], depth[1])


def gaussian_noise(shape, sigma, seed):
    """Standard-normal field from PCG64(seed), scaled by ``sigma / 255``."""
    gen = np.random.Generator(np.random.PCG64(seed))
    return torch.from_numpy(gen.standard_normal(tuple(shape)) * (sigma / 255.0))


def degrade_noise(hq, sigma=25.0, seed=0, depth=None) -> SamplePair:
    if sigma < 0:
        raise InvalidArgument(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0:
        lq = hq.clone()
    else:
        noisy = hq.to(torch.float64) + gaussian_noise(hq.shape, sigma, seed).to(hq.device)
        lq = noisy.clamp(0, 1).to(hq.dtype)
    if depth is None:
        from .depth import synthetic_depth_pair

        depth = synthetic_depth_pair(hq.shape[-2:], hq.shape[-2:], seed, dtype=hq.dtype)
    return SamplePair(lq, hq, depth[0], depth[1])


def degrade(hq, task, scale=4, sigma=25.0, seed=0, depth=None) -> SamplePair:
    if task == "sr":
        return degrade_sr(hq, scale, seed, depth)
    if task == "denoise":
        return degrade_noise(hq, sigma, seed, depth)
    raise InvalidArgument(f"unknown task {task!r}")
