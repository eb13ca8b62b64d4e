"""Full-reference quality metrics."""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F

from .errors import InvalidArgument

PSNR_CAP = 100.0
LUMA = (0.299, 0.587, 0.114)
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _as_tensor(a):
    return a if isinstance(a, torch.Tensor) else torch.as_tensor(a)


def psnr(a, b, max_val=1.0):
    a, b = _as_tensor(a).double(), _as_tensor(b).double()
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    if max_val <= 0:
        raise InvalidArgument("max_val must be positive")
    mse = float(((a - b) ** 2).mean())
    if mse == 0:
        return PSNR_CAP
    return 10.0 * math.log10(max_val**2 / mse)


def to_gray(x):
    """Luma of a ``(..., 3, H, W)`` image; single-channel input is passed through."""
    if x.dim() >= 3 and x.shape[-3] == 3:
        w = torch.tensor(LUMA, dtype=x.dtype, device=x.device).reshape(3, 1, 1)
        return (x * w).sum(dim=-3)
    if x.dim() >= 3 and x.shape[-3] == 1:
        return x[..., 0, :, :]
    return x


def gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA, dtype=torch.float64):
    ax = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-(ax**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim_map(a, b, data_range=1.0):
    """Local SSIM values over all valid 11x11 window positions, shape ``(N, h', w')``."""
    a, b = _as_tensor(a).double(), _as_tensor(b).double()
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    ga, gb = to_gray(a), to_gray(b)
    if ga.shape[-1] < SSIM_WINDOW or ga.shape[-2] < SSIM_WINDOW:
        raise InvalidArgument(f"image {tuple(ga.shape[-2:])} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    ga = ga.reshape(-1, 1, *ga.shape[-2:])
    gb = gb.reshape(-1, 1, *gb.shape[-2:])
    win = gaussian_window()[None, None]
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    mu_a, mu_b = F.conv2d(ga, win), F.conv2d(gb, win)
    var_a = F.conv2d(ga * ga, win) - mu_a**2
    var_b = F.conv2d(gb * gb, win) - mu_b**2
    cov = F.conv2d(ga * gb, win) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return (num / den)[:, 0]


def ssim(a, b, data_range=1.0):
    return float(ssim_map(a, b, data_range).mean())
