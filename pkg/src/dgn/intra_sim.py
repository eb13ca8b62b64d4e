"""Windowed correlation attention (intra-object similarity).

Feature maps are ``(B, C, H, W)`` tensors. Windows are cut row-major after
reflection padding the bottom/right edges up to a multiple of the window size.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

import torch
import torch.nn as nn

from .errors import CorruptWindowSet, InvalidArgument, InvalidConfig

__all__ = [
    "WindowSet",
    "RelPosBias",
    "DFE",
    "window_partition",
    "window_merge",
    "reflect_pad",
    "dfe",
    "ssc",
    "csc",
    "window_schedule",
]


@dataclass(frozen=True)
class WindowSet:
    windows: torch.Tensor  # (B * num_windows, win_size**2, C)
    win_size: int
    pad_h: int
    pad_w: int
    orig_h: int
    orig_w: int

    @property
    def grid(self):
        return (self.orig_h + self.pad_h) // self.win_size, (self.orig_w + self.pad_w) // self.win_size

    @property
    def num_windows(self):
        gh, gw = self.grid
        return gh * gw

    @property
    def channels(self):
        return self.windows.shape[-1]

    def with_windows(self, windows):
        return replace(self, windows=windows)

    def split_channels(self):
        """Split along channels into two equal halves (query, value)."""
        c = self.channels
        if c % 2:
            raise InvalidConfig(f"cannot split {c} channels into query/value halves")
        return self.with_windows(self.windows[..., : c // 2]), self.with_windows(self.windows[..., c // 2 :])


def _reflect_index(n, total):
    # Repeated reflection about the edge samples, so padding may exceed n.
    if n == 1:
        return torch.zeros(total, dtype=torch.long)
    period = 2 * (n - 1)
    idx = torch.arange(total) % period
    return torch.where(idx > n - 1, period - idx, idx)


def reflect_pad(x, pad_h, pad_w):
    """Reflection-pad the bottom and right edges of ``x`` by arbitrary amounts."""
    if pad_h == 0 and pad_w == 0:
        return x
    h, w = x.shape[-2:]
    x = x.index_select(-2, _reflect_index(h, h + pad_h).to(x.device))
    return x.index_select(-1, _reflect_index(w, w + pad_w).to(x.device))


def window_partition(x: torch.Tensor, win_size: int) -> WindowSet:
    if win_size <= 0:
        raise InvalidArgument(f"win_size must be positive, got {win_size}")
    if x.dim() != 4 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise InvalidArgument(f"expected a (B, C, H, W) map with positive spatial dims, got {tuple(x.shape)}")
    b, c, h, w = x.shape
    pad_h = (-h) % win_size
    pad_w = (-w) % win_size
    x = reflect_pad(x, pad_h, pad_w)
    gh, gw = (h + pad_h) // win_size, (w + pad_w) // win_size
    windows = (
        x.reshape(b, c, gh, win_size, gw, win_size)
        .permute(0, 2, 4, 3, 5, 1)
        .reshape(b * gh * gw, win_size * win_size, c)
    )
    return WindowSet(windows, win_size, pad_h, pad_w, h, w)


def window_merge(ws: WindowSet) -> torch.Tensor:
    s = ws.win_size
    if s <= 0 or ws.pad_h < 0 or ws.pad_w < 0 or ws.orig_h <= 0 or ws.orig_w <= 0:
        raise CorruptWindowSet("window set carries invalid geometry")
    if (ws.orig_h + ws.pad_h) % s or (ws.orig_w + ws.pad_w) % s:
        raise CorruptWindowSet("padded dims are not multiples of the window size")
    if ws.windows.dim() != 3 or ws.windows.shape[1] != s * s:
        raise CorruptWindowSet(f"window area {tuple(ws.windows.shape)} does not match win_size {s}")
    gh, gw = ws.grid
    n, _, c = ws.windows.shape
    if n % (gh * gw):
        raise CorruptWindowSet(f"{n} windows is not a multiple of the {gh}x{gw} grid")
    b = n // (gh * gw)
    x = ws.windows.reshape(b, gh, gw, s, s, c).permute(0, 5, 1, 3, 2, 4).reshape(b, c, gh * s, gw * s)
    return x[:, :, : ws.orig_h, : ws.orig_w]


class RelPosBias(nn.Module):
    """Learnable relative positional bias for square windows.

    ``table`` has one row per distinct (dy, dx) offset; ``index[p, q]`` picks
    the row for the offset between window positions ``p`` and ``q``.
    """

    def __init__(self, win_size, num_heads=1):
        super().__init__()
        if num_heads != 1:
            raise InvalidConfig("only single-head correlation is supported")
        self.win_size = win_size
        self.num_heads = num_heads
        self.table = nn.Parameter(torch.zeros((2 * win_size - 1) ** 2, num_heads))
        nn.init.trunc_normal_(self.table, std=0.02)

        coords = torch.stack(torch.meshgrid(torch.arange(win_size), torch.arange(win_size), indexing="ij"))
        coords = coords.flatten(1)
        rel = (coords[:, :, None] - coords[:, None, :]).permute(1, 2, 0) + (win_size - 1)
        self.register_buffer("index", rel[..., 0] * (2 * win_size - 1) + rel[..., 1], persistent=False)

    def forward(self):
        """Bias matrix of shape ``(win_area, win_area)`` (head dimension squeezed)."""
        area = self.win_size**2
        return self.table[self.index.reshape(-1)].reshape(area, area, self.num_heads)[..., 0]


def _check_pair(q: WindowSet, v: WindowSet):
    if q.win_size != v.win_size or q.windows.shape != v.windows.shape:
        raise InvalidArgument(
            f"query/value window sets disagree: {tuple(q.windows.shape)} (w={q.win_size}) "
            f"vs {tuple(v.windows.shape)} (w={v.win_size})"
        )


def ssc(q: WindowSet, v: WindowSet, bias=None) -> WindowSet:
    """Spatial self-correlation ``(Q V^T / sqrt(d) + B) V`` per window.

    ``bias`` may be a :class:`RelPosBias`, a precomputed ``(area, area)``
    tensor, or ``None`` for no positional term.
    """
    _check_pair(q, v)
    qw, vw = q.windows, v.windows
    corr = qw @ vw.transpose(-2, -1) / math.sqrt(qw.shape[-1])
    if bias is not None:
        b = bias() if isinstance(bias, nn.Module) else bias
        if b.shape != corr.shape[-2:]:
            raise InvalidArgument(f"bias shape {tuple(b.shape)} does not match window area {corr.shape[-1]}")
        corr = corr + b
    return q.with_windows(corr @ vw)


def csc(q: WindowSet, v: WindowSet, mode="channel") -> WindowSet:
    """Channel self-correlation.

    ``mode="channel"``: ``V (Q^T V / sqrt(hw))``, a ``d x d`` channel map.
    ``mode="spatial"``: ``(Q V^T / sqrt(hw)) V``, SSC operand order with an area denominator.
    """
    _check_pair(q, v)
    qw, vw = q.windows, v.windows
    scale = math.sqrt(qw.shape[-2])
    if mode == "channel":
        out = vw @ (qw.transpose(-2, -1) @ vw / scale)
    elif mode == "spatial":
        out = (qw @ vw.transpose(-2, -1) / scale) @ vw
    else:
        raise InvalidConfig(f"unknown csc mode {mode!r}")
    return q.with_windows(out)


def dfe(x, conv, linear):
    """Gated product ``conv(x) * linear(x)``; both branches must keep the shape of ``x``."""
    a, b = conv(x), linear(x)
    if a.shape != b.shape or a.shape[1] != x.shape[1]:
        raise InvalidConfig(
            f"DFE branches disagree: conv -> {tuple(a.shape)}, linear -> {tuple(b.shape)}, input {tuple(x.shape)}"
        )
    return a * b


class DFE(nn.Module):
    """Dual feature extraction: bottleneck conv branch gated by a per-pixel linear branch."""

    def __init__(self, channels):
        super().__init__()
        if channels < 2 or channels % 2:
            raise InvalidConfig(f"DFE needs an even channel count, got {channels}")
        mid = channels // 2
        self.conv = nn.Sequential(
            nn.Conv2d(channels, mid, 1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(mid, mid, 3, padding=1),
            nn.LeakyReLU(0.2),
            nn.Conv2d(mid, channels, 1),
        )
        # bias-free so the gate maps zero input to zero output
        self.linear = nn.Conv2d(channels, channels, 1, bias=False)

    def forward(self, x):
        return dfe(x, self.conv, self.linear)


def window_schedule(base, ratios):
    if base < 2:
        raise InvalidConfig(f"base window must be >= 2, got {base}")
    sizes = []
    for r in ratios:
        r = Fraction(str(r)) if isinstance(r, float) else Fraction(r)
        if r <= 0:
            raise InvalidConfig(f"window ratio must be positive, got {r}")
        size = base * r
        if size.denominator != 1:
            raise InvalidConfig(f"base {base} x ratio {r} is not an integer window size")
        sizes.append(int(size))
    return sizes
