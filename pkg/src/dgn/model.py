"""Depth-guided dual-branch restoration network.

The image branch carries ``C`` channels and the depth branch ``C/2``. Each
residual group runs a stack of depth-guided blocks with a progressive window
schedule, exchanging queries between the two branches.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields, replace
from typing import NamedTuple, Optional

import torch
import torch.nn as nn

from .errors import InvalidArgument, InvalidConfig
from .inter_sim import LshConfig, SparseNonLocalAttention
from .intra_sim import DFE, RelPosBias, csc, ssc, window_merge, window_partition, window_schedule

TASKS = ("sr", "denoise")
DEPTH_MEAN = 0.5


@dataclass(frozen=True)
class DgnConfig:
    num_groups: int = 6
    blocks_per_group: int = 6
    channels: int = 60
    base_window: int = 8
    ratios: tuple = (0.5, 1, 2, 4, 6, 8)
    scale: int = 4
    task: str = "sr"
    depth_enabled: bool = True
    lsh: LshConfig = field(default_factory=LshConfig)
    lambda1: float = 0.01
    lambda2: float = 0.01
    csc_mode: str = "channel"
    aid_target: str = "depth"
    denoise_skip: bool = True
    rgb_mean: tuple = (0.4488, 0.4371, 0.4040)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(self.ratios))
        object.__setattr__(self, "rgb_mean", tuple(self.rgb_mean))
        if isinstance(self.lsh, dict):
            object.__setattr__(self, "lsh", LshConfig(**self.lsh))

    def validate(self):
        if self.num_groups < 1 or self.blocks_per_group < 1:
            raise InvalidConfig("num_groups and blocks_per_group must be positive")
        if self.channels < 4 or self.channels % 4:
            raise InvalidConfig(f"channels must be a positive multiple of 4, got {self.channels}")
        if len(self.ratios) != self.blocks_per_group:
            raise InvalidConfig(
                f"{len(self.ratios)} window ratios given for {self.blocks_per_group} blocks per group"
            )
        if self.task not in TASKS:
            raise InvalidConfig(f"unknown task {self.task!r}")
        if self.task == "sr" and self.scale != 4:
            raise InvalidConfig(f"sr supports scale 4 only, got {self.scale}")
        if self.task == "denoise" and self.scale != 1:
            raise InvalidConfig(f"denoise requires scale 1, got {self.scale}")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidConfig("loss weights must be non-negative")
        if self.csc_mode not in ("channel", "spatial"):
            raise InvalidConfig(f"unknown csc_mode {self.csc_mode!r}")
        if self.aid_target not in ("depth", "image"):
            raise InvalidConfig(f"unknown aid_target {self.aid_target!r}")
        self.lsh.validate()
        window_schedule(self.base_window, self.ratios)
        return self

    @property
    def window_sizes(self):
        return window_schedule(self.base_window, self.ratios)

    def to_dict(self):
        d = asdict(self)
        d["ratios"] = list(self.ratios)
        d["rgb_mean"] = list(self.rgb_mean)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


class BranchState(NamedTuple):
    f: torch.Tensor
    f_d: Optional[torch.Tensor]


class ChannelNorm(nn.LayerNorm):
    """LayerNorm over the channel axis of a ``(B, C, H, W)`` map."""

    def forward(self, x):
        return super().forward(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


def channel_linear(linear, x):
    return linear(x.permute(0, 2, 3, 1)).permute(0, 3, 1, 2)


class DSEBlock(nn.Module):
    """Depth-guided spatial enhancement block.

    Image input ``x`` (C channels) is split into X1 (inter-object path) and
    X2 (windowed correlation). The depth input ``x_d`` (C/2 channels) runs the
    windowed path whole. Queries are swapped across branches for the spatial
    correlation terms only.
    """

    def __init__(self, channels, win_size, lsh: LshConfig, depth_enabled=True, csc_mode="channel"):
        super().__init__()
        if channels % 4:
            raise InvalidConfig(f"channels must be divisible by 4, got {channels}")
        half = channels // 2
        self.channels = channels
        self.win_size = win_size
        self.depth_enabled = depth_enabled
        self.csc_mode = csc_mode

        self.inter = SparseNonLocalAttention(half, lsh)
        self.dfe = DFE(half)
        self.norm = ChannelNorm(channels)
        self.proj = nn.Linear(channels, channels)
        if depth_enabled:
            self.dfe_d = DFE(half)
            self.norm_d = ChannelNorm(half)
            self.proj_d = nn.Linear(half, half)

    def forward(self, x, x_d, bias):
        if x.shape[1] != self.channels:
            raise InvalidConfig(f"expected {self.channels} image channels, got {x.shape[1]}")
        x1, x2 = x.chunk(2, dim=1)
        q, v = window_partition(self.dfe(x2), self.win_size).split_channels()
        x1 = self.inter(x1)

        spatial = ssc(q, v, bias).windows
        if self.depth_enabled:
            if x_d is None or x_d.shape[1] != self.channels // 2 or x_d.shape[2:] != x.shape[2:]:
                got = None if x_d is None else tuple(x_d.shape)
                raise InvalidConfig(f"depth features must be (B, {self.channels // 2}, H, W), got {got}")
            q_d, v_d = window_partition(self.dfe_d(x_d), self.win_size).split_channels()
            spatial = spatial + ssc(q_d, v, bias).windows

        t = q.with_windows(torch.cat([csc(q, v, self.csc_mode).windows, spatial], dim=-1))
        t = torch.cat([window_merge(t), x1], dim=1)
        out = channel_linear(self.proj, self.norm(t)) + x

        if not self.depth_enabled:
            return out, x_d
        spatial_d = ssc(q_d, v_d, bias).windows + ssc(q, v_d, bias).windows
        t_d = window_merge(q_d.with_windows(torch.cat([csc(q_d, v_d, self.csc_mode).windows, spatial_d], dim=-1)))
        out_d = channel_linear(self.proj_d, self.norm_d(t_d)) + x_d
        return out, out_d


class ResidualGroup(nn.Module):
    def __init__(self, channels, window_sizes, lsh: LshConfig, depth_enabled=True, csc_mode="channel", group_index=0):
        super().__init__()
        self.depth_enabled = depth_enabled
        self.blocks = nn.ModuleList()
        self.norms = nn.ModuleList()
        self.norms_d = nn.ModuleList()
        for i, w in enumerate(window_sizes):
            block_lsh = replace(lsh, seed=(lsh.seed + 1_000_003 * group_index + 7919 * i) % 2**64)
            self.blocks.append(DSEBlock(channels, w, block_lsh, depth_enabled, csc_mode))
            self.norms.append(ChannelNorm(channels))
            if depth_enabled:
                self.norms_d.append(ChannelNorm(channels // 2))
        self.conv = nn.Conv2d(channels, channels, 3, padding=1)
        if depth_enabled:
            self.conv_d = nn.Conv2d(channels // 2, channels // 2, 3, padding=1)

    @property
    def window_sizes(self):
        return [b.win_size for b in self.blocks]

    def forward(self, state: BranchState, biases) -> BranchState:
        f, f_d = state
        if f.shape[-1] < 1 or f.shape[-2] < 1:
            raise InvalidArgument(f"feature map has non-positive spatial dims: {tuple(f.shape)}")
        x, x_d = f, f_d
        for i, block in enumerate(self.blocks):
            x, x_d = block(x, x_d, biases[str(block.win_size)])
            x = self.norms[i](x)
            if self.depth_enabled:
                x_d = self.norms_d[i](x_d)
        out = self.conv(x) + f
        out_d = self.conv_d(x_d) + f_d if self.depth_enabled else f_d
        return BranchState(out, out_d)


def _reconstruction(channels, task):
    if task == "sr":
        return nn.Sequential(
            nn.Conv2d(channels, 4 * channels, 3, padding=1),
            nn.PixelShuffle(2),
            nn.Conv2d(channels, 4 * channels, 3, padding=1),
            nn.PixelShuffle(2),
            nn.Conv2d(channels, 3, 3, padding=1),
        )
    return nn.Conv2d(channels, 3, 3, padding=1)


class DGN(nn.Module):
    def __init__(self, cfg: DgnConfig):
        super().__init__()
        self.cfg = cfg.validate()
        c, half = cfg.channels, cfg.channels // 2
        sizes = cfg.window_sizes
        self.pos_bias = nn.ModuleDict({str(w): RelPosBias(w) for w in sorted(set(sizes))})

        self.shallow = nn.Conv2d(3, c, 3, padding=1)
        self.groups = nn.ModuleList(
            ResidualGroup(c, sizes, cfg.lsh, cfg.depth_enabled, cfg.csc_mode, group_index=g)
            for g in range(cfg.num_groups)
        )
        self.body_conv = nn.Conv2d(c, c, 3, padding=1)
        self.head = _reconstruction(c, cfg.task)
        if cfg.depth_enabled:
            self.shallow_d = nn.Conv2d(3, half, 3, padding=1)
            self.body_conv_d = nn.Conv2d(half, half, 3, padding=1)
            self.head_d = _reconstruction(half, cfg.task)
        self.reset_parameters()

    def reset_parameters(self):
        for m in self.modules():
            if isinstance(m, nn.Linear):
                nn.init.trunc_normal_(m.weight, std=0.02)
                nn.init.zeros_(m.bias)
        for g in self.groups:
            convs = [g.conv, g.conv_d] if self.cfg.depth_enabled else [g.conv]
            for conv in convs:
                nn.init.zeros_(conv.weight)
                nn.init.zeros_(conv.bias)

    def features(self, x, x_d=None):
        """Shallow and deep features ``(f, f_d, f', f_d')``; depth entries are None when disabled."""
        f = self.shallow(x)
        f_d = self.shallow_d(x_d) if self.cfg.depth_enabled else None
        state = BranchState(f, f_d)
        for g in self.groups:
            state = g(state, self.pos_bias)
        deep = self.body_conv(state.f) + f
        deep_d = self.body_conv_d(state.f_d) + f_d if self.cfg.depth_enabled else None
        return f, f_d, deep, deep_d

    def _reconstruct(self, head, feat, inp, offset):
        # the denoising skip adds the raw input back so a zero head is an exact identity
        if self.cfg.task == "denoise" and self.cfg.denoise_skip:
            return head(feat) + inp
        return head(feat) + offset

    def forward(self, x, x_d=None):
        if x.dim() != 4 or x.shape[1] != 3:
            raise InvalidArgument(f"expected a (B, 3, h, w) image, got {tuple(x.shape)}")
        if self.cfg.depth_enabled and (x_d is None or x_d.shape != x.shape):
            got = None if x_d is None else tuple(x_d.shape)
            raise InvalidArgument(f"depth input must match image shape {tuple(x.shape)}, got {got}")
        mean = x.new_tensor(self.cfg.rgb_mean).reshape(1, 3, 1, 1)
        if not self.cfg.depth_enabled:
            _, _, deep, _ = self.features(x - mean)
            return self._reconstruct(self.head, deep, x, mean), None
        _, _, deep, deep_d = self.features(x - mean, x_d - DEPTH_MEAN)
        y = self._reconstruct(self.head, deep, x, mean)
        return y, self._reconstruct(self.head_d, deep_d, x_d, DEPTH_MEAN)


def build_model(cfg: DgnConfig, seed=None, dtype=torch.float32):
    """Construct a :class:`DGN` with parameters drawn from a seeded torch generator."""
    seed = cfg.seed if seed is None else seed
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = DGN(cfg)
    return model.to(dtype)
