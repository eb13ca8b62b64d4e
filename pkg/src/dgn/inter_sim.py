"""Sparse non-local attention (inter-object similarity).

Positions are hashed with cross-polytope spherical LSH, sorted by bucket and
split into fixed-size chunks; softmax attention runs inside each chunk only.

Random rotations come from numpy's PCG64 generator seeded with
``SeedSequence([seed, round])`` and drawn as ``standard_normal((dim, buckets // 2))``
in float64, which makes bucket assignments reproducible across platforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .errors import InvalidArgument, InvalidConfig, OracleScaleExceeded

__all__ = [
    "LshConfig",
    "BucketAssignment",
    "rotation_matrix",
    "slsh_hash",
    "sparse_nonlocal_attention",
    "dense_nonlocal_oracle",
    "SparseNonLocalAttention",
    "ORACLE_MAX_POSITIONS",
]

ORACLE_MAX_POSITIONS = 4096


@dataclass(frozen=True)
class LshConfig:
    num_rounds: int = 4
    num_buckets: int = 16
    chunk_size: int = 128
    seed: int = 0
    lookback: bool = False

    def validate(self):
        if self.num_rounds < 1:
            raise InvalidConfig(f"num_rounds must be >= 1, got {self.num_rounds}")
        nb = self.num_buckets
        if nb < 2 or nb & (nb - 1):
            raise InvalidConfig(f"num_buckets must be a power of two >= 2, got {nb}")
        if self.chunk_size < 1:
            raise InvalidConfig(f"chunk_size must be >= 1, got {self.chunk_size}")
        if not 0 <= self.seed < 2**64:
            raise InvalidConfig(f"seed must fit in 64 bits, got {self.seed}")
        return self


@dataclass(frozen=True)
class BucketAssignment:
    bucket_id: torch.Tensor  # (..., N) int64
    sort_order: torch.Tensor  # (..., N) permutation, bucket ids non-decreasing along it


def rotation_matrix(cfg: LshConfig, round: int, dim: int) -> np.ndarray:
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, round])))
    return gen.standard_normal((dim, cfg.num_buckets // 2))


def _flatten(features):
    if features.dim() == 4:
        b, c, h, w = features.shape
        return features.reshape(b, c, h * w).transpose(1, 2)
    if features.dim() in (2, 3):
        return features
    raise InvalidArgument(f"expected (N, C), (B, N, C) or (B, C, H, W) features, got {tuple(features.shape)}")


def slsh_hash(features, cfg: LshConfig, round: int, rotation=None) -> BucketAssignment:
    """Cross-polytope bucket assignment for one hashing round.

    Within a bucket, positions are ordered by their winning rotated
    coordinate and then by index, so the order depends on content only.
    """
    cfg.validate()
    if not 0 <= round < cfg.num_rounds:
        raise InvalidConfig(f"round {round} outside [0, {cfg.num_rounds})")
    feats = _flatten(features).detach()
    if rotation is None:
        rotation = torch.from_numpy(rotation_matrix(cfg, round, feats.shape[-1]))
    rotation = rotation.to(device=feats.device, dtype=torch.float64)

    f = feats.to(torch.float64)
    norm = f.norm(dim=-1, keepdim=True)
    unit = torch.where(norm > 0, f / torch.where(norm > 0, norm, torch.ones_like(norm)), torch.zeros_like(f))
    r = unit @ rotation
    score, bucket = torch.cat([r, -r], dim=-1).max(dim=-1)
    bucket = torch.where(norm[..., 0] > 0, bucket, torch.zeros_like(bucket))
    score = torch.where(norm[..., 0] > 0, score, torch.zeros_like(score))

    n = bucket.shape[-1]
    order = torch.arange(n, device=bucket.device).expand_as(bucket)
    # successive stable sorts give the lexicographic order (bucket, score, index)
    perm = torch.sort(score, dim=-1, stable=True).indices
    order = order.gather(-1, perm)
    perm = torch.sort(bucket.gather(-1, order), dim=-1, stable=True).indices
    order = order.gather(-1, perm)
    return BucketAssignment(bucket, order)


def _attend_chunks(seq, chunk_size, lookback=False):
    """Softmax attention inside consecutive chunks of ``seq`` (B, N, C).

    Returns the attended sequence and the per-chunk weight tensors
    ``(B, num_chunks, chunk_size, keys)``; padded query rows are included.
    """
    b, n, c = seq.shape
    nc = -(-n // chunk_size)
    pad = nc * chunk_size - n
    valid = torch.ones(b, n, dtype=torch.bool, device=seq.device)
    if pad:
        seq = torch.cat([seq, seq.new_zeros(b, pad, c)], dim=1)
        valid = torch.cat([valid, valid.new_zeros(b, pad)], dim=1)
    q = seq.reshape(b, nc, chunk_size, c)
    kmask = valid.reshape(b, nc, chunk_size)
    k = q
    if lookback and nc > 1:
        k = torch.cat([q, q.roll(1, dims=1)], dim=2)
        kmask = torch.cat([kmask, kmask.roll(1, dims=1)], dim=2)
    scores = q @ k.transpose(-2, -1) / math.sqrt(c)
    scores = scores.masked_fill(~kmask[:, :, None, :], float("-inf"))
    weights = torch.softmax(scores, dim=-1)
    out = (weights @ k).reshape(b, nc * chunk_size, c)[:, :n]
    return out, weights


def sparse_nonlocal_attention(x, cfg: LshConfig, proj, rotations=None):
    """LSH-bucketed non-local attention with a residual connection.

    ``proj`` maps ``x`` to the shared query/key/value embedding (same shape
    as ``x``). Round outputs are averaged in round order.
    """
    cfg.validate()
    b, c, h, w = x.shape
    emb = proj(x)
    if emb.shape != x.shape:
        raise InvalidConfig(f"projection changed shape {tuple(x.shape)} -> {tuple(emb.shape)}")
    seq = emb.reshape(b, c, h * w).transpose(1, 2)
    total = None
    for r in range(cfg.num_rounds):
        rot = None if rotations is None else rotations[r]
        order = slsh_hash(seq, cfg, r, rotation=rot).sort_order
        idx = order[..., None].expand(-1, -1, c)
        attended, _ = _attend_chunks(seq.gather(1, idx), cfg.chunk_size, cfg.lookback)
        out = torch.empty_like(attended).scatter(1, idx, attended)
        total = out if total is None else total + out
    mean = total / cfg.num_rounds
    return x + mean.transpose(1, 2).reshape(b, c, h, w)


def dense_nonlocal_oracle(x, proj):
    """Exact softmax attention over every position pair, plus the residual."""
    b, c, h, w = x.shape
    if h * w > ORACLE_MAX_POSITIONS:
        raise OracleScaleExceeded(f"{h * w} positions exceeds the dense oracle bound of {ORACLE_MAX_POSITIONS}")
    e = proj(x).reshape(b, c, h * w).transpose(1, 2)
    attn = torch.softmax(e @ e.transpose(1, 2) / math.sqrt(c), dim=-1)
    return x + (attn @ e).transpose(1, 2).reshape(b, c, h, w)


class SparseNonLocalAttention(nn.Module):
    def __init__(self, channels, cfg: LshConfig):
        super().__init__()
        self.cfg = cfg.validate()
        self.proj = nn.Conv2d(channels, channels, 1)
        # plain float64 attribute, not a buffer: dtype casts of the module must not touch it
        self.rotations = torch.from_numpy(
            np.stack([rotation_matrix(cfg, r, channels) for r in range(cfg.num_rounds)])
        )

    def forward(self, x):
        return sparse_nonlocal_attention(x, self.cfg, self.proj, rotations=self.rotations)

    def extra_repr(self):
        c = self.cfg
        return f"rounds={c.num_rounds}, buckets={c.num_buckets}, chunk={c.chunk_size}, seed={c.seed}"
