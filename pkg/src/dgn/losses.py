"""Training objectives: image L1, depth L1 and the affine-invariant depth loss."""
from __future__ import annotations

from dataclasses import dataclass

import torch

from .errors import InvalidArgument, InvalidConfig

MAD_EPS = 1e-8


@dataclass
class LossReport:
    image_loss: torch.Tensor
    depth_l1: torch.Tensor
    depth_aid: torch.Tensor
    total: torch.Tensor
    lambda1: float
    lambda2: float

    def as_floats(self):
        return {
            "image_loss": float(self.image_loss.detach()),
            "depth_l1": float(self.depth_l1.detach()),
            "depth_aid": float(self.depth_aid.detach()),
            "total": float(self.total.detach()),
        }


def _same_shape(a, b):
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")


def image_loss(y, x):
    _same_shape(y, x)
    return (y - x).abs().mean()


def _normalize(d):
    # lower-median: torch.median picks the lower of the two middle values
    med = d.median(dim=-1, keepdim=True).values
    centered = d - med
    mad = centered.abs().mean(dim=-1, keepdim=True)
    return centered, mad


def aid_loss(pred, target):
    """Affine-invariant depth loss on channel 0 of ``(B, C, H, W)`` depth maps.

    Each map is shifted by its median and scaled by its mean absolute
    deviation from that median. Images whose deviation is below ``MAD_EPS``
    in either argument contribute zero.
    """
    _same_shape(pred, target)
    p = pred[:, 0].reshape(pred.shape[0], -1)
    t = target[:, 0].reshape(target.shape[0], -1)
    pc, pmad = _normalize(p)
    tc, tmad = _normalize(t)
    ok = (pmad > MAD_EPS) & (tmad > MAD_EPS)
    one = torch.ones_like(pmad)
    diff = (pc / torch.where(ok, pmad, one) - tc / torch.where(ok, tmad, one)).abs().mean(dim=-1, keepdim=True)
    return torch.where(ok, diff, torch.zeros_like(diff)).mean()


def total_loss(y, x, y_d, x_d, lambda1=0.01, lambda2=0.01, aid_target="depth"):
    """``L1(y, x) + lambda1 * L1(y_d, x_d) + lambda2 * AID(y_d, ref)``.

    ``aid_target="depth"`` compares against ``x_d``; ``"image"`` compares the
    predicted depth against the restored image ``y``. With ``y_d=None`` (depth
    branch disabled) both depth terms are zero.
    """
    if lambda1 < 0 or lambda2 < 0:
        raise InvalidConfig(f"loss weights must be non-negative, got {lambda1}, {lambda2}")
    img = image_loss(y, x)
    if y_d is None:
        zero = torch.zeros((), dtype=img.dtype, device=img.device)
        l1 = aid = zero
    else:
        l1 = image_loss(y_d, x_d)
        if aid_target == "depth":
            aid = aid_loss(y_d, x_d)
        elif aid_target == "image":
            aid = aid_loss(y_d, y)
        else:
            raise InvalidConfig(f"unknown aid_target {aid_target!r}")
    total = img + lambda1 * l1 + lambda2 * aid
    return LossReport(img, l1, aid, total, lambda1, lambda2)
