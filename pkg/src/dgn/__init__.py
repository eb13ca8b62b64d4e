"""Depth-guided dual-branch image restoration."""
from .inter_sim import LshConfig
from .losses import LossReport, aid_loss, image_loss, total_loss
from .metrics import psnr, ssim
from .model import DGN, BranchState, DgnConfig, build_model
from .schedule import LrSchedule, lr_at

__version__ = "0.1.0"

__all__ = [
    "DGN",
    "BranchState",
    "DgnConfig",
    "LossReport",
    "LrSchedule",
    "LshConfig",
    "aid_loss",
    "build_model",
    "image_loss",
    "lr_at",
    "psnr",
    "ssim",
    "total_loss",
]
