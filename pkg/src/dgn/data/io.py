"""Image file reading and writing."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from ..errors import DecodeError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")


def read_rgb(path) -> np.ndarray:
    """Decode ``path`` to an ``(H, W, 3)`` uint8 array."""
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"cannot decode image {path}: {exc}") from exc
    if arr.size == 0:
        raise DecodeError(f"image {path} has zero area")
    return arr


def load_image(path, dtype=torch.float32) -> torch.Tensor:
    """``(3, H, W)`` tensor with values in [0, 1]."""
    arr = read_rgb(path)
    return torch.from_numpy(arr.astype(np.float64) / 255.0).permute(2, 0, 1).to(dtype)


def to_uint8(img: torch.Tensor) -> np.ndarray:
    x = img.detach().to(torch.float64).clamp(0, 1).mul(255.0).round()
    return x.to(torch.uint8).permute(1, 2, 0).cpu().numpy()


def save_image(img: torch.Tensor, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(img)).save(path, format="PNG")


def list_images(directory):
    directory = Path(directory)
    return sorted(p for p in directory.rglob("*") if p.suffix.lower() in IMAGE_SUFFIXES and p.is_file())
