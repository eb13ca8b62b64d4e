"""Depth sidecar ingestion and synthetic depth fields.

Sidecars are single-channel 16-bit PNG rasters named ``<id>.lqdepth`` and
``<id>.hqdepth``. Loaded maps are min-max normalized per image (a constant
map becomes all zeros) and replicated to three channels.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from ..errors import DecodeError, InvalidArgument, MissingDepth

LQ_SUFFIX = ".lqdepth"
HQ_SUFFIX = ".hqdepth"


def read_sidecar(path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            arr = np.array(im)
    except OSError as exc:
        raise DecodeError(f"cannot decode depth sidecar {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DecodeError(f"depth sidecar {path} is not single-channel (shape {arr.shape})")
    return arr.astype(np.float64)


def write_sidecar(path, depth):
    arr = np.asarray(depth)
    if arr.ndim != 2:
        raise InvalidArgument(f"depth must be 2-D, got shape {arr.shape}")
    if arr.dtype != np.uint16:
        if arr.min() < 0 or arr.max() > 65535:
            raise InvalidArgument("depth values must lie in [0, 65535]")
        arr = np.round(arr).astype(np.uint16)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path, format="PNG")


def normalize_depth(depth, dtype=torch.float32) -> torch.Tensor:
    """Min-max normalize a 2-D map to [0, 1] and replicate it to ``(3, H, W)``."""
    d = torch.as_tensor(np.asarray(depth, dtype=np.float64))
    lo, hi = d.min(), d.max()
    d = torch.zeros_like(d) if hi == lo else (d - lo) / (hi - lo)
    return d.to(dtype).unsqueeze(0).expand(3, -1, -1).contiguous()


def synthetic_field(h, w, seed) -> np.ndarray:
    """Quantized 16-bit depth field: a tilted ramp plus three Gaussian blobs.

    The field is a function of normalized pixel-centre coordinates, so
    fields of different resolutions with the same seed depict the same scene.
    """
    gen = np.random.Generator(np.random.PCG64(seed))
    angle = gen.uniform(0, 2 * np.pi)
    centres = gen.uniform(0.1, 0.9, size=(3, 2))
    widths = gen.uniform(0.05, 0.25, size=3)
    amps = gen.uniform(0.3, 1.0, size=3)

    yy = (np.arange(h) + 0.5)[:, None] / h
    xx = (np.arange(w) + 0.5)[None, :] / w
    field = 0.5 + 0.5 * (np.cos(angle) * (xx - 0.5) + np.sin(angle) * (yy - 0.5))
    for (cy, cx), s, a in zip(centres, widths, amps):
        field = field + a * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * s * s))
    field = field / field.max()
    return np.round(field * 65535).astype(np.uint16)


def field_checksum(field: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(field, dtype="<u2").tobytes()).hexdigest()


def synthetic_depth_pair(lq_shape, hq_shape, seed, dtype=torch.float32):
    return (
        normalize_depth(synthetic_field(*lq_shape, seed), dtype),
        normalize_depth(synthetic_field(*hq_shape, seed), dtype),
    )


def ingest_depth(image_id, depth_dir=None, synthetic=False, lq_shape=None, hq_shape=None, seed=0, dtype=torch.float32):
    """Load ``(lq_depth, hq_depth)`` for ``image_id``.

    Sidecars in ``depth_dir`` take precedence. In synthetic mode missing
    sidecars are replaced by :func:`synthetic_field` at the requested shapes.
    """
    maps = []
    for suffix, shape in ((LQ_SUFFIX, lq_shape), (HQ_SUFFIX, hq_shape)):
        path = Path(depth_dir) / f"{image_id}{suffix}" if depth_dir is not None else None
        if path is not None and path.exists():
            raw = read_sidecar(path)
            if shape is not None and tuple(raw.shape) != tuple(shape):
                raise InvalidArgument(f"depth sidecar {path} is {raw.shape}, expected {tuple(shape)}")
            maps.append(normalize_depth(raw, dtype))
        elif synthetic:
            if shape is None:
                raise InvalidArgument("synthetic depth needs an explicit shape")
            maps.append(normalize_depth(synthetic_field(*shape, seed), dtype))
        else:
            raise MissingDepth(image_id, path)
    return maps[0], maps[1]
