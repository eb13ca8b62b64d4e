"""Build in-memory paired datasets from a directory of HQ images."""
from __future__ import annotations

import numpy as np

from .curation import image_id_for
from .degradation import degrade
from .depth import ingest_depth
from .io import list_images, load_image


def center_crop_to_multiple(img, s):
    h, w = img.shape[-2:]
    nh, nw = h - h % s, w - w % s
    top, left = (h - nh) // 2, (w - nw) // 2
    return img[..., top : top + nh, left : left + nw]


def load_hq_images(data_dir):
    return [(image_id_for(p, data_dir), load_image(p)) for p in list_images(data_dir)]


def depth_provider(depth_dir=None, synthetic=False, seed=0):
    def provide(image_id, lq_shape, hq_shape):
        return ingest_depth(image_id, depth_dir, synthetic, lq_shape, hq_shape, seed)

    return provide


def build_pairs(images, task, scale=4, sigma=25.0, seed=0, depth=None, sigma_range=None):
    """Degrade each ``(image_id, hq)`` once and attach its depth maps.

    For denoising, ``sigma_range`` draws a per-image noise level uniformly
    from the range instead of using the fixed ``sigma``.
    """
    s = scale if task == "sr" else 1
    rng = np.random.Generator(np.random.PCG64(seed))
    pairs = []
    for i, (image_id, hq) in enumerate(images):
        hq = center_crop_to_multiple(hq, s)
        h, w = hq.shape[-2:]
        d = None if depth is None else depth(image_id, (h // s, w // s), (h, w))
        level = float(rng.uniform(*sigma_range)) if sigma_range is not None else sigma
        pair = degrade(hq, task, scale=s, sigma=level, seed=seed + i, depth=d)
        pair.image_id = image_id
        pairs.append(pair)
    return pairs
