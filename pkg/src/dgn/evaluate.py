"""Evaluation and single-image inference."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import torch

from .checkpoint import load_checkpoint
from .data.dataset import center_crop_to_multiple
from .data.degradation import bicubic_upsample, degrade
from .data.depth import normalize_depth, read_sidecar, synthetic_field
from .data.io import load_image, save_image
from .errors import InvalidArgument, InvalidConfig, MissingDepth
from .metrics import psnr, ssim

EVAL_SIGMA = 25.0


@dataclass
class EvalRow:
    image_id: str
    method: str
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)

    def methods(self):
        return list(dict.fromkeys(r.method for r in self.rows))

    def mean(self, method):
        rows = [r for r in self.rows if r.method == method]
        return math.fsum(r.psnr for r in rows) / len(rows), math.fsum(r.ssim for r in rows) / len(rows)

    def lines(self):
        out = ["method\tid\tpsnr\tssim"]
        out += [f"{r.method}\t{r.image_id}\t{r.psnr:.4f}\t{r.ssim:.4f}" for r in self.rows]
        for m in self.methods():
            p, s = self.mean(m)
            out.append(f"{m}\tmean\t{p:.4f}\t{s:.4f}")
        return out

    def write(self, path):
        Path(path).write_text("\n".join(self.lines()) + "\n")


def _model(model_or_path):
    if isinstance(model_or_path, (str, Path)):
        return load_checkpoint(model_or_path)[0]
    return model_or_path


@torch.no_grad()
def restore(model, lq, lq_depth=None):
    model.eval()
    dtype = next(model.parameters()).dtype
    x = lq[None].to(dtype)
    xd = lq_depth[None].to(dtype) if model.cfg.depth_enabled else None
    y, _ = model(x, xd)
    return y[0].clamp(0, 1)


def evaluate(model_or_path, eval_set, task, sigma=EVAL_SIGMA, seed=0, depth=None) -> EvalReport:
    """Score the model and a no-model baseline on every ``(image_id, hq)`` item.

    The baseline is bicubic upsampling for SR and the noisy input for
    denoising. ``depth(image_id, lq_shape, hq_shape)`` supplies depth maps;
    synthetic fields are used when it is omitted.
    """
    model = _model(model_or_path)
    cfg = model.cfg
    if cfg.task != task:
        raise InvalidConfig(f"checkpoint is trained for {cfg.task!r}, asked to evaluate {task!r}")
    s = cfg.scale if task == "sr" else 1
    report = EvalReport()
    baseline = "bicubic" if task == "sr" else "noisy_input"
    for i, (image_id, hq) in enumerate(eval_set):
        hq = center_crop_to_multiple(hq, s)
        h, w = hq.shape[-2:]
        d = None if depth is None else depth(image_id, (h // s, w // s), (h, w))
        pair = degrade(hq, task, scale=s, sigma=sigma, seed=seed + i, depth=d)
        y = restore(model, pair.lq, pair.lq_depth).to(hq.dtype)
        report.rows.append(EvalRow(image_id, "dgn", psnr(y, hq), ssim(y, hq)))
        base = bicubic_upsample(pair.lq, s) if task == "sr" else pair.lq
        report.rows.append(EvalRow(image_id, baseline, psnr(base, hq), ssim(base, hq)))
    return report


def infer(model_or_path, image_path, output_path, depth_path=None, synthetic_depth=False, seed=0, echo=print):
    """Restore one image file and write the result as PNG."""
    start = time.perf_counter()
    model = _model(model_or_path)
    lq = load_image(image_path)
    lq_depth = None
    if model.cfg.depth_enabled:
        if depth_path is not None and Path(depth_path).exists():
            raw = read_sidecar(depth_path)
            if raw.shape != tuple(lq.shape[-2:]):
                raise InvalidArgument(f"depth {raw.shape} does not match image {tuple(lq.shape[-2:])}")
            lq_depth = normalize_depth(raw)
        elif synthetic_depth:
            lq_depth = normalize_depth(synthetic_field(*lq.shape[-2:], seed))
        else:
            raise MissingDepth(Path(image_path).stem, depth_path)
    y = restore(model, lq, lq_depth)
    save_image(y, output_path)
    elapsed = time.perf_counter() - start
    echo(f"{output_path}: {y.shape[-1]}x{y.shape[-2]} in {elapsed:.3f}s")
    return y
