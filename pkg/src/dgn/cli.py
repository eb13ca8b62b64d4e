"""Command-line entry points: ``dgn curate | degrade | train | eval | infer``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import load_config, model_config, optim_config, schedule_config
from .data import curation
from .data.dataset import build_pairs, center_crop_to_multiple, depth_provider, load_hq_images
from .data.degradation import degrade
from .data.depth import HQ_SUFFIX, LQ_SUFFIX, synthetic_field, write_sidecar
from .data.io import save_image
from .data.sampling import BatchConfig
from .errors import DGNError
from .evaluate import evaluate, infer
from .train import train


def _patch_size(text):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WxH, got {text!r}")


def _pick(flag, section, key, default):
    if flag is not None:
        return flag
    return section.get(key, default)


def cmd_curate(args, cfg):
    sec = cfg.get("curate", {})
    cats = curation.read_categories(args.categories_file) if args.categories_file else None
    patch = args.patch_size or tuple(sec.get("patch_size", curation.DEFAULT_PATCH))
    manifest = curation.curate(
        args.input_dir,
        cats,
        delta=_pick(args.delta, sec, "delta", curation.DEFAULT_DELTA),
        brightness_threshold=_pick(args.brightness_threshold, sec, "brightness_threshold", curation.DEFAULT_BRIGHTNESS_THRESHOLD),
        normalize_brightness=args.normalize_brightness or sec.get("normalize_brightness", False),
        patch_size=patch,
    )
    manifest.write(args.manifest_out)
    kept = manifest.kept()
    print(f"{len(manifest.entries)} images, {len(kept)} kept, {sum(len(e.patches) for e in kept)} patches -> {args.manifest_out}")


def cmd_degrade(args, cfg):
    sec = cfg.get("degrade", {})
    task = _pick(args.task, sec, "task", "sr")
    scale = _pick(args.scale, sec, "scale", 4)
    sigma = _pick(args.sigma, sec, "sigma", 25.0)
    out = Path(args.output_dir)
    s = scale if task == "sr" else 1
    for i, (image_id, hq) in enumerate(load_hq_images(args.input_dir)):
        hq = center_crop_to_multiple(hq, s)
        pair = degrade(hq, task, scale=s, sigma=sigma, seed=args.seed + i)
        save_image(pair.lq, out / f"{image_id}.png")
        if args.write_synthetic_depth:
            h, w = hq.shape[-2:]
            write_sidecar(out / f"{image_id}{LQ_SUFFIX}", synthetic_field(h // s, w // s, args.seed))
            write_sidecar(out / f"{image_id}{HQ_SUFFIX}", synthetic_field(h, w, args.seed))
    print(f"wrote degraded images to {out}")


def cmd_train(args, cfg):
    model_cfg = model_config(cfg)
    sec = cfg.get("train", {})
    iters = args.iters if args.iters is not None else cfg.get("schedule", {}).get("total_iters")
    schedule = schedule_config(cfg, iters)
    s = model_cfg.scale if model_cfg.task == "sr" else 1
    batch = BatchConfig(
        batch_size=_pick(args.batch_size, sec, "batch_size", 8),
        patch_size=_pick(args.patch_size, sec, "patch_size", 256),
        scale=s,
        augment=sec.get("augment", True),
    )
    sigma_range = tuple(sec.get("sigma_range", (0.0, 50.0))) if model_cfg.task == "denoise" else None
    depth = depth_provider(args.depth_dir, args.synthetic_depth, args.seed)
    pairs = build_pairs(load_hq_images(args.data_dir), model_cfg.task, model_cfg.scale, seed=args.seed, depth=depth, sigma_range=sigma_range)
    state = train(
        model_cfg,
        schedule,
        pairs,
        args.out_dir,
        batch,
        seed=args.seed,
        checkpoint_every=_pick(args.checkpoint_every, sec, "checkpoint_every", 0),
        resume_from=args.resume,
        optim=optim_config(cfg),
    )
    print(f"trained to iteration {state.iteration}; checkpoint {state.last_checkpoint}")


def cmd_eval(args, cfg):
    sigma = _pick(args.sigma, cfg.get("eval", {}), "sigma", 25.0)
    depth = depth_provider(args.depth_dir, args.synthetic_depth, args.seed)
    report = evaluate(args.checkpoint, load_hq_images(args.data_dir), args.task, sigma=sigma, seed=args.seed, depth=depth)
    text = "\n".join(report.lines())
    if args.report_out:
        report.write(args.report_out)
    print(text)


def cmd_infer(args, cfg):
    infer(args.checkpoint, args.image, args.output, depth_path=args.depth, synthetic_depth=args.synthetic_depth, seed=args.seed)


def build_parser():
    p = argparse.ArgumentParser(prog="dgn", description="Depth-guided image restoration toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("--config", help="YAML run configuration")
        sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = command("curate", cmd_curate, "hash, filter, deduplicate and tile a raw image collection")
    sp.add_argument("--input-dir", required=True)
    sp.add_argument("--categories-file", help="CSV of image_id,category")
    sp.add_argument("--delta", type=int)
    sp.add_argument("--brightness-threshold", type=float)
    sp.add_argument("--normalize-brightness", action="store_true")
    sp.add_argument("--patch-size", type=_patch_size, help="WxH, default 1535x1151")
    sp.add_argument("--manifest-out", required=True)

    sp = command("degrade", cmd_degrade, "synthesize low-quality inputs from HQ images")
    sp.add_argument("--input-dir", required=True)
    sp.add_argument("--output-dir", required=True)
    sp.add_argument("--task", choices=("sr", "denoise"))
    sp.add_argument("--scale", type=int)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--write-synthetic-depth", action="store_true")

    sp = command("train", cmd_train, "train a model")
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--out-dir", required=True)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--patch-size", type=int)
    sp.add_argument("--checkpoint-every", type=int)
    sp.add_argument("--resume")
    sp.add_argument("--depth-dir")
    sp.add_argument("--synthetic-depth", action="store_true")

    sp = command("eval", cmd_eval, "score a checkpoint against HQ images")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--data-dir", required=True)
    sp.add_argument("--task", choices=("sr", "denoise"), required=True)
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--report-out")
    sp.add_argument("--depth-dir")
    sp.add_argument("--synthetic-depth", action="store_true")

    sp = command("infer", cmd_infer, "restore a single image")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--image", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--depth", help="LQ depth sidecar for the image")
    sp.add_argument("--synthetic-depth", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, load_config(args.config))
    except DGNError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
