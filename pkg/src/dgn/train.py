"""Training loop: paired patch sampling, joint image/depth loss, Adam with the halving schedule."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .data.sampling import BatchConfig, sample_batch
from .errors import InvalidConfig, TrainingDiverged
from .losses import total_loss
from .model import DGN, DgnConfig, build_model
from .schedule import LrSchedule, lr_at

log = logging.getLogger(__name__)

ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
METRICS_FILE = "metrics.jsonl"


@dataclass(frozen=True)
class OptimConfig:
    betas: tuple = ADAM_BETAS
    eps: float = ADAM_EPS
    weight_decay: float = 0.0
    grad_clip: Optional[float] = None  # max global grad norm; None disables clipping

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(self.betas))


@dataclass
class TrainState:
    iteration: int
    model: DGN
    optimizer: torch.optim.Adam
    rng: np.random.Generator
    best_psnr: float = float("-inf")
    last_checkpoint: Optional[Path] = None
    optim: OptimConfig = OptimConfig()


def make_optimizer(model, lr, optim: OptimConfig = OptimConfig()):
    return torch.optim.Adam(
        model.parameters(), lr=lr, betas=optim.betas, eps=optim.eps, weight_decay=optim.weight_decay
    )


def root_seeds(seed):
    """Independent streams for parameter init and data sampling from one root seed."""
    init, data = np.random.SeedSequence(seed).spawn(2)
    return int(init.generate_state(1, np.uint64)[0]), data


def _train_meta(state: TrainState, schedule):
    return {
        "iteration": state.iteration,
        "optimizer": state.optimizer.state_dict(),
        "rng": state.rng.bit_generator.state,
        "best_psnr": state.best_psnr,
        "schedule": asdict(schedule),
        "optim": asdict(state.optim),
    }


def init_state(cfg: DgnConfig, schedule: LrSchedule, seed=0, dtype=torch.float32, optim: OptimConfig = OptimConfig()):
    init_seed, data_ss = root_seeds(seed)
    model = build_model(cfg, seed=init_seed, dtype=dtype)
    rng = np.random.Generator(np.random.PCG64(data_ss))
    return TrainState(0, model, make_optimizer(model, schedule.base_lr, optim), rng, optim=optim)


def resume_state(path, dtype=None):
    model, meta = load_checkpoint(path, dtype=dtype)
    if meta is None:
        raise InvalidConfig(f"{path} holds no training state to resume from")
    optim = OptimConfig(**meta.get("optim", {}))
    opt = make_optimizer(model, meta["schedule"]["base_lr"], optim)
    opt.load_state_dict(meta["optimizer"])
    bitgen = np.random.PCG64()
    bitgen.state = meta["rng"]
    return TrainState(meta["iteration"], model, opt, np.random.Generator(bitgen), meta["best_psnr"], Path(path), optim)


def train_step(state: TrainState, batch, lr):
    model, cfg = state.model, state.model.cfg
    for group in state.optimizer.param_groups:
        group["lr"] = lr
    model.train()
    y, y_d = model(batch.lq, batch.lq_depth if cfg.depth_enabled else None)
    report = total_loss(y, batch.hq, y_d, batch.hq_depth, cfg.lambda1, cfg.lambda2, cfg.aid_target)
    if not math.isfinite(float(report.total.detach())):
        return report, False
    state.optimizer.zero_grad(set_to_none=True)
    report.total.backward()
    if state.optim.grad_clip is not None:
        torch.nn.utils.clip_grad_norm_(model.parameters(), state.optim.grad_clip)
    state.optimizer.step()
    return report, True


def train(
    cfg: DgnConfig,
    schedule: LrSchedule,
    dataset,
    out_dir,
    batch: BatchConfig = BatchConfig(),
    seed=0,
    checkpoint_every=0,
    resume_from=None,
    stop_at=None,
    dtype=torch.float32,
    optim: OptimConfig = OptimConfig(),
) -> TrainState:
    """Run iterations ``resume+1 .. stop_at`` (default: the schedule's total).

    One record per iteration is appended to ``out_dir/metrics.jsonl``;
    checkpoints go to ``out_dir/ckpt_<iter>.pt`` and ``out_dir/last.pt``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if batch.scale != (cfg.scale if cfg.task == "sr" else 1):
        raise InvalidConfig(f"batch scale {batch.scale} does not match model task {cfg.task} x{cfg.scale}")
    if resume_from is not None:
        state = resume_state(resume_from)
        if state.model.cfg != cfg:
            raise InvalidConfig("checkpoint config differs from the requested config")
    else:
        state = init_state(cfg, schedule, seed, dtype, optim)
    stop_at = schedule.total_iters if stop_at is None else stop_at

    with open(out_dir / METRICS_FILE, "a") as metrics:
        while state.iteration < stop_at:
            it = state.iteration + 1
            lr = lr_at(schedule, it - 1)
            report, ok = train_step(state, sample_batch(dataset, batch, state.rng), lr)
            if not ok:
                raise TrainingDiverged(it, state.last_checkpoint)
            state.iteration = it
            metrics.write(json.dumps({"iter": it, "lr": lr, **report.as_floats()}) + "\n")
            if checkpoint_every and it % checkpoint_every == 0:
                metrics.flush()
                state.last_checkpoint = save_checkpoint(out_dir / f"ckpt_{it}.pt", state.model, _train_meta(state, schedule))
                log.info("iter %d loss %.6f lr %.3g -> %s", it, float(report.total.detach()), lr, state.last_checkpoint)
    state.last_checkpoint = save_checkpoint(out_dir / "last.pt", state.model, _train_meta(state, schedule))
    return state


def read_metrics(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
