"""Piecewise-constant learning-rate schedule."""
from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidArgument, InvalidConfig

DEFAULT_TOTAL_ITERS = 500_000
DEFAULT_MILESTONES = (250_000, 400_000, 450_000, 475_000)


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 3e-4
    milestones: tuple = DEFAULT_MILESTONES
    factor: float = 0.5
    total_iters: int = DEFAULT_TOTAL_ITERS

    def __post_init__(self):
        object.__setattr__(self, "milestones", tuple(int(m) for m in self.milestones))
        self.validate()

    def validate(self):
        ms = self.milestones
        if self.total_iters < 1:
            raise InvalidConfig(f"total_iters must be positive, got {self.total_iters}")
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise InvalidConfig(f"milestones must be strictly increasing: {ms}")
        if ms and (ms[0] < 0 or ms[-1] >= self.total_iters):
            raise InvalidConfig(f"milestones {ms} must lie in [0, {self.total_iters})")
        return self

    @classmethod
    def scaled(cls, total_iters, base_lr=3e-4, factor=0.5):
        """Default schedule shape shrunk to ``total_iters`` (milestones rounded down).

        Raises InvalidConfig when rounding merges two milestones (total_iters < 11).
        """
        ms = tuple(m * total_iters // DEFAULT_TOTAL_ITERS for m in DEFAULT_MILESTONES)
        return cls(base_lr=base_lr, milestones=ms, factor=factor, total_iters=total_iters)


def lr_at(schedule: LrSchedule, it: int) -> float:
    if not 0 <= it < schedule.total_iters:
        raise InvalidArgument(f"iteration {it} outside [0, {schedule.total_iters})")
    passed = sum(1 for m in schedule.milestones if m <= it)
    return schedule.base_lr * schedule.factor**passed
