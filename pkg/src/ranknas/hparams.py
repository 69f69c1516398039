"""Training hyperparameters shared by super-net and stand-alone training."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass


@dataclass(frozen=True)
class TrainHParams:
    width: int = 16
    # super-net optimizer
    batch_size: int = 16
    lr: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 1e-4
    grad_clip: float | None = 5.0
    # batch size for the regularizer's train_r batches; None means batch_size
    reg_batch_size: int | None = None
    # stand-alone lr shape: "constant" or "cosine" (annealed to zero over the run)
    lr_schedule: str = "constant"
    # stand-alone (ground-truth) training
    standalone_epochs: int = 60
    standalone_batch_size: int = 64
    standalone_lr: float = 0.05
    standalone_momentum: float = 0.9
    standalone_weight_decay: float = 1e-4
    standalone_seed: int = 0

    def standalone_fields(self) -> dict:
        """The subset that determines a stand-alone result (and its cache key)."""
        return {f.name: getattr(self, f.name) for f in dataclasses.fields(self)
                if f.name.startswith("standalone_") or f.name in ("width", "lr_schedule")}


def scheduled_lr(base: float, schedule: str, progress: float) -> float:
    """Learning rate at ``progress`` in [0, 1] of a run."""
    if schedule == "constant":
        return base
    if schedule == "cosine":
        return base * 0.5 * (1.0 + math.cos(math.pi * min(max(progress, 0.0), 1.0)))
    raise ValueError(f"unknown lr schedule {schedule!r}")
