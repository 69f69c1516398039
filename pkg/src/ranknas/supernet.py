"""Weight-sharing super-net: uniform single-path training with the landmark
ranking regularizer added on a separate data part."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from . import nn
from .data import Dataset, SplitSet, batches, cycle_batches
from .errors import NumericOverflowError
from .hparams import TrainHParams
from .landmarks import LandmarkSet, RegSchedule, lambda_at, regularizer_sampled
from .space import Architecture, SearchSpace, random_architecture


@dataclass
class SuperNet:
    net: nn.CellNet
    space: SearchSpace
    hparams: TrainHParams = field(default_factory=TrainHParams)
    step_counter: int = 0
    epoch_counter: int = 0
    reg_stream: Iterator | None = field(default=None, repr=False)


@dataclass
class TrainStepReport:
    task_loss: float
    reg_loss: float
    lam: float
    pair_ids: list[tuple[int, int]]
    regularized: bool = False


@dataclass
class EpochSummary:
    epoch: int
    mean_task_loss: float
    mean_reg_loss: float
    lam: float
    steps: int


def new_supernet(space: SearchSpace, n_features: int, n_classes: int,
                 hparams: TrainHParams, rng: np.random.Generator) -> SuperNet:
    net = nn.init_params(space, hparams.width, n_features, n_classes, rng)
    return SuperNet(net, space, hparams)


def sample_path_uniform(space: SearchSpace, rng: np.random.Generator) -> Architecture:
    return random_architecture(space, rng)


def supernet_loss(sn: SuperNet, arch: Architecture, batch) -> float:
    X, y = batch
    return nn.evaluate(sn.net, arch, X, y)[0]


def supernet_accuracy(sn: SuperNet, arch: Architecture, batch) -> float:
    X, y = batch
    return nn.evaluate(sn.net, arch, X, y)[1]


def current_lambda(sn: SuperNet, sched: RegSchedule | None) -> float:
    """Weight for the epoch in progress (epochs are counted from 1)."""
    if sched is None:
        return 0.0
    return lambda_at(sched, min(sn.epoch_counter + 1, sched.t_total))


def train_step(sn: SuperNet, batch_w, batch_r, landmarks: LandmarkSet | None,
               sched: RegSchedule | None, m: int, rng: np.random.Generator,
               pair_rng: np.random.Generator | None = None) -> TrainStepReport:
    """One SPOS update with the weighted ranking regularizer.

    The path is drawn from ``rng``. Landmark pairs are drawn (from ``pair_rng``,
    defaulting to ``rng``) only when the weight is positive and at least two
    landmarks exist, so an unregularized configuration consumes randomness
    exactly like plain SPOS.
    """
    hp = sn.hparams
    arch = sample_path_uniform(sn.space, rng)
    step = sn.step_counter + 1
    try:
        task_loss = nn.loss_grad(sn.net, arch, *batch_w)
        lam = current_lambda(sn, sched)
        reg_loss, pairs, active = 0.0, [], False
        if lam > 0 and landmarks is not None and len(landmarks) >= 2:
            active = True
            reg_loss, pairs = regularizer_sampled(sn, landmarks, batch_r, m,
                                                  rng if pair_rng is None else pair_rng,
                                                  grad_scale=lam)
    except NumericOverflowError as exc:
        sn.net.zero_grad()
        raise NumericOverflowError(str(exc), step) from exc
    if not np.isfinite(task_loss + lam * reg_loss):
        sn.net.zero_grad()
        raise NumericOverflowError("non-finite combined loss", step)
    nn.sgd_step(sn.net, None, hp.lr, hp.momentum, hp.weight_decay, hp.grad_clip)
    sn.step_counter = step
    return TrainStepReport(task_loss, reg_loss, lam, pairs, active)


def train_epoch(sn: SuperNet, data: Dataset, splits: SplitSet, landmarks: LandmarkSet | None,
                sched: RegSchedule | None, m: int, rng: np.random.Generator,
                pair_rng: np.random.Generator | None = None) -> EpochSummary:
    """One pass over train_w; regularizer batches come from an endless stream
    over train_r that persists across epochs."""
    hp = sn.hparams
    if sn.reg_stream is None:
        stream_rng = np.random.default_rng(int(rng.integers(2**63)))
        sn.reg_stream = cycle_batches(data, splits.train_r, hp.reg_batch_size or hp.batch_size,
                                      stream_rng)
    lam = current_lambda(sn, sched)
    task, reg = [], []
    for batch_w in batches(data, splits.train_w, hp.batch_size, rng):
        batch_r = next(sn.reg_stream)
        rep = train_step(sn, batch_w, batch_r, landmarks, sched, m, rng, pair_rng)
        task.append(rep.task_loss)
        if rep.regularized:
            reg.append(rep.reg_loss)
    sn.epoch_counter += 1
    return EpochSummary(sn.epoch_counter, float(np.mean(task)),
                        float(np.mean(reg)) if reg else 0.0, lam, len(task))
