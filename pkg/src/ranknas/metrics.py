"""Rank correlation: Kendall tau-b with ties and the sparse (binned) variant."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, UndefinedStatisticError

DEFAULT_BIN = 0.1  # percentage points


def _sign(v: float) -> int:
    return int(v > 0) - int(v < 0)


def kendall_tau_b(x: Sequence[float], y: Sequence[float]) -> float:
    """Tau-b by direct enumeration of all n(n-1)/2 pairs."""
    if len(x) != len(y):
        raise InvalidArgumentError(f"length mismatch: {len(x)} vs {len(y)}")
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    n = len(x)
    if n < 2:
        raise InvalidArgumentError("need at least two observations")
    concordant = discordant = ties_x = ties_y = 0
    for i in range(n):
        for j in range(i + 1, n):
            sx = _sign(x[i] - x[j])
            sy = _sign(y[i] - y[j])
            if sx == 0:
                ties_x += 1
            if sy == 0:
                ties_y += 1
            if sx and sy:
                if sx == sy:
                    concordant += 1
                else:
                    discordant += 1
    n0 = n * (n - 1) // 2
    denom = (n0 - ties_x) * (n0 - ties_y)
    if denom == 0:
        raise UndefinedStatisticError("tau-b undefined: one input is constant")
    return (concordant - discordant) / math.sqrt(denom)


def quantize(values: Sequence[float], bin: float) -> list[float]:
    if bin <= 0:
        raise InvalidArgumentError("bin must be positive")
    # round() guards against 90.00/0.1 landing at 899.999...
    return [math.floor(round(v / bin, 9)) for v in values]


def sparse_kendall_tau(gt_acc: Sequence[float], proxy_acc: Sequence[float],
                       bin: float = DEFAULT_BIN) -> float:
    """Tau-b after snapping ground-truth accuracies (percent) to ``bin``-wide bins,
    so near-equal stand-alone results count as ties rather than rank violations."""
    return kendall_tau_b(quantize(gt_acc, bin), list(proxy_acc))


@dataclass
class RankingSample:
    archs: list
    gt_acc: list[float]
    proxy_acc: list[float]

    def __post_init__(self):
        if not (len(self.archs) == len(self.gt_acc) == len(self.proxy_acc)):
            raise InvalidArgumentError("ranking sample lists differ in length")
        if len(self.archs) < 2:
            raise InvalidArgumentError("ranking sample needs at least two architectures")


@dataclass
class RankingReport:
    skdt: float
    kdt: float
    n: int
    mean_acc: float
    best_acc: float
    best_rank: int | None = None
    bin: float = DEFAULT_BIN
    sample: RankingSample | None = field(default=None, repr=False)


def ranking_report(sample: RankingSample, bin: float = DEFAULT_BIN,
                   best_rank: int | None = None) -> RankingReport:
    """Summarize a ranking sample. Constant inputs yield NaN correlations."""
    try:
        skdt = sparse_kendall_tau(sample.gt_acc, sample.proxy_acc, bin)
    except UndefinedStatisticError:
        skdt = float("nan")
    try:
        kdt = kendall_tau_b(sample.gt_acc, sample.proxy_acc)
    except UndefinedStatisticError:
        kdt = float("nan")
    gt = np.asarray(sample.gt_acc, dtype=float)
    return RankingReport(skdt, kdt, len(gt), float(gt.mean()), float(gt.max()),
                         best_rank, bin, sample)


def rank_of(value: float, population: Sequence[float]) -> int:
    """1-based rank of ``value`` in a descending ordering of ``population``
    (ties share the best rank)."""
    return 1 + sum(1 for v in population if v > value)


def sample_probe_archs(space, k: int, rng: np.random.Generator, exclude=()) -> list:
    """``k`` distinct architectures drawn uniformly from ``space`` minus ``exclude``
    (all of them, in lexicographic order, if fewer than ``k`` remain)."""
    from .space import enumerate_space, random_architecture

    if k < 2:
        raise InvalidArgumentError("a ranking probe needs k >= 2")
    exclude = set(exclude)
    available = space.size - len(exclude)
    if available <= k:
        return [a for a in enumerate_space(space) if a not in exclude]
    chosen: list = []
    seen = set(exclude)
    while len(chosen) < k:
        a = random_architecture(space, rng)
        if a not in seen:
            seen.add(a)
            chosen.append(a)
    return chosen


def probe_skdt(sn, landmarks, data, splits, cache, k: int, rng: np.random.Generator,
               bin: float = DEFAULT_BIN, archs=None, jobs: int = 1) -> RankingReport:
    """Rank correlation between stand-alone and super-net validation accuracy
    on ``k`` non-landmark architectures.

    Ground truth comes from the (cached) stand-alone trainer. When the cache
    holds every architecture of the space, ``best_rank`` is the stand-alone
    rank of the probe architecture the super-net likes best.
    """
    from .landmarks import hparams_hash, train_standalone_many
    from .supernet import supernet_accuracy

    space = sn.space
    landmark_archs = set(landmarks.archs) if landmarks is not None else set()
    if archs is None:
        archs = sample_probe_archs(space, k, rng, landmark_archs)
    elif landmark_archs.intersection(archs):
        raise InvalidArgumentError("probe architectures must exclude the landmarks")
    hp = sn.hparams
    results = train_standalone_many(space, archs, data, splits, hp, cache, jobs=jobs)
    valid = (data.features[splits.valid], data.labels[splits.valid])
    gt = [100.0 * r.valid_acc for r in results]
    proxy = [100.0 * supernet_accuracy(sn, a, valid) for a in archs]
    best_rank = None
    hh = hparams_hash(hp, data, splits)
    table = cache.records(space.name, hh, hp.standalone_seed)
    if len(table) == space.size:
        top = max(range(len(archs)), key=lambda i: (proxy[i], -i))
        best_rank = rank_of(results[top].valid_acc, [r.valid_acc for r in table])
    return ranking_report(RankingSample(list(archs), gt, proxy), bin, best_rank)
