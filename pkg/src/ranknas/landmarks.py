"""Landmark architectures and the ranking regularizer built on them.

A landmark is an architecture whose stand-alone validation loss is known. The
super-net is penalized whenever a landmark that is better stand-alone has a
*higher* super-net loss than a worse one (a pairwise hinge over the sorted
set). This module also holds the landmark sampler, the stand-alone trainer
with its persistent cache, and the regularization-weight schedule.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import math
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import nn
from .data import Dataset, SplitSet, batches
from .errors import (InfeasibleThresholdError, InvalidArgumentError,
                     NumericOverflowError, StandaloneTrainingError)
from .hparams import TrainHParams, scheduled_lr
from .space import (Architecture, SearchSpace, count_beyond, hamming_distance,
                    mutate, random_architecture)

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# stand-alone results and the benchmark cache

@dataclass(frozen=True)
class StandaloneResult:
    space: str
    arch: Architecture
    valid_loss: float
    valid_acc: float
    seed: int
    hparams_hash: int
    wall_time_s: float = 0.0

    @property
    def key(self) -> tuple:
        return (self.space, str(self.arch), self.hparams_hash, self.seed)

    @property
    def failed(self) -> bool:
        return not math.isfinite(self.valid_loss)

    def to_line(self) -> str:
        return (f"{self.space},{self.arch},{self.hparams_hash},{self.seed},"
                f"{self.valid_loss!r},{self.valid_acc!r},{self.wall_time_s:.6f}")

    @classmethod
    def from_line(cls, line: str) -> StandaloneResult:
        space, arch, hh, seed, loss, acc, wall = (tok.strip() for tok in line.split(","))
        return cls(space, Architecture.parse(arch), float(loss), float(acc), int(seed),
                   int(hh), float(wall))


class BenchmarkCache:
    """Stand-alone results keyed by (space, arch, hparams hash, seed).

    Backed by an append-only text file when ``path`` is given; on load the
    first record for a key wins. Writes are serialized by a lock.
    """

    def __init__(self, path=None):
        self.path = Path(path) if path is not None else None
        self._records: dict[tuple, StandaloneResult] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip() or line.startswith("#"):
                    continue
                rec = StandaloneResult.from_line(line)
                self._records.setdefault(rec.key, rec)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, key) -> bool:
        return key in self._records

    def get(self, key) -> StandaloneResult | None:
        return self._records.get(key)

    def put(self, rec: StandaloneResult) -> StandaloneResult:
        """Store ``rec`` unless its key exists; returns the stored record."""
        with self._lock:
            if rec.key in self._records:
                return self._records[rec.key]
            if self.path is not None:
                try:
                    self.path.parent.mkdir(parents=True, exist_ok=True)
                    with self.path.open("a") as fh:
                        fh.write(rec.to_line() + "\n")
                except OSError as exc:
                    raise OSError(f"cannot write benchmark cache {self.path}: {exc}") from exc
            self._records[rec.key] = rec
            return rec

    def records(self, space: str | None = None, hparams_hash: int | None = None,
                seed: int | None = None) -> list[StandaloneResult]:
        return [r for r in self._records.values()
                if (space is None or r.space == space)
                and (hparams_hash is None or r.hparams_hash == hparams_hash)
                and (seed is None or r.seed == seed)]


def hparams_hash(hparams: TrainHParams, data: Dataset, splits: SplitSet) -> int:
    """64-bit digest of everything that determines a stand-alone result besides
    the architecture and seed."""
    h = hashlib.blake2b(digest_size=8)
    h.update(json.dumps(hparams.standalone_fields(), sort_keys=True).encode())
    h.update(json.dumps([len(data), data.n_features, data.n_classes, data.seed,
                         data.noise]).encode())
    h.update(np.ascontiguousarray(data.features).tobytes())
    for part in (splits.train_w, splits.train_r, splits.valid):
        h.update(np.asarray(part, dtype=np.int64).tobytes())
        h.update(b"|")
    return int.from_bytes(h.digest(), "big") >> 1  # keep it a non-negative int64


def _standalone_rng(seed: int, arch: Architecture) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, len(arch), *arch.codes]))


def fit_standalone(space: SearchSpace, arch: Architecture, data: Dataset, splits: SplitSet,
                   hparams: TrainHParams, seed: int) -> tuple[float, float]:
    """Train ``arch`` from scratch on train_w + train_r; return (valid loss, valid acc)."""
    rng = _standalone_rng(seed, arch)
    net = nn.init_params(space, hparams.width, data.n_features, data.n_classes, rng, arch=arch)
    train_idx = splits.train
    steps_per_epoch = -(-train_idx.size // hparams.standalone_batch_size)
    total = hparams.standalone_epochs * steps_per_epoch
    step = 0
    for _ in range(hparams.standalone_epochs):
        for X, y in batches(data, train_idx, hparams.standalone_batch_size, rng):
            lr = scheduled_lr(hparams.standalone_lr, hparams.lr_schedule, step / total)
            nn.loss_grad(net, arch, X, y)
            nn.sgd_step(net, arch, lr, hparams.standalone_momentum,
                        hparams.standalone_weight_decay)
            step += 1
    return nn.evaluate(net, arch, data.features[splits.valid], data.labels[splits.valid])


def train_standalone(space: SearchSpace, arch: Architecture, data: Dataset, splits: SplitSet,
                     hparams: TrainHParams, cache: BenchmarkCache | None = None,
                     seed: int | None = None, hhash: int | None = None) -> StandaloneResult:
    """Cached stand-alone result for ``arch``.

    Training randomness is derived from (seed, arch) alone, so the result is a
    pure function of the cache key. Divergent runs are cached as failed
    entries (NaN loss) and raised as :class:`StandaloneTrainingError`.
    """
    space.validate(arch)
    seed = hparams.standalone_seed if seed is None else seed
    hhash = hparams_hash(hparams, data, splits) if hhash is None else hhash
    key = (space.name, str(arch), hhash, seed)
    rec = cache.get(key) if cache is not None else None
    if rec is None:
        start = time.perf_counter()
        try:
            loss, acc = fit_standalone(space, arch, data, splits, hparams, seed)
        except NumericOverflowError:
            loss, acc = float("nan"), 0.0
        rec = StandaloneResult(space.name, arch, loss, acc, seed, hhash,
                               time.perf_counter() - start)
        if cache is not None:
            rec = cache.put(rec)
    if rec.failed:
        raise StandaloneTrainingError(f"stand-alone training of {arch} diverged")
    return rec


def _standalone_job(args):
    space, arch, data, splits, hparams, seed = args
    start = time.perf_counter()
    try:
        loss, acc = fit_standalone(space, arch, data, splits, hparams, seed)
    except NumericOverflowError:
        loss, acc = float("nan"), 0.0
    return loss, acc, time.perf_counter() - start


def train_standalone_many(space: SearchSpace, archs: Sequence[Architecture], data: Dataset,
                          splits: SplitSet, hparams: TrainHParams, cache: BenchmarkCache,
                          seed: int | None = None, jobs: int = 1) -> list[StandaloneResult]:
    """Like :func:`train_standalone` for many architectures.

    With ``jobs > 1`` uncached trainings run in worker processes; records are
    written to the cache by this process only, in input order.
    """
    seed = hparams.standalone_seed if seed is None else seed
    hhash = hparams_hash(hparams, data, splits)
    missing = [a for a in dict.fromkeys(archs)
               if (space.name, str(a), hhash, seed) not in cache]
    if jobs > 1 and len(missing) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_standalone_job,
                                 [(space, a, data, splits, hparams, seed) for a in missing]))
        for a, (loss, acc, wall) in zip(missing, outs):
            cache.put(StandaloneResult(space.name, a, loss, acc, seed, hhash, wall))
    return [train_standalone(space, a, data, splits, hparams, cache, seed, hhash) for a in archs]


# --------------------------------------------------------------------------
# landmark sets

@dataclass
class LandmarkSet:
    entries: list[StandaloneResult] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def archs(self) -> list[Architecture]:
        return [e.arch for e in self.entries]

    def losses(self) -> list[float]:
        return [e.valid_loss for e in self.entries]


def sort_landmarks(landmarks: LandmarkSet) -> None:
    """Stable in-place ascending sort by stand-alone validation loss."""
    landmarks.entries.sort(key=lambda e: e.valid_loss)


def extend_landmarks(landmarks: LandmarkSet, new: Iterable[StandaloneResult]) -> LandmarkSet:
    """Union by architecture (earlier record wins), re-sorted."""
    merged = list(landmarks.entries)
    seen = {e.arch for e in merged}
    for rec in new:
        if rec.arch not in seen:
            seen.add(rec.arch)
            merged.append(rec)
    out = LandmarkSet(merged)
    sort_landmarks(out)
    return out


def sample_landmarks_with_root(space: SearchSpace, M: int, tau: int, rng: np.random.Generator,
                               budget: int | None = None):
    """Root architecture plus ``M`` distinct mutants at Hamming distance > tau.

    Each mutant starts from a fresh copy of the root and is mutated one element
    at a time until it is far enough away.
    """
    if M < 1 or tau < 0:
        raise InvalidArgumentError("M must be positive and tau non-negative")
    if tau >= space.n_edges or count_beyond(space, tau) < M:
        raise InfeasibleThresholdError(
            f"{space.name!r} has fewer than {M} architectures at distance > {tau} from a root")
    budget = 10_000 * M if budget is None else budget
    root = random_architecture(space, rng)
    found: list[Architecture] = []
    attempts = 0
    while len(found) < M:
        cand = root
        while hamming_distance(cand, root) <= tau:
            if attempts >= budget:
                raise InfeasibleThresholdError(
                    f"found {len(found)} of {M} landmarks within {budget} mutations (tau={tau})")
            cand = mutate(space, cand, rng)
            attempts += 1
        if cand not in found:
            found.append(cand)
    return root, found


def sample_landmarks(space: SearchSpace, M: int, tau: int, rng: np.random.Generator,
                     budget: int | None = None) -> list[Architecture]:
    return sample_landmarks_with_root(space, M, tau, rng, budget)[1]


# --------------------------------------------------------------------------
# the ranking regularizer

def n_pairs(M: int) -> int:
    return M * (M - 1) // 2


def pair_from_index(k: int, M: int) -> tuple[int, int]:
    """k-th pair (i, j), i < j, in lexicographic order over an M-element set."""
    i = 0
    while k >= M - 1 - i:
        k -= M - 1 - i
        i += 1
    return i, i + 1 + k


def pairwise_hinge(losses: Sequence[float], pairs: Iterable[tuple[int, int]] | None = None) -> float:
    """Sum of max(0, L_i - L_j) over ``pairs`` (default: all i < j)."""
    if pairs is None:
        M = len(losses)
        pairs = ((i, j) for i in range(M) for j in range(i + 1, M))
    return float(sum(max(0.0, losses[i] - losses[j]) for i, j in pairs))


def _net(sn):
    return getattr(sn, "net", sn)


def regularizer_full(sn, landmarks: LandmarkSet, batch, grad_scale: float = 0.0) -> float:
    """Hinge over every ordered landmark pair; one forward pass per landmark.

    With ``grad_scale > 0`` the scaled gradient of the hinge is accumulated into
    the network's grad buffers (subgradient zero at the kink).
    """
    if len(landmarks) < 2:
        raise InvalidArgumentError("the regularizer needs at least two landmarks")
    net = _net(sn)
    X, y = batch
    evals = [nn.forward_loss(net, a, X, y) for a in landmarks.archs]
    losses = [loss for loss, _ in evals]
    value = pairwise_hinge(losses)
    if grad_scale:
        M = len(losses)
        coef = [0.0] * M
        for i in range(M):
            for j in range(i + 1, M):
                if losses[i] > losses[j]:
                    coef[i] += 1.0
                    coef[j] -= 1.0
        for k, (a, (_, saved)) in enumerate(zip(landmarks.archs, evals)):
            if coef[k]:
                nn.backward_loss(net, a, saved, grad_scale * coef[k])
    return value


def regularizer_sampled(sn, landmarks: LandmarkSet, batch, m: int, rng: np.random.Generator,
                        grad_scale: float = 0.0) -> tuple[float, list[tuple[int, int]]]:
    """Hinge over ``m`` landmark pairs drawn without replacement.

    Only the sampled landmarks are evaluated (at most 2m forward passes). In
    expectation the value is ``m / C(M, 2)`` times :func:`regularizer_full`.
    """
    M = len(landmarks)
    if M < 2:
        raise InvalidArgumentError("the regularizer needs at least two landmarks")
    if m < 1:
        raise InvalidArgumentError("m must be positive")
    total = n_pairs(M)
    if m > total:
        log.warning("m=%d exceeds the %d available landmark pairs; using %d", m, total, total)
        m = total
    pairs = [pair_from_index(int(k), M) for k in rng.choice(total, size=m, replace=False)]
    net = _net(sn)
    X, y = batch
    archs = landmarks.archs
    evals: dict[int, tuple] = {}
    for i, j in pairs:
        for k in (i, j):
            if k not in evals:
                evals[k] = nn.forward_loss(net, archs[k], X, y)
    value = 0.0
    coef: dict[int, float] = {}
    for i, j in pairs:
        gap = evals[i][0] - evals[j][0]
        if gap > 0:
            value += gap
            coef[i] = coef.get(i, 0.0) + 1.0
            coef[j] = coef.get(j, 0.0) - 1.0
    if grad_scale:
        for k in sorted(coef):
            if coef[k]:
                nn.backward_loss(net, archs[k], evals[k][1], grad_scale * coef[k])
    return value, pairs


# --------------------------------------------------------------------------
# regularization weight schedule

class ScheduleMode(enum.Enum):
    COS_INCREASE = "cos_increase"
    COS_DECREASE = "cos_decrease"
    CONSTANT = "constant"
    STEP_INCREASE = "step_increase"
    STEP_DECREASE = "step_decrease"


@dataclass(frozen=True)
class RegSchedule:
    lambda_max: float
    t_w: int
    t_total: int
    mode: ScheduleMode = ScheduleMode.COS_INCREASE

    def __post_init__(self):
        if self.lambda_max < 0:
            raise InvalidArgumentError("lambda_max must be non-negative")
        if self.t_total < 1 or not 0 <= self.t_w < self.t_total:
            raise InvalidArgumentError(f"need 0 <= t_w < t_total, got t_w={self.t_w}, "
                                       f"t_total={self.t_total}")
        object.__setattr__(self, "mode", ScheduleMode(self.mode))

    def with_lambda(self, lambda_max: float) -> RegSchedule:
        return replace(self, lambda_max=lambda_max)


def _cos_pi(p: float) -> float:
    # cos(pi p) as sin(pi (1/2 - p)): exact at p = 0, 1/2 and 1
    return math.sin(math.pi * (0.5 - p))


def lambda_at(sched: RegSchedule, t: int) -> float:
    """Regularization weight at epoch ``t``: zero through warm-up, then shaped
    by ``sched.mode`` over the remaining (t_total - t_w) epochs."""
    if t < 0 or t > sched.t_total:
        raise InvalidArgumentError(f"epoch {t} outside [0, {sched.t_total}]")
    if t <= sched.t_w:
        return 0.0
    p = (t - sched.t_w) / (sched.t_total - sched.t_w)
    lam = sched.lambda_max
    mode = sched.mode
    if mode is ScheduleMode.COS_INCREASE:
        value = lam * (1.0 - _cos_pi(p)) / 2.0
    elif mode is ScheduleMode.COS_DECREASE:
        value = lam * (1.0 + _cos_pi(p)) / 2.0
    elif mode is ScheduleMode.CONSTANT:
        value = lam
    elif mode is ScheduleMode.STEP_INCREASE:
        value = lam * (math.floor(4 * p) + 1) / 4.0
    else:
        value = lam * (4 - math.floor(4 * p)) / 4.0
    return min(max(value, 0.0), lam)
