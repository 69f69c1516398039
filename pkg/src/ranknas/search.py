"""Evolutionary search over a trained super-net and the multi-iteration
landmark pipeline built around it."""

from __future__ import annotations

import math
import statistics
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .data import DataConfig, Dataset, SplitSet, batches
from .hparams import TrainHParams
from .landmarks import (BenchmarkCache, LandmarkSet, RegSchedule, ScheduleMode,
                        StandaloneResult, extend_landmarks, hparams_hash,
                        sample_landmarks, train_standalone_many)
from .metrics import DEFAULT_BIN, probe_skdt, rank_of
from .space import Architecture, builtin_space, mutate, random_architecture
from .supernet import SuperNet, new_supernet, supernet_accuracy, train_epoch

REPORT_VERSION = 1


class PipelineError(RuntimeError):
    def __init__(self, iteration: int, cause: BaseException):
        super().__init__(f"pipeline failed in iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclass(frozen=True)
class EvoConfig:
    population: int = 32
    generations: int = 10
    parent_fraction: float = 0.25
    mutation_per_child: int = 1
    topk: int = 10

    def __post_init__(self):
        if min(self.population, self.mutation_per_child, self.topk) < 1 or self.generations < 0:
            raise ValueError("evolution sizes must be positive")
        if not 0 < self.parent_fraction <= 1:
            raise ValueError("parent_fraction must lie in (0, 1]")
        if self.topk > self.population:
            raise ValueError("topk cannot exceed the population")


def evolutionary_search(sn: SuperNet, probe, cfg: EvoConfig, rng: np.random.Generator,
                        initial=None, history: list | None = None,
                        topk: int | None = None) -> list[tuple[Architecture, float]]:
    """Truncation-selection evolution with super-net accuracy on ``probe`` as fitness.

    Returns the best ``topk`` distinct architectures ever evaluated, sorted by
    fitness (descending) and then by canonical string. ``history`` receives the
    archive's best fitness after the initial population and after every
    generation.
    """
    space = sn.space
    archive: dict[Architecture, float] = {}

    def fitness(a):
        if a not in archive:
            archive[a] = supernet_accuracy(sn, a, probe)
        return archive[a]

    def rank_key(a):
        return (-archive[a], str(a))

    pop = list(initial) if initial is not None else [
        random_architecture(space, rng) for _ in range(cfg.population)]
    for a in pop:
        fitness(a)
    size = len(pop)
    if history is not None:
        history.append(max(archive.values()))
    n_parents = max(1, math.ceil(cfg.parent_fraction * size))
    for _ in range(cfg.generations):
        parents = sorted(set(pop), key=rank_key)[:n_parents]
        children = []
        while len(parents) + len(children) < size:
            child = parents[int(rng.integers(len(parents)))]
            for _ in range(cfg.mutation_per_child):
                child = mutate(space, child, rng)
            fitness(child)
            children.append(child)
        pop = parents + children
        if history is not None:
            history.append(max(archive.values()))
    ranked = sorted(archive, key=rank_key)
    return [(a, archive[a]) for a in ranked[:cfg.topk if topk is None else topk]]


# Desk regime for the pipeline: a many-cluster task whose stand-alone ranking
# is informative, and a slow super-net that regularization can still steer.
PIPELINE_DATA = DataConfig(clusters_per_class=16, noise=0.1)
PIPELINE_HPARAMS = TrainHParams(width=8, batch_size=64, lr=0.002)


@dataclass(frozen=True)
class PipelineConfig:
    space: str = "micro"
    T: int = 3
    M: int = 6
    m: int = 1
    tau: int | None = None  # None: ceil(0.6 * |edges|)
    lambda_max: float = 10.0
    warmup: int | None = None  # None: the first of several iterations trains unregularized
    schedule: ScheduleMode = ScheduleMode.COS_INCREASE
    epochs_per_iter: int = 100
    evo: EvoConfig = field(default_factory=EvoConfig)
    seeds: tuple[int, ...] = (0, 1, 2)
    hparams: TrainHParams = PIPELINE_HPARAMS
    data: DataConfig = PIPELINE_DATA
    probe_k: int = 20
    probe_batches: int = 4
    skdt_bin: float = DEFAULT_BIN
    regularize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "schedule", ScheduleMode(self.schedule))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for name in ("T", "M", "m", "epochs_per_iter", "probe_k", "probe_batches"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.tau is not None and self.tau < 1:
            raise ValueError("tau must be positive")
        if self.warmup is not None and self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        self.sched  # validates warm-up against the epoch budget

    @property
    def t_total(self) -> int:
        return self.T * self.epochs_per_iter

    @property
    def t_w(self) -> int:
        if self.warmup is not None:
            return self.warmup
        return self.epochs_per_iter if self.T > 1 else 0

    @property
    def sched(self) -> RegSchedule:
        return RegSchedule(self.lambda_max, self.t_w, self.t_total, self.schedule)

    def resolved_tau(self) -> int:
        if self.tau is not None:
            return self.tau
        return math.ceil(0.6 * builtin_space(self.space).n_edges)

    def with_(self, **changes) -> PipelineConfig:
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["schedule"] = self.schedule.value
        d["seeds"] = list(self.seeds)
        d["data"]["fractions"] = list(self.data.fractions)
        d["tau_resolved"] = self.resolved_tau()
        d["warmup_resolved"] = self.t_w
        return d


@dataclass
class IterationRecord:
    iteration: int
    skdt: float
    kdt: float
    n_probe: int
    n_landmarks: int
    mean_landmark_acc: float
    best_rank: int | None
    candidates: list[str]
    ranking: list[tuple[str, float, float]] = field(repr=False, default_factory=list)


@dataclass
class PipelineReport:
    seed: int
    config: dict
    iterations: list[IterationRecord]
    epochs: list[dict]
    landmarks: list[tuple[str, float, float]]
    final_arch: str
    final_loss: float
    final_acc: float
    final_rank: int | None
    mean_acc: float  # mean stand-alone accuracy (%) of the search's candidates
    standalone_wall_time_s: float
    epochs_trained: int
    version: int = REPORT_VERSION

    @property
    def skdt(self) -> float:
        return self.iterations[-1].skdt

    def to_dict(self) -> dict:
        return asdict(self)


def probe_batch(data: Dataset, splits: SplitSet, n_batches: int, batch_size: int,
                rng: np.random.Generator):
    """A fixed evaluation block: the first ``n_batches`` shuffled batches of valid."""
    blocks = batches(data, splits.valid, batch_size, rng)[:n_batches]
    return (np.concatenate([X for X, _ in blocks]), np.concatenate([y for _, y in blocks]))


def run_pipeline(cfg: PipelineConfig, data: Dataset, splits: SplitSet, cache: BenchmarkCache,
                 seed: int, jobs: int = 1) -> PipelineReport:
    """Landmark-regularized SPOS over ``cfg.T`` iterations.

    Iteration 1 seeds the landmark set with diverse mutants of a random root.
    Every iteration trains the super-net for ``epochs_per_iter`` epochs, probes
    its rank correlation, and stand-alone trains the top ``M`` new
    architectures found by evolution; these join the landmarks for the next
    iteration. The answer is the best stand-alone candidate found by search.
    """
    space = builtin_space(cfg.space)
    hp = cfg.hparams
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(6)]
    init_rng, landmark_rng, train_rng, pair_rng, evo_rng, probe_rng = streams
    sn = new_supernet(space, data.n_features, data.n_classes, hp, init_rng)
    sched = cfg.sched
    fit_block = probe_batch(data, splits, cfg.probe_batches, hp.batch_size, evo_rng)

    landmarks = LandmarkSet()
    candidates: list[StandaloneResult] = []
    iterations: list[IterationRecord] = []
    epochs: list[dict] = []
    for it in range(1, cfg.T + 1):
        try:
            if it == 1:
                roots = sample_landmarks(space, cfg.M, cfg.resolved_tau(), landmark_rng)
                landmarks = extend_landmarks(
                    landmarks, train_standalone_many(space, roots, data, splits, hp, cache, jobs=jobs))
            for _ in range(cfg.epochs_per_iter):
                if cfg.regularize:
                    s = train_epoch(sn, data, splits, landmarks, sched, cfg.m, train_rng, pair_rng)
                else:
                    s = train_epoch(sn, data, splits, None, None, cfg.m, train_rng, pair_rng)
                epochs.append({"epoch": s.epoch, "mean_task_loss": s.mean_task_loss,
                               "mean_reg_loss": s.mean_reg_loss, "lambda": s.lam,
                               "skdt_probe": None})
            probe = probe_skdt(sn, landmarks, data, splits, cache, cfg.probe_k, probe_rng,
                               cfg.skdt_bin, jobs=jobs)
            epochs[-1]["skdt_probe"] = probe.skdt
            known = set(landmarks.archs) | {c.arch for c in candidates}
            ranked = evolutionary_search(sn, fit_block, cfg.evo, evo_rng,
                                         topk=cfg.evo.topk + len(known))
            proposals = [a for a, _ in ranked if a not in known][:cfg.M]
            results = train_standalone_many(space, proposals, data, splits, hp, cache, jobs=jobs)
        except Exception as exc:
            raise PipelineError(it, exc) from exc
        candidates.extend(results)
        iterations.append(IterationRecord(
            it, probe.skdt, probe.kdt, probe.n, len(landmarks),
            float(np.mean([100.0 * e.valid_acc for e in landmarks])), probe.best_rank,
            [str(r.arch) for r in results],
            [(str(a), g, p) for a, g, p in zip(probe.sample.archs, probe.sample.gt_acc,
                                                probe.sample.proxy_acc)]))
        if it < cfg.T:
            landmarks = extend_landmarks(landmarks, results)

    pool = candidates or landmarks.entries
    final = min(pool, key=lambda r: (r.valid_loss, str(r.arch)))
    table = cache.records(space.name, hparams_hash(hp, data, splits), hp.standalone_seed)
    final_rank = (rank_of(final.valid_acc, [r.valid_acc for r in table])
                  if len(table) == space.size else None)
    mean_acc = float(np.mean([100.0 * r.valid_acc for r in pool]))
    wall = sum(r.wall_time_s for r in {*landmarks.entries, *candidates})
    return PipelineReport(seed, cfg.to_dict(), iterations, epochs,
                          [(str(e.arch), e.valid_loss, e.valid_acc) for e in landmarks],
                          str(final.arch), final.valid_loss, 100.0 * final.valid_acc,
                          final_rank, mean_acc, wall, sn.epoch_counter)


@dataclass
class ABRow:
    seed: int
    baseline: PipelineReport
    regularized: PipelineReport

    @property
    def delta_skdt(self) -> float:
        return self.regularized.skdt - self.baseline.skdt


@dataclass
class ABReport:
    config: dict
    rows: list[ABRow]

    def _stat(self, arm: str, attr: str):
        vals = [getattr(getattr(r, arm), attr) for r in self.rows]
        return statistics.fmean(vals), (statistics.stdev(vals) if len(vals) > 1 else 0.0)

    def summary(self) -> dict:
        out = {}
        for arm in ("baseline", "regularized"):
            out[f"{arm}_skdt_mean"], out[f"{arm}_skdt_std"] = self._stat(arm, "skdt")
            out[f"{arm}_final_acc_mean"], out[f"{arm}_final_acc_std"] = self._stat(arm, "final_acc")
        out["delta_skdt_mean"] = out["regularized_skdt_mean"] - out["baseline_skdt_mean"]
        out["n_seeds"] = len(self.rows)
        out["n_positive"] = sum(r.delta_skdt > 0 for r in self.rows)
        return out


def run_baseline_vs_regularized(cfg: PipelineConfig, data: Dataset, splits: SplitSet,
                                cache: BenchmarkCache, jobs: int = 1) -> ABReport:
    """Paired runs per seed: the configured pipeline against the same pipeline
    with lambda_max = 0, under identical seeds and epoch budgets."""
    base_cfg = cfg.with_(lambda_max=0.0)
    rows = [ABRow(seed, run_pipeline(base_cfg, data, splits, cache, seed, jobs),
                  run_pipeline(cfg, data, splits, cache, seed, jobs))
            for seed in cfg.seeds]
    return ABReport(cfg.to_dict(), rows)
