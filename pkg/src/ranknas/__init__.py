"""Desk-scale landmark-regularized weight-sharing architecture search."""

from .data import DataConfig, Dataset, SplitSet, generate_dataset, split_dataset
from .errors import (CapacityError, ConfigError, InfeasibleThresholdError, InvalidArgumentError,
                     NumericOverflowError, StandaloneTrainingError, UndefinedStatisticError)
from .hparams import TrainHParams
from .landmarks import (BenchmarkCache, LandmarkSet, RegSchedule, ScheduleMode, lambda_at,
                        regularizer_full, regularizer_sampled, sample_landmarks,
                        train_standalone)
from .metrics import kendall_tau_b, probe_skdt, sparse_kendall_tau
from .search import (EvoConfig, PipelineConfig, evolutionary_search, run_baseline_vs_regularized,
                     run_pipeline)
from .space import Architecture, SearchSpace, builtin_space
from .supernet import SuperNet, new_supernet, train_epoch, train_step

__version__ = "0.1.0"
