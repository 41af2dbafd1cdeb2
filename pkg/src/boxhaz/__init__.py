"""Bayesian Box-Cox transformation hazard models with a piecewise-constant
baseline, fitted by Gibbs sampling."""

from .data_io import (
    IngestionError,
    SimulationSpec,
    build_partition,
    read_dataset,
    read_samples,
    simulate,
    write_dataset,
    write_samples,
    write_summary,
)
from .inference import (
    PosteriorSummary,
    hazard_curve,
    hpd_interval,
    nelson_aalen,
    predict_survival,
    summarize,
)
from .model import (
    ConfigurationError,
    ConstraintError,
    DomainError,
    ModelConfig,
    ModelError,
    ParameterState,
    SurvivalDataset,
    TimePartition,
    hazard,
    log_likelihood,
)
from .sampler import ChainOutput, InitializationError, SamplerSettings, geweke_diagnostic, run_chain
from .selection import FitStatistics, GridResult, compute_cpo, compute_dic, run_grid

__all__ = [
    "build_partition",
    "ChainOutput",
    "compute_cpo",
    "compute_dic",
    "ConfigurationError",
    "ConstraintError",
    "DomainError",
    "FitStatistics",
    "geweke_diagnostic",
    "GridResult",
    "hazard",
    "hazard_curve",
    "hpd_interval",
    "IngestionError",
    "InitializationError",
    "log_likelihood",
    "ModelConfig",
    "ModelError",
    "nelson_aalen",
    "ParameterState",
    "PosteriorSummary",
    "predict_survival",
    "read_dataset",
    "read_samples",
    "run_chain",
    "run_grid",
    "SamplerSettings",
    "simulate",
    "SimulationSpec",
    "summarize",
    "SurvivalDataset",
    "TimePartition",
    "write_dataset",
    "write_samples",
    "write_summary",
]

__version__ = "0.1.0"
