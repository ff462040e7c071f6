"""Credit response and risk modelling: from raw CSV to tuned tree ensembles and payoff-priced reports."""

from .errors import (
    ConfigError,
    CreditPipeError,
    FitError,
    IngestError,
    InputError,
    LabelDomainError,
    PipelineError,
    ResampleError,
    SchemaError,
    StatisticsError,
)
from .frame import Frame, derive_labels, read_csv, remap_response, stratified_split, subset_risk
from .pipeline import PipelineConfig, RunReport, SearchConfig, run_pipeline, tune

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CreditPipeError",
    "FitError",
    "Frame",
    "IngestError",
    "InputError",
    "LabelDomainError",
    "PipelineConfig",
    "PipelineError",
    "ResampleError",
    "RunReport",
    "SchemaError",
    "SearchConfig",
    "StatisticsError",
    "derive_labels",
    "read_csv",
    "remap_response",
    "run_pipeline",
    "stratified_split",
    "subset_risk",
    "tune",
]
