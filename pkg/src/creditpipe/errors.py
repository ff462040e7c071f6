"""Exception hierarchy shared by every pipeline stage."""


class CreditPipeError(Exception):
    """Base class for all errors raised by this package."""


class IngestError(CreditPipeError):
    """Malformed CSV content (bad row width, non-numeric field)."""


class SchemaError(CreditPipeError):
    """Column layout does not match what an operation expects."""


class LabelDomainError(CreditPipeError):
    """Label column holds a value outside the allowed codes."""


class ConfigError(CreditPipeError):
    """Invalid or infeasible configuration value."""


class StatisticsError(CreditPipeError):
    """Not enough data to compute a statistic."""


class ResampleError(CreditPipeError):
    """ADASYN cannot run on the given class layout."""


class FitError(CreditPipeError):
    """Model training failed."""


class InputError(CreditPipeError):
    """Evaluation inputs are inconsistent (lengths, classes, shapes)."""


class PipelineError(CreditPipeError):
    """A pipeline stage aborted; ``stage`` names it."""

    def __init__(self, stage: str, message: str, provenance: dict | None = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.provenance = provenance or {}
