# graphem/errors.py
import numpy as np


class GraphemError(Exception):
    """Base class for every failure raised by the graphem package."""


class ModelValidationError(GraphemError, ValueError):
    def __init__(self, report):
        self.report = report
        super().__init__("Invalid model: " + "; ".join(report.violations))


class DatasetSpecError(GraphemError, ValueError):
    pass


class ConfigError(GraphemError, ValueError):
    pass


class FilterDivergenceError(GraphemError):
    """A covariance that must be inverted is numerically singular."""

    def __init__(self, step: int, stage: str, condition: float):
        self.step = step
        self.stage = stage
        self.condition = condition
        super().__init__(
            f"{stage} failed at step k={step}: condition number {condition:.3e} exceeds limit"
        )


class SingularSystemError(GraphemError, np.linalg.LinAlgError):
    pass


class EMIterationError(GraphemError):
    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"EM iteration {iteration} failed: {cause}")


class InputFormatError(GraphemError, ValueError):
    """A file handed to a command does not have the expected shape."""
