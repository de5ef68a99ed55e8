"""Exception hierarchy shared by the library and the CLI."""

from enum import IntEnum


class ExitCode(IntEnum):
    OK = 0
    USAGE = 2
    NUMERICAL = 3


class PeivError(Exception):
    """Base class for every error raised by this package."""

    exit_code: ExitCode = ExitCode.USAGE


class ContractViolationError(PeivError, ValueError):
    """Shapes or lengths of the inputs do not agree."""


class ModelError(PeivError, ValueError):
    """A state-space model could not be constructed."""


class ConfigurationError(PeivError, ValueError):
    """Configuration values are invalid (e.g. singular parameter prior)."""


class NonStationaryError(PeivError, ValueError):
    """The transition matrix has spectral radius >= 1."""


class EstimationError(PeivError, RuntimeError):
    """Numerical failure inside an estimator; counted as a failed run in Monte Carlo."""

    exit_code = ExitCode.NUMERICAL


class IllPosedError(EstimationError):
    """The normal matrix of the state regression is singular."""


class UnidentifiableError(EstimationError):
    """The parameter regressor Phi(X) is rank deficient."""


class NumericalFailureError(EstimationError):
    """An innovation or prediction covariance lost positive definiteness."""


class DivergenceError(EstimationError):
    """The augmented-state smoother produced non-finite values."""
