"""Exception taxonomy shared across the package.

CLI exit codes map onto this hierarchy: ConfigError -> 2,
NumericalError -> 3, DataError -> 4.
"""


class HygroError(Exception):
    """Base class for all package errors."""


class ConfigError(HygroError):
    """Invalid configuration or argument validation failure."""


class DataError(HygroError):
    """Corrupted, missing or inconsistent data artifacts."""


class NumericalError(HygroError):
    """Numerical failure during model evaluation."""


class DegenerateParametersError(NumericalError):
    """Material parameters outside the valid domain of the coefficient laws."""


class SingularStateError(NumericalError):
    """Local state hit a pole of a transport coefficient (phi >= b)."""


class DivergedStepError(NumericalError):
    """Inner nonlinear iteration failed to converge within the budget."""
