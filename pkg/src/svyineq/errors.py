"""Exception hierarchy for the svyineq package."""


class SurveyInequalityError(Exception):
    """Base class for all svyineq errors."""


class DomainError(SurveyInequalityError):
    """Invalid data or parameter values (non-positive incomes, bad shapes, ...)."""


class DegenerateSampleError(SurveyInequalityError):
    """Too few usable observations for the requested computation."""


class DesignError(SurveyInequalityError):
    """Inconsistent or unusable sampling-design structure."""


class EstimationError(SurveyInequalityError):
    """Numerical estimation failure (non-convergence, non-finite evaluation)."""


class TailError(SurveyInequalityError):
    """Extreme-value detection or treatment failure."""


class CalibrationError(SurveyInequalityError):
    """Weight calibration did not converge or margins are unusable."""


class BootstrapError(SurveyInequalityError):
    """Resampling degeneracy or excessive replicate failures."""


class SimulationError(SurveyInequalityError):
    """Monte Carlo scenario failure."""


class SchemaError(SurveyInequalityError):
    """Input file does not conform to the expected schema."""


class ConfigError(SurveyInequalityError):
    """Invalid scenario or command configuration."""
