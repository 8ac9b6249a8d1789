"""Exception hierarchy shared by the solver modules."""


class RefractError(Exception):
    """Base class for every error raised by this package."""


class ArgumentError(RefractError, ValueError):
    """Invalid arguments (reversed endpoints, out-of-domain points, bad grids)."""


class DomainError(RefractError):
    """A model function produced a non-finite value at a queried point."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class DegenerateVolatilityError(DomainError):
    """sigma(x) <= 0 where a strictly positive volatility is required."""


class ToleranceError(RefractError):
    """Quadrature or iteration did not reach the requested tolerance."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


class ModelError(RefractError, ValueError):
    """Model or reward parameters violate their invariants."""


class SolverError(RefractError):
    """Base class for failures of the barrier, HJB and discounted solvers."""


class AssumptionError(SolverError):
    """Required structural conditions are not met and force was not requested."""


class B0NotFoundError(SolverError):
    """pi_1 has no sign change on the searched range."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class RangeError(SolverError, ValueError):
    """A lower barrier lies outside the admissible range of the active case."""


class NoSolutionError(SolverError):
    """A bracketing root search found no sign change."""

    def __init__(self, message, probes=None):
        super().__init__(message)
        self.probes = probes or []


class ShootingError(SolverError):
    """An initial-value shot did not produce a usable trajectory."""


class NumericalBlowupError(SolverError):
    """A simulated state became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConfigError(RefractError):
    """Configuration file could not be parsed or validated."""
