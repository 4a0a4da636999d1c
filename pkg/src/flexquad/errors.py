"""Exception types shared across the toolkit."""


class FlexquadError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(FlexquadError):
    """Invalid or inconsistent configuration input."""


class DomainError(FlexquadError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class SolverError(FlexquadError):
    """A numerical solver failed to converge or was ill-conditioned."""


class DesignError(FlexquadError):
    """Controller synthesis failed (e.g. unstabilizable pair)."""


class ComparisonError(FlexquadError):
    """Run comparison requested on incompatible scenario results."""


class NumericalAbort(FlexquadError):
    """Simulation state became non-finite.

    Carries the last time at which the state was still finite.
    """

    def __init__(self, message, last_good_time):
        super().__init__(message)
        self.last_good_time = last_good_time
