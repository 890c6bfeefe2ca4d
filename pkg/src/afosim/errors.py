"""Exception types shared across the package."""


class AfosimError(Exception):
    """Base class for all package errors."""


class DomainError(AfosimError, ValueError):
    """An argument is outside the domain an operation is defined on."""


class ConfigurationError(AfosimError, ValueError):
    """A configuration value is inconsistent or unusable (bad scan step,
    malformed experiment config, ...)."""


class SingularManifoldError(AfosimError, ArithmeticError):
    """A manifold formula was evaluated too close to its singular set
    (denominator effectively zero)."""


class StiffnessError(AfosimError, RuntimeError):
    """The adaptive integrator drove the step size below its floor.

    Carries the failure time, the state at failure and the last local
    error estimate so the caller can diagnose the run.
    """

    def __init__(self, time, state, error_estimate):
        self.time = float(time)
        self.state = state
        self.error_estimate = float(error_estimate)
        super().__init__(
            f"step size underflow at t={self.time!r} "
            f"(last error estimate {self.error_estimate:.3e}); "
            f"state={state!r}"
        )


class AlignmentError(AfosimError, ValueError):
    """Two event sequences that must refer to the same crossings disagree."""
