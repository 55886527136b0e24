"""Exception types shared across the toolkit."""


class DelayGameError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DelayGameError):
    """Invalid configuration, scenario file, or precondition violation."""


class DivergenceError(DelayGameError):
    """A simulation produced a non-finite state.

    Carries the blow-up time and whatever portion of the trajectory was
    completed before the failure.
    """

    def __init__(self, message, t_blowup, partial=None):
        super().__init__(message)
        self.t_blowup = t_blowup
        self.partial = partial


class InstabilityError(DelayGameError):
    """The PDE solve produced non-finite values (CFL violation or blow-up)."""

    def __init__(self, message, step, time, cfl):
        super().__init__(message)
        self.step = step
        self.time = time
        self.cfl = cfl


class SingularCouplingError(DelayGameError):
    """Delay-coupling matrix is numerically singular (delay too large)."""


class ConstraintSolveError(DelayGameError):
    """The algebraic constraint iteration failed to converge."""

    def __init__(self, message, iterations, contraction_estimate):
        super().__init__(message)
        self.iterations = iterations
        self.contraction_estimate = contraction_estimate
