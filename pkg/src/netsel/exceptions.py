"""Exception hierarchy shared by every netsel module."""


class NetselError(Exception):
    """Base class for all errors raised by netsel."""


class DimensionError(NetselError, ValueError):
    """An array has the wrong length or shape."""


class ValidationError(NetselError, ValueError):
    """A parameter or input value violates its contract."""


class DomainError(NetselError, ValueError):
    """A state lies outside the domain of a model (e.g. negative concentration)."""


class StepOverflowError(NetselError, ArithmeticError):
    """A time step produced non-finite values."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"non-finite state produced at step {step}")


class NewtonConvergenceError(NetselError, RuntimeError):
    """The implicit step's Newton iteration failed to reach tolerance."""

    def __init__(self, residual_norm, iterations, step=None):
        self.residual_norm = residual_norm
        self.iterations = iterations
        self.step = step
        where = "" if step is None else f" at step {step}"
        super().__init__(
            f"Newton iteration did not converge{where} after {iterations} "
            f"iterations (residual inf-norm {residual_norm:.3e})"
        )


class SingularMatrixError(NetselError, ArithmeticError):
    """A linear system in the sensitivity recursion is singular."""

    def __init__(self, step):
        self.step = step
        super().__init__(f"singular implicit system matrix at step {step}")


class EmptySelectionError(NetselError, ValueError):
    """A selection vector selects no node where at least one is required."""


class InfeasibleError(NetselError, ValueError):
    """No feasible point satisfying the selection constraints exists."""


class EnumerationCapError(NetselError, RuntimeError):
    """Exhaustive enumeration would exceed the configured cap."""

    def __init__(self, count, cap):
        self.count = count
        self.cap = cap
        super().__init__(
            f"enumeration refused: {count} feasible selections exceed cap {cap:g}"
        )


class UndefinedMetricError(NetselError, ValueError):
    """The relative error metric is undefined for a zero reference state."""


class PhaseError(NetselError, RuntimeError):
    """A pipeline phase failed; ``phase`` names it."""

    def __init__(self, phase, cause):
        self.phase = phase
        self.cause = cause
        super().__init__(f"phase '{phase}' failed: {cause}")
