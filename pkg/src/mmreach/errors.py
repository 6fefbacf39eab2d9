"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes, so every error raised from library code
should derive from :class:`MMReachError`.
"""


class MMReachError(Exception):
    """Base class for library errors."""


class DimensionError(MMReachError, ValueError):
    """Operands have incompatible lengths."""


class NotARectangleError(MMReachError, ValueError):
    """An embedding point does not satisfy ``x <= xhat``."""


class DomainError(MMReachError, ValueError):
    """An input lies outside the system domain or disturbance box."""


class ConstructionError(MMReachError, ValueError):
    """A decomposition function could not be built from the given data."""


class UnsupportedMonomialError(ConstructionError):
    """A polynomial term has no case table in the supported menu."""

    def __init__(self, row, exponents, coeff, names):
        self.row = row
        self.exponents = tuple(exponents)
        self.coeff = coeff
        term = "*".join(
            f"{v}^{e}" if e > 1 else v for v, e in zip(names, exponents) if e
        )
        super().__init__(
            f"unsupported monomial {coeff:g}*{term or '1'} in row {row + 1}"
        )


class PreconditionError(MMReachError):
    """A sampled hypothesis of a construction failed."""


class CertificationRefused(MMReachError):
    """The evidence does not satisfy the hypothesis of the requested certificate."""

    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class NumericError(MMReachError):
    """Base class for numerical failures (exit code 3)."""


class EvaluationError(NumericError):
    """A vector field returned a non-finite value."""


class StepFailure(NumericError):
    """The integrator could not meet its tolerance within the step budget."""


class NoConvergenceError(NumericError):
    """An iterative solver stopped before reaching its residual target."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class SingularJacobianError(NumericError):
    """Newton's method met a numerically singular Jacobian."""


class ConfigError(MMReachError):
    """The analysis configuration is malformed (exit code 2)."""
