"""Exception types raised by the numerical routines."""


class PamlabError(Exception):
    """Base class for all package errors."""


class DomainError(PamlabError, ValueError):
    """An argument lies outside the domain of the operation."""


class QuadratureError(PamlabError):
    """Adaptive quadrature did not reach its tolerance within the budget."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class AlphaBracketError(PamlabError):
    """No sign change was found when solving for the scale alpha(t)."""

    def __init__(self, message, t_min=None):
        super().__init__(message)
        self.t_min = t_min


class WindowError(PamlabError):
    """A continuum window does not fit inside the lattice box of a field."""

    def __init__(self, message, required_radius=None):
        super().__init__(message)
        self.required_radius = required_radius


class EigenConvergenceError(PamlabError):
    """The eigen-solver stopped before meeting its residual tolerance."""

    def __init__(self, message, value=None, residual=None, iterations=None):
        super().__init__(message)
        self.value = value
        self.residual = residual
        self.iterations = iterations


class GridError(PamlabError, ValueError):
    """A grid is inconsistent with the requested operation."""


class EvolutionError(PamlabError):
    """The ODE integrator failed (typically step-size underflow)."""

    def __init__(self, message, stiffness_ratio=None):
        super().__init__(message)
        self.stiffness_ratio = stiffness_ratio


class InfeasibleConstraintError(PamlabError, ValueError):
    """The separation constraint of a constrained problem cannot be met."""


class WeightError(PamlabError):
    """Importance weights are degenerate (for example all zero)."""


class ConfigError(PamlabError, ValueError):
    """A run configuration is invalid."""
