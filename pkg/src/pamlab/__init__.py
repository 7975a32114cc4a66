"""Numerics for the parabolic Anderson model with double-exponential potential tails.

Modules: potential (laws, scale functions, fields), spectral (principal
eigenvalues), evolution (Cauchy problem and Feynman-Kac), variational (the
chi problem and its functionals), confinement (shape metrics and the
weighted confinement experiment), cli (batch front-end).
"""
__version__ = "0.1.0"

from .errors import (AlphaBracketError, ConfigError, DomainError, EigenConvergenceError, EvolutionError,
                     GridError, InfeasibleConstraintError, PamlabError, QuadratureError, WeightError,
                     WindowError)
from .grid import GridFunction
from .potential import (BoxSpec, PotentialDistribution, PotentialField, ScaleTable, StepFunction,
                        SyntheticScaleTable, TiltSpec, alpha_scale, cgf, hk_ratio, kappa, sample_field,
                        shift_rescale)

__all__ = [
    "__version__", "GridFunction", "BoxSpec", "PotentialDistribution", "PotentialField", "ScaleTable",
    "StepFunction", "SyntheticScaleTable", "TiltSpec", "alpha_scale", "cgf", "hk_ratio", "kappa",
    "sample_field", "shift_rescale", "PamlabError", "DomainError", "QuadratureError", "AlphaBracketError",
    "WindowError", "EigenConvergenceError", "GridError", "EvolutionError", "InfeasibleConstraintError",
    "WeightError", "ConfigError",
]
