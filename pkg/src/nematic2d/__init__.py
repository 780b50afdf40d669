"""Three-tier numerical laboratory for two-dimensional nematic dynamics.

Tier 1 solves the Doi-Smoluchowski equation as a Fourier-moment hierarchy
(:mod:`nematic2d.kinetic`), tier 2 the closed order-parameter equations
(:mod:`nematic2d.closure`) and tier 3 the asymptotic vortex and phase
dynamics (:mod:`nematic2d.vortex`).
"""

from .errors import (
    BesselOverflowError,
    ConfigError,
    DomainError,
    NematicError,
    NumericalInstabilityError,
)
from .specfun import NematicParams, bessel_i, lambda_of, make_params, w_gamma, w_gamma_prime
from .grid import ComplexField, Grid2D, MomentState

__version__ = "0.1.0"

__all__ = [
    "BesselOverflowError",
    "ComplexField",
    "ConfigError",
    "DomainError",
    "Grid2D",
    "MomentState",
    "NematicError",
    "NematicParams",
    "NumericalInstabilityError",
    "bessel_i",
    "lambda_of",
    "make_params",
    "w_gamma",
    "w_gamma_prime",
]
