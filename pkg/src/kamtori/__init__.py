"""Poisson-series normal forms for secular planetary Hamiltonians.

Construction of one-dimensional elliptic tori and full-dimensional invariant
(Kolmogorov-form) tori for two-degree-of-freedom secular models, with numeric
cross-validation (integration, Poincare sections, frequency analysis) and a
validated-arithmetic norm-estimate engine producing convergence certificates.
"""

from .intervals import Interval
from .series import (PoissonSeries, ClassifiedExpansion, add, sub, mul,
                     poisson_bracket, l1_norm, angle_average, classify,
                     evaluate, derivative)

__version__ = "0.1.0"

__all__ = [
    "Interval", "PoissonSeries", "ClassifiedExpansion", "add", "sub", "mul",
    "poisson_bracket", "l1_norm", "angle_average", "classify", "evaluate",
    "derivative", "__version__",
]
