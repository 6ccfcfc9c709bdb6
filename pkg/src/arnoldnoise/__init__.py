"""Certified statistics of Arnold circle maps with additive uniform noise.

The package computes rigorous enclosures for stationary densities, mixing
rates, rotation numbers and the linear response of the rotation number for
the family  T(x) = x + tau - (eps/2pi) sin(2pi x)  perturbed each step by
i.i.d. noise uniform on [-xi/2, xi/2], together with non-rigorous Monte
Carlo estimators for cross-validation.
"""

__version__ = "0.1.0"

from .intervals import IVal

__all__ = ["IVal", "__version__"]
