"""Joint significance level of a two-stage (sequential) Pearson chi-squared test."""

__version__ = "0.1.0"

from .model import TestDesign  # noqa: E402
from .quadrature import CriticalPair, alpha_quad  # noqa: E402

__all__ = ["__version__", "TestDesign", "CriticalPair", "alpha_quad"]
