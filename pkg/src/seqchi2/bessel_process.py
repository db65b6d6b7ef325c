"""Two-time joint tails of the Bessel process ``|W(t)|`` of a d-dimensional Brownian motion.

``P(|W(s1)| >= x1, |W(s2)| >= x2)`` coincides with the two-stage chi-squared
level for ``N = d + 1`` categories, ``c = sqrt(s1/s2)`` and critical values
``x_i* = x_i^2 / s_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .asymptotics import alpha_asym
from .model import TestDesign
from .quadrature import CriticalPair, QuadResult, alpha_quad
from .special_fn import DomainError

__all__ = ["BesselQuery", "map_to_chi2", "bessel_tail_asym", "bessel_tail_quad"]


@dataclass(frozen=True)
class BesselQuery:
    d: int
    s1: float
    s2: float
    x1: float
    x2: float

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise DomainError(f"dimension d must be an integer >= 2, got {self.d!r}")
        if not 0 < self.s1 < self.s2:
            raise DomainError(f"need 0 < s1 < s2, got s1={self.s1}, s2={self.s2}")
        if not (self.x1 >= 0 and self.x2 >= 0):
            raise DomainError("thresholds must be nonnegative")
        object.__setattr__(self, "d", int(self.d))

    def normalized(self) -> "BesselQuery":
        """Equivalent query with ``s2 = 1`` (Brownian scaling)."""
        root = math.sqrt(self.s2)
        return BesselQuery(self.d, self.s1 / self.s2, 1.0, self.x1 / root, self.x2 / root)


def map_to_chi2(q: BesselQuery) -> tuple[CriticalPair, TestDesign]:
    levels = CriticalPair(q.x1 * q.x1 / q.s1, q.x2 * q.x2 / q.s2)
    return levels, TestDesign(q.d + 1, math.sqrt(q.s1 / q.s2))


def bessel_tail_asym(q: BesselQuery) -> float:
    """Leading asymptotic ``log P``; needs ``1 < x2/x1 < s2/s1``."""
    levels, design = map_to_chi2(q)
    if levels.x1_star == 0:
        raise DomainError("x1 must be positive")
    return alpha_asym(levels.x1_star, levels.rho, design)


def bessel_tail_quad(q: BesselQuery, rel_tol: float = 1e-10) -> QuadResult:
    levels, design = map_to_chi2(q.normalized())
    return alpha_quad(levels, design, rel_tol=rel_tol)
