"""Modified Bessel (Infeld) function I_nu(x) with certified error control.

Two evaluation routes are provided:

* a power series with a rigorous geometric tail bound, usable while
  ``e^x`` stays representable;
* the two-term Hankel (Weber) expansion, whose relative error against the
  leading asymptote ``e^x / sqrt(2 pi x)`` is bounded by the envelope
  :func:`psi_envelope`.

:func:`infeld_scaled` dispatches between them and always returns an
enclosure of ``exp(-x) * I_nu(x)``.  :func:`log_infeld` is the fast,
vectorised point evaluator used inside densities; it is not certified.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field

import numpy as np
from scipy import special

__all__ = [
    "Enclosure",
    "WeberTerms",
    "DomainError",
    "infeld_series",
    "weber_expansion",
    "weber_factor",
    "psi_envelope",
    "infeld_scaled",
    "crossover",
    "log_infeld",
]

_EPS = sys.float_info.epsilon
# log of the largest finite double, minus head-room for the prefactor
_LOG_MAX = 700.0


class DomainError(ValueError):
    """Raised when an argument falls outside the region where a bound holds."""


@dataclass(frozen=True)
class Enclosure:
    """Closed interval ``[lo, hi]`` tagged with the bound that produced it."""

    lo: float
    hi: float
    tag: str = ""

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"empty enclosure [{self.lo!r}, {self.hi!r}]")

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def rel_halfwidth(self) -> float:
        """Half-width over midpoint; ``inf`` for an enclosure centred on 0."""
        m = self.mid
        return math.inf if m == 0 else 0.5 * self.width / abs(m)

    def contains(self, value: float) -> bool:
        return self.lo <= value <= self.hi

    def intersects(self, other: "Enclosure") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def scaled(self, factor: float, tag: str | None = None) -> "Enclosure":
        """Multiply by a nonnegative factor."""
        if factor < 0:
            raise ValueError("factor must be nonnegative")
        return Enclosure(self.lo * factor, self.hi * factor, self.tag if tag is None else tag)


@dataclass(frozen=True)
class WeberTerms:
    """Partial sums of the Hankel expansion of I_nu and their remainder bound.

    ``I_nu(x) = (e^{-x} e^{-i pi (nu + 1/2)} (A_p + R1) + e^x (B_p + R2)) / sqrt(2 pi x)``
    with ``|R1|, |R2| <= remainder_bound``.
    """

    nu: float
    x: float
    p: int
    a_p: float
    b_p: float
    g: float
    remainder_bound: float
    pochhammer: tuple[float, ...] = field(repr=False)


def _check_order(nu: float) -> float:
    nu = float(nu)
    if not math.isfinite(nu) or nu < 0:
        raise DomainError(f"order nu must be finite and >= 0, got {nu!r}")
    return nu


def _hankel_coefficients(nu: float, count: int) -> list[float]:
    """(nu, m) for m = 0 .. count-1."""
    four_nu2 = 4.0 * nu * nu
    coefs = [1.0]
    for m in range(1, count):
        coefs.append(coefs[-1] * (four_nu2 - (2 * m - 1) ** 2) / (4.0 * m))
    return coefs


def weber_factor(nu: float, x: float) -> float:
    """The factor G multiplying the Weber remainder at radius ``x``.

    ``nu > 1/2`` needs ``2x > nu - 1/2``; ``0 <= nu < 1/2`` needs
    ``2x > nu + 3/2``; ``nu == 1/2`` accepts any ``x > 0`` (G = 1).
    """
    nu = _check_order(nu)
    x = float(x)
    if not x > 0:
        raise DomainError(f"x must be positive, got {x!r}")
    if nu == 0.5:
        return 1.0
    if nu > 0.5:
        if not 2.0 * x > nu - 0.5:
            raise DomainError(f"requires 2x > nu - 1/2 (nu={nu}, x={x})")
        return (1.0 - (nu - 0.5) / (2.0 * x)) ** (-nu - 0.5)
    if not 2.0 * x > nu + 1.5:
        raise DomainError(f"requires 2x > nu + 3/2 for nu < 1/2 (nu={nu}, x={x})")
    return (1.0 - (nu + 1.5) / (2.0 * x)) ** (-nu - 1.5) * (1.0 + (2.0 * nu + 2.0) / x)


def weber_expansion(nu: float, x: float, p: int = 2) -> WeberTerms:
    """Hankel expansion partial sums ``A_p``, ``B_p`` with the Weber remainder bound."""
    if int(p) != p or p < 1:
        raise ValueError(f"p must be a positive integer, got {p!r}")
    p = int(p)
    g = weber_factor(nu, x)
    nu = float(nu)
    x = float(x)
    coefs = _hankel_coefficients(nu, p + 1)
    two_x = 2.0 * x
    a_p = math.fsum(coefs[m] / two_x**m for m in range(p))
    b_p = math.fsum((-1) ** m * coefs[m] / two_x**m for m in range(p))
    log_gamma_ratio = math.lgamma(0.5) + math.lgamma(p / 2 + 1) - math.lgamma((p + 1) / 2)
    bound = 2.0 * g * g * abs(coefs[p]) * math.exp(log_gamma_ratio - p * math.log(two_x))
    return WeberTerms(nu, x, p, a_p, b_p, g, bound, tuple(coefs[:p]))


def psi_envelope(nu: float, x: float) -> float:
    """Bound on ``|I_nu(x) sqrt(2 pi x) e^{-x} - 1|``.

    For ``nu = 1/2`` this is ``e^{-2x}``.  Otherwise it is the two-term
    Weber bound; the G factor is squared for ``nu > 1/2`` and taken as is
    for ``nu < 1/2``.
    """
    nu = _check_order(nu)
    x = float(x)
    if nu == 0.5:
        if not x > 0:
            raise DomainError(f"x must be positive, got {x!r}")
        return math.exp(-2.0 * x)
    g = weber_factor(nu, x)
    if nu > 0.5:
        g = g * g
    q = 4.0 * nu * nu
    e2 = math.exp(-2.0 * x)
    return e2 + (abs(q - 1.0) / (8.0 * x) + g * abs((q - 1.0) * (q - 9.0)) / (32.0 * x * x)) * (1.0 + e2)


def infeld_series(nu: float, x: float, rel_tol: float = 1e-12) -> Enclosure:
    """Enclose ``I_nu(x)`` by summing its power series.

    Terms are summed until the geometric majorant of the tail drops below
    ``rel_tol/2`` of the partial sum.  Floating-point rounding of the
    recurrence is accounted for by a relative pad of a few ulps per term,
    so ``rel_tol`` much below ``1e-13`` cannot be honoured.

    Raises ``OverflowError`` when ``e^x``-sized values are not representable;
    use :func:`infeld_scaled` there.
    """
    nu = _check_order(nu)
    x = float(x)
    if not (x >= 0 and math.isfinite(x)):
        raise DomainError(f"x must be finite and >= 0, got {x!r}")
    if not 0 < rel_tol < 1:
        raise ValueError("rel_tol must lie in (0, 1)")
    if x == 0:
        v = 1.0 if nu == 0 else 0.0
        return Enclosure(v, v, "series")
    if x > _LOG_MAX:
        raise OverflowError(f"I_{nu}({x}) overflows double precision; use infeld_scaled")

    half = 0.5 * x
    q = half * half
    log_t0 = nu * (math.log(x) - math.log(2.0)) - math.lgamma(nu + 1.0)
    if log_t0 < -700.0 and q < 0.5 * (nu + 1.0):
        # leading term is subnormal; tail ratio < 1/2 so the sum is < e * t0
        return Enclosure(0.0, max(math.exp(log_t0 + 1.0), 5e-324), "series")

    term = math.exp(log_t0)
    terms = [term]
    k = 0
    tail = math.inf
    while True:
        ratio = q / ((k + 1) * (k + nu + 1.0))
        nxt = term * ratio
        if ratio < 0.5:
            # subsequent ratios are smaller, so the tail is a geometric majorant
            tail = nxt / (1.0 - ratio)
            partial = math.fsum(terms)
            if tail <= 0.5 * rel_tol * partial or tail <= _EPS * partial:
                break
        terms.append(nxt)
        term = nxt
        k += 1
        if k > 100000:
            raise RuntimeError("series failed to converge")
    partial = math.fsum(terms)
    # each term carries ~1.5 ulp per recurrence step plus the error of exp(log_t0)
    pad = (2.0 * (len(terms) + 8) + 2.0 * abs(log_t0)) * _EPS * partial
    return Enclosure(partial - pad, partial + tail + pad, "series")


def crossover(nu: float) -> float:
    """Switch point between the series and asymptotic branches."""
    return max(30.0, 4.0 * float(nu) + 10.0)


def infeld_scaled(nu: float, x: float) -> Enclosure:
    """Enclose ``exp(-x) * I_nu(x)`` for any ``x >= 0``."""
    nu = _check_order(nu)
    x = float(x)
    if not (x >= 0 and math.isfinite(x)):
        raise DomainError(f"x must be finite and >= 0, got {x!r}")
    if x == 0:
        return infeld_series(nu, 0.0)
    if nu == 0.5:
        v = -math.expm1(-2.0 * x) / math.sqrt(2.0 * math.pi * x)
        pad = 8 * _EPS * v
        return Enclosure(v - pad, v + pad, "exact_half")
    if x < crossover(nu):
        enc = infeld_series(nu, x)
        scale = math.exp(-x)
        pad = 4 * _EPS
        return Enclosure(enc.lo * scale * (1 - pad), enc.hi * scale * (1 + pad), "series")
    lead = 1.0 / math.sqrt(2.0 * math.pi * x)
    psi = psi_envelope(nu, x)
    pad = 8 * _EPS
    return Enclosure(
        max(0.0, lead * (1.0 - psi) * (1 - pad)), lead * (1.0 + psi) * (1 + pad), "psi_envelope"
    )


def log_infeld(nu: float, x):
    """Vectorised ``log I_nu(x)`` (``-inf`` where the value is 0).

    Point evaluator for densities; accuracy is that of the underlying
    exponentially scaled Bessel routine (a few ulps), with no enclosure.
    """
    nu = _check_order(nu)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("x must be >= 0")
    with np.errstate(divide="ignore"):
        out = np.log(special.ive(nu, x)) + x
    tiny = (out == -np.inf) & (x > 0)
    if np.any(tiny):
        # ive underflowed; the leading series term is exact to O(x^2) here
        out = np.where(tiny, nu * (np.log(np.where(tiny, x, 1.0)) - math.log(2.0)) - math.lgamma(nu + 1.0), out)
    return out
