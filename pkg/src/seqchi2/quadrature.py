"""Joint rejection probability by adaptive cubature, plus Bonferroni combination.

``alpha(x1*, x2*)`` is the integral of ``p_{2,0}`` over
``[x1*/2, inf) x [x2*/2, inf)``.  Each semi-infinite axis is mapped onto
``(0, 1)`` by ``u = a + L s / (1 - s)`` (squared for ``a`` near 0) and the unit square is integrated by
a tensor Gauss-Kronrod 7/15 rule on adaptively quartered panels.  The
integrand is divided by the exponential factor at its dominant point, so
the integral is returned as a log value that stays meaningful long after
``alpha`` itself underflows.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import TestDesign, log_density_2
from .special_fn import Enclosure

__all__ = [
    "CriticalPair",
    "QuadResult",
    "alpha_quad",
    "cubature_unit_square",
    "bonferroni_bounds",
    "BonferroniBounds",
]

# Gauss-Kronrod 7/15 on [-1, 1] (QUADPACK qk15); Gauss nodes are the odd entries.
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])  # ascending, 15 nodes
_WK = np.concatenate([_WGK[:-1], _WGK[::-1]])
_WG15 = np.zeros(15)
_WG15[1:7:2] = _WG[:3]
_WG15[7] = _WG[3]
_WG15[9:15:2] = _WG[2::-1]


@dataclass(frozen=True)
class CriticalPair:
    """Critical levels ``x1*``, ``x2*`` of the two-stage test."""

    x1_star: float
    x2_star: float

    def __post_init__(self):
        for v in (self.x1_star, self.x2_star):
            if not (v >= 0 and math.isfinite(v)):
                raise ValueError(f"critical levels must be finite and >= 0, got {v!r}")
        object.__setattr__(self, "x1_star", float(self.x1_star))
        object.__setattr__(self, "x2_star", float(self.x2_star))

    @property
    def rho(self) -> float:
        if self.x1_star == 0:
            raise ValueError("rho is undefined for x1* = 0")
        return math.sqrt(self.x2_star / self.x1_star)

    def lam(self, design: TestDesign) -> float:
        return self.x1_star / (2.0 * design.beta)

    def reduced(self, design: TestDesign) -> tuple[float, float]:
        """Reduced levels ``sqrt(x_i* / (2 beta))``."""
        b2 = 2.0 * design.beta
        return math.sqrt(self.x1_star / b2), math.sqrt(self.x2_star / b2)


@dataclass(frozen=True)
class QuadResult:
    log_alpha: float
    alpha: float
    est_abs_error: float
    panels: int
    converged: bool = True
    rel_error: float = 0.0

    def __post_init__(self):
        if self.est_abs_error < 0:
            raise ValueError("error estimate must be nonnegative")


def _panel(f, x0, x1, y0, y1):
    hx, hy = 0.5 * (x1 - x0), 0.5 * (y1 - y0)
    xs = 0.5 * (x0 + x1) + hx * _NODES
    ys = 0.5 * (y0 + y1) + hy * _NODES
    vals = f(xs[:, None], ys[None, :])
    k = hx * hy * (_WK @ vals @ _WK)
    g = hx * hy * (_WG15 @ vals @ _WG15)
    return k, abs(k - g)


def cubature_unit_square(f, rel_tol: float = 1e-10, abs_tol: float = 0.0, max_panels: int = 40000,
                         initial: int = 4):
    """Adaptive tensor Gauss-Kronrod cubature of ``f`` over ``(0, 1)^2``.

    ``f(x, y)`` is called with broadcastable arrays.  The panel with the
    largest error estimate is quartered until the summed estimate meets
    ``max(abs_tol, rel_tol * |total|)``.  Returns
    ``(value, error, panel_count, converged)``; the final sums run over
    panels in creation order so the result does not depend on heap ties.
    """
    edges = np.linspace(0.0, 1.0, initial + 1)
    results: dict[int, tuple[float, float]] = {}
    heap: list[tuple[float, int, tuple[float, float, float, float]]] = []
    next_id = 0
    for i in range(initial):
        for j in range(initial):
            box = (edges[i], edges[i + 1], edges[j], edges[j + 1])
            results[next_id] = _panel(f, *box)
            heapq.heappush(heap, (-results[next_id][1], next_id, box))
            next_id += 1

    def exact_sums():
        ordered = sorted(results)
        return (math.fsum(results[k][0] for k in ordered), math.fsum(results[k][1] for k in ordered))

    total, err = exact_sums()
    converged = False
    steps = 0
    while True:
        if err <= max(abs_tol, rel_tol * abs(total)):
            total, err = exact_sums()
            if err <= max(abs_tol, rel_tol * abs(total)):
                converged = True
                break
        if len(results) + 3 > max_panels:
            break
        _, pid, (x0, x1, y0, y1) = heapq.heappop(heap)
        old_val, old_err = results.pop(pid)
        total -= old_val
        err -= old_err
        xm, ym = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        for box in ((x0, xm, y0, ym), (xm, x1, y0, ym), (x0, xm, ym, y1), (xm, x1, ym, y1)):
            val, e = results[next_id] = _panel(f, *box)
            total += val
            err += e
            heapq.heappush(heap, (-e, next_id, box))
            next_id += 1
        steps += 1
        if steps % 256 == 0:
            total, err = exact_sums()
    total, err = exact_sums()
    return total, err, len(results), converged


def _exponent(u1, u2, c, beta):
    return (-(u1 + u2) + 2.0 * c * math.sqrt(u1 * u2)) / beta


def _anchor(a1: float, a2: float, c: float) -> tuple[float, float]:
    # maximiser of the exponential factor over [a1, inf) x [a2, inf)
    return max(a1, c * c * a2), max(a2, c * c * a1)


def _near_origin(v: float, beta: float) -> bool:
    # below this the u^delta edge factor dominates the exponential
    return v < 1e-2 * beta


def _axis_scale(vi: float, vj: float, c: float, beta: float) -> float:
    """Length scale of the integrand along one axis at the anchor point."""
    if _near_origin(vi, beta):
        return beta / (1.0 - c)
    slope = (1.0 - c * math.sqrt(vj / vi)) / beta
    # inverse square root of the curvature 0.5 c sqrt(vj) vi^{-3/2} / beta
    scale = math.sqrt(2.0 * beta / c) * vi**0.75 / vj**0.25 if vj > 0 else math.inf
    if slope > 0:
        scale = min(scale, 1.0 / slope)
    return min(max(scale, 1e-3), 1e6)


def _axis_map(a: float, scale: float, quadratic: bool):
    """Map ``s in (0, 1)`` onto ``[a, inf)``; returns ``(u, du/ds)``.

    Near the origin the map is quadratic in ``s / (1 - s)``, which turns the
    ``u^delta`` edge behaviour of the density into a polynomial in ``s``
    for integer and half-integer ``delta``.
    """
    if quadratic:
        def f(s):
            w = 1.0 - s
            t = s / w
            return a + scale * t * t, 2.0 * scale * t / (w * w)
    else:
        def f(s):
            w = 1.0 - s
            return a + scale * s / w, scale / (w * w)
    return f


def alpha_quad(levels: CriticalPair, design: TestDesign, rel_tol: float = 1e-10,
               max_panels: int = 40000) -> QuadResult:
    """``alpha(x1*, x2*)`` by adaptive cubature of the limiting density.

    ``converged`` is False when the panel budget ran out before the
    estimated relative error reached ``rel_tol``; the value is still the
    best available estimate.
    """
    if not 1e-13 <= rel_tol < 1e-2:
        raise ValueError(f"rel_tol must lie in [1e-13, 1e-2), got {rel_tol!r}")
    c, beta = design.c, design.beta
    a1, a2 = 0.5 * levels.x1_star, 0.5 * levels.x2_star
    v1, v2 = _anchor(a1, a2, c)
    shift = _exponent(v1, v2, c, beta)
    l1 = _axis_scale(v1, v2, c, beta)
    l2 = _axis_scale(v2, v1, c, beta)

    map1 = _axis_map(a1, l1, _near_origin(a1, beta))
    map2 = _axis_map(a2, l2, _near_origin(a2, beta))

    def integrand(s1, s2):
        u1, j1 = map1(s1)
        u2, j2 = map2(s2)
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp(log_density_2(u1, u2, design) - shift) * (j1 * j2)
        return np.where(np.isfinite(val), val, 0.0)

    total, err, panels, converged = cubature_unit_square(integrand, rel_tol=rel_tol, max_panels=max_panels)
    if total <= 0:
        return QuadResult(-math.inf, 0.0, 0.0, panels, converged, math.inf)
    log_alpha = math.log(total) + shift
    alpha = math.exp(log_alpha)
    return QuadResult(log_alpha, alpha, err * math.exp(shift), panels, converged, err / total)


@dataclass(frozen=True)
class BonferroniBounds:
    """Both Bonferroni orders for ``P(all k: X(n_k) > x_k*)``."""

    first_order: Enclosure
    second_order: Enclosure
    best: Enclosure


def bonferroni_bounds(marginals: Sequence[float], pairwise=None) -> BonferroniBounds:
    """Two-sided bounds on the probability that every event ``A_k`` occurs.

    ``marginals[k] = P(A_k)`` and ``pairwise[j][k] = P(A_j and A_k)``; only
    the strict upper triangle of ``pairwise`` is read.
    Working with complements ``B_k = not A_k`` and ``P(all A) = 1 - P(any B)``:

    * first order: ``P(any B) <= S1`` gives ``lo = max(0, sum a_k - (r - 1))``,
      and ``hi = min_k a_k``;
    * second order: Kounias' inequality ``P(any B) <= S1 - max_k sum_{j != k} P(B_j B_k)``
      raises the lower bound, ``P(any B) >= S1 - S2`` gives ``hi <= 1 - S1 + S2``,
      and ``hi <= min_{j<k} a_jk``.

    ``best`` intersects the two.  For ``r = 2`` the second-order bracket
    collapses onto ``a_12``.
    """
    a = np.asarray(marginals, dtype=float)
    r = a.size
    if r == 0:
        raise ValueError("need at least one marginal")
    if np.any((a < 0) | (a > 1)):
        raise ValueError("marginals must lie in [0, 1]")
    amin = float(a.min())
    first = Enclosure(min(amin, max(0.0, math.fsum(a) - (r - 1))), amin, "bonferroni_1")
    if r == 1:
        single = Enclosure(float(a[0]), float(a[0]), "bonferroni_2")
        return BonferroniBounds(first, single, single)
    if pairwise is None:
        return BonferroniBounds(first, first, first)

    pw = np.asarray(pairwise, dtype=float)
    if pw.shape != (r, r):
        raise ValueError(f"pairwise must be {r}x{r}, got {pw.shape}")
    iu = np.triu_indices(r, 1)
    upper = pw[iu]
    sym = np.zeros((r, r))
    sym[iu] = upper
    sym = sym + sym.T
    for j, k in zip(*iu):
        if sym[j, k] < 0 or sym[j, k] > min(a[j], a[k]):
            raise ValueError(f"pairwise[{j}][{k}]={sym[j, k]} is outside [0, min marginal]")

    b = 1.0 - a
    bb = 1.0 - a[:, None] - a[None, :] + sym  # P(B_j and B_k)
    np.fill_diagonal(bb, 0.0)
    s1 = float(b.sum())
    s2 = float(bb[iu].sum())
    kounias = float(bb.sum(axis=1).max())
    lo2 = min(max(0.0, 1.0 - s1 + kounias), float(upper.min()))
    hi2 = max(lo2, min(float(upper.min()), 1.0 - s1 + s2, float(a.min())))
    second = Enclosure(lo2, hi2, "bonferroni_2")
    lo = max(first.lo, second.lo)
    # the two orders can cross by a rounding error when the bounds are tight
    best = Enclosure(lo, max(lo, min(first.hi, second.hi)), "bonferroni")
    return BonferroniBounds(first, second, best)
