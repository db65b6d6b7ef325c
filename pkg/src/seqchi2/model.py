"""Design parameters and the limiting joint density of nested Pearson statistics.

Under the hypothesis, the halved statistics ``u_i = X(n_i) / 2`` converge
jointly to a Markov chain whose density is a product of Bessel kernels.
All densities are computed in log space; the linear value is ``exp`` of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .special_fn import log_infeld

__all__ = [
    "TestDesign",
    "ChainParams",
    "derive_params",
    "log_density_r",
    "density_r",
    "log_density_2",
    "density_2",
]


@dataclass(frozen=True)
class TestDesign:
    """Two-stage design: ``N`` categories and limiting ratio ``c = sqrt(n1/n2)``."""

    __test__ = False  # not a pytest class

    n_outcomes: int
    c: float

    def __post_init__(self):
        if int(self.n_outcomes) != self.n_outcomes or self.n_outcomes < 3:
            raise ValueError(f"need N >= 3 categories, got {self.n_outcomes!r}")
        if not 0.0 < self.c < 1.0:
            raise ValueError(f"c must lie in (0, 1), got {self.c!r}")
        object.__setattr__(self, "n_outcomes", int(self.n_outcomes))
        object.__setattr__(self, "c", float(self.c))

    @classmethod
    def from_sizes(cls, n1: int, n2: int, n_outcomes: int) -> "TestDesign":
        if not 0 < n1 < n2:
            raise ValueError(f"need 0 < n1 < n2, got n1={n1}, n2={n2}")
        return cls(n_outcomes, math.sqrt(n1 / n2))

    @property
    def delta(self) -> float:
        return (self.n_outcomes - 3) / 2.0

    @property
    def beta(self) -> float:
        return 1.0 - self.c * self.c

    @property
    def k2(self) -> float:
        return 1.0 / self.beta

    @property
    def dof(self) -> int:
        """Degrees of freedom of each marginal chi-squared law."""
        return self.n_outcomes - 1


@dataclass(frozen=True)
class ChainParams:
    r: int
    rho: tuple[float, ...]  # rho_0 .. rho_r, with rho_0 = rho_r = 0
    b: tuple[float, ...]  # b_1 .. b_{r-1}
    lam: tuple[float, ...]  # lambda_1 .. lambda_r
    k_r: float
    delta: float

    @classmethod
    def from_design(cls, design: TestDesign) -> "ChainParams":
        return _chain_from_rho([design.c], design.n_outcomes)


def _chain_from_rho(inner: Sequence[float], n_outcomes: int) -> ChainParams:
    r = len(inner) + 1
    rho = (0.0, *map(float, inner), 0.0)
    sq = [x * x for x in rho]
    b = tuple(
        sq[i] * (1 - sq[i - 1]) * (1 - sq[i + 1]) / ((1 - sq[i - 1] * sq[i]) * (1 - sq[i] * sq[i + 1]))
        for i in range(1, r)
    )
    lam = tuple((1 - sq[i - 1]) * (1 - sq[i]) / (1 - sq[i - 1] * sq[i]) for i in range(1, r + 1))
    k_r = math.prod(1 - sq[k] * sq[k - 1] for k in range(1, r)) / math.prod(1 - sq[k] for k in range(1, r))
    return ChainParams(r, rho, b, lam, k_r, (n_outcomes - 3) / 2.0)


def derive_params(sample_sizes: Sequence[int], n_outcomes: int) -> ChainParams:
    """Chain parameters for nested samples ``n_1 < ... < n_r``."""
    sizes = [int(n) for n in sample_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least two sample sizes")
    if sizes[0] <= 0 or any(a >= b for a, b in zip(sizes, sizes[1:])):
        raise ValueError(f"sample sizes must be positive and strictly increasing: {sizes}")
    if n_outcomes < 3:
        raise ValueError(f"need N >= 3 categories, got {n_outcomes}")
    return _chain_from_rho([math.sqrt(a / b) for a, b in zip(sizes, sizes[1:])], n_outcomes)


def _power_term(delta: float, log_arg):
    # (arg)^(delta/2) in log form, with 0^0 = 1
    if delta == 0:
        return np.zeros_like(log_arg)
    return 0.5 * delta * log_arg


def log_density_r(u, params: ChainParams):
    """Log of the limiting joint density ``p_{r,0}``; ``u`` has shape ``(..., r)``."""
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != params.r:
        raise ValueError(f"expected {params.r} coordinates, got shape {u.shape}")
    if np.any(u < 0):
        raise ValueError("density arguments must be nonnegative")
    d = params.delta
    lam = np.asarray(params.lam)
    log_norm = (
        (1 + d) * math.log(params.k_r)
        + 0.5 * d * sum(math.log(bi) for bi in params.b)
        + math.lgamma(1 + d)
        + float(np.sum(np.log(lam)))
    )
    with np.errstate(divide="ignore"):
        out = -np.sum(u / lam, axis=-1) - log_norm
        out = out + _power_term(d, np.log(u[..., 0]) + np.log(u[..., -1]) - math.log(lam[0] * lam[-1]))
        for i, bi in enumerate(params.b):
            z = 2.0 * np.sqrt(bi / (lam[i] * lam[i + 1])) * np.sqrt(u[..., i]) * np.sqrt(u[..., i + 1])
            out = out + log_infeld(d, z)
    return out


def density_r(u, params: ChainParams):
    return np.exp(log_density_r(u, params))


def log_density_2(u1, u2, design: TestDesign):
    """Log of ``p_{2,0}(u1, u2)``, vectorised over broadcastable arrays."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if np.any(u1 < 0) or np.any(u2 < 0):
        raise ValueError("density arguments must be nonnegative")
    d, c, beta = design.delta, design.c, design.beta
    log_norm = (1 + d) * math.log(design.k2) + d * math.log(c) + math.lgamma(1 + d) + 2 * math.log(beta)
    with np.errstate(divide="ignore"):
        out = -(u1 + u2) / beta - log_norm
        out = out + _power_term(d, np.log(u1) + np.log(u2) - 2 * math.log(beta))
        out = out + log_infeld(d, 2.0 * c * np.sqrt(u1) * np.sqrt(u2) / beta)
    return out


def density_2(u1, u2, design: TestDesign):
    return np.exp(log_density_2(u1, u2, design))
