"""Monte Carlo oracles for the joint tail probabilities.

Replications are cut into fixed-size blocks.  Block ``b`` draws from its own
Philox stream seeded by ``SeedSequence(seed, spawn_key=(b,))``, so the hit
count depends only on ``(seed, reps)`` and never on how blocks are spread
over worker threads.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bessel_process import BesselQuery

__all__ = [
    "TrialScheme",
    "McEstimate",
    "simulate_pearson_joint",
    "simulate_bessel_joint",
    "default_workers",
    "BLOCK_SIZE",
    "WORKERS_ENV",
]

BLOCK_SIZE = 1 << 16
WORKERS_ENV = "SEQCHI2_WORKERS"


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be a positive integer, got {raw!r}")
        return n
    return os.cpu_count() or 1


@dataclass(frozen=True)
class TrialScheme:
    """Independent trials with outcome probabilities ``probs``, observed after ``n1`` and ``n2`` trials."""

    probs: tuple[float, ...]
    n1: int
    n2: int

    def __post_init__(self):
        p = tuple(float(v) for v in self.probs)
        if len(p) < 2:
            raise ValueError("need at least two outcomes")
        if any(not v > 0 for v in p):
            raise ValueError("all probabilities must be positive")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(p)!r}, not 1")
        if int(self.n1) != self.n1 or int(self.n2) != self.n2 or not 0 < self.n1 < self.n2:
            raise ValueError(f"need integers 0 < n1 < n2, got n1={self.n1}, n2={self.n2}")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "n1", int(self.n1))
        object.__setattr__(self, "n2", int(self.n2))

    @classmethod
    def uniform(cls, n_outcomes: int, n1: int, n2: int) -> "TrialScheme":
        return cls((1.0 / n_outcomes,) * n_outcomes, n1, n2)

    @property
    def n_outcomes(self) -> int:
        return len(self.probs)

    @property
    def c(self) -> float:
        return math.sqrt(self.n1 / self.n2)


@dataclass(frozen=True)
class McEstimate:
    p_hat: float
    std_err: float
    reps: int
    seed: int
    hits: int

    @classmethod
    def from_hits(cls, hits: int, reps: int, seed: int) -> "McEstimate":
        p = hits / reps
        return cls(p, math.sqrt(p * (1.0 - p) / reps), reps, seed, hits)

    def z_score(self, reference: float) -> float:
        """Distance to ``reference`` in standard errors (``inf`` if SE is 0 and they differ)."""
        diff = abs(self.p_hat - reference)
        if self.std_err == 0:
            return 0.0 if diff == 0 else math.inf
        return diff / self.std_err


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _run_blocks(count_block: Callable[[np.random.Generator, int], int], reps: int, seed: int,
                workers: int | None) -> McEstimate:
    if int(reps) != reps or reps < 1:
        raise ValueError(f"reps must be a positive integer, got {reps!r}")
    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    reps, seed = int(reps), int(seed)
    n_blocks = -(-reps // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, reps - b * BLOCK_SIZE) for b in range(n_blocks)]
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ValueError("workers must be >= 1")

    def job(b: int) -> int:
        return int(count_block(_block_rng(seed, b), sizes[b]))

    if workers == 1 or n_blocks == 1:
        counts = [job(b) for b in range(n_blocks)]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, n_blocks)) as pool:
            counts = list(pool.map(job, range(n_blocks)))
    return McEstimate.from_hits(sum(counts), reps, seed)


def _pearson(counts: np.ndarray, n: int, probs: np.ndarray) -> np.ndarray:
    expected = n * probs
    return np.sum((counts - expected) ** 2 / expected, axis=-1)


def simulate_pearson_joint(scheme: TrialScheme, x1_star: float, x2_star: float, reps: int,
                           seed: int, workers: int | None = None) -> McEstimate:
    """Estimate ``P(X(n1) >= x1*, X(n2) >= x2*)`` for nested samples.

    The counts after ``n2`` trials are the ``n1``-trial counts plus an
    independent multinomial increment over the remaining ``n2 - n1`` trials.
    """
    if not (x1_star >= 0 and x2_star >= 0):
        raise ValueError("critical levels must be >= 0")
    probs = np.asarray(scheme.probs)
    n1, n2 = scheme.n1, scheme.n2

    def count(rng: np.random.Generator, size: int) -> int:
        first = rng.multinomial(n1, probs, size=size)
        second = first + rng.multinomial(n2 - n1, probs, size=size)
        hit = (_pearson(first, n1, probs) >= x1_star) & (_pearson(second, n2, probs) >= x2_star)
        return np.count_nonzero(hit)

    return _run_blocks(count, reps, seed, workers)


def simulate_bessel_joint(q: BesselQuery, reps: int, seed: int, workers: int | None = None) -> McEstimate:
    """Estimate ``P(|W(s1)| >= x1, |W(s2)| >= x2)`` by exact Gaussian sampling."""
    sd1 = math.sqrt(q.s1)
    sd_inc = math.sqrt(q.s2 - q.s1)
    t1, t2 = q.x1 * q.x1, q.x2 * q.x2

    def count(rng: np.random.Generator, size: int) -> int:
        w1 = sd1 * rng.standard_normal((size, q.d))
        w2 = w1 + sd_inc * rng.standard_normal((size, q.d))
        hit = (np.einsum("ij,ij->i", w1, w1) >= t1) & (np.einsum("ij,ij->i", w2, w2) >= t2)
        return np.count_nonzero(hit)

    return _run_blocks(count, reps, seed, workers)

