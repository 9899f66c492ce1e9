"""Conditional and marginal law objects used by the engines.

A law is the distribution of Y within one stratum.  Analytic engines produce
``NormalLaw`` / ``DiscreteLaw`` / ``MixtureLaw``; Monte Carlo paths produce
``EmpiricalLaw`` (a sorted sample).  All are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormalLaw:
    mean: float
    var: float  # 0 is allowed: a point mass

    def variance(self) -> float:
        return self.var

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.var == 0.0:
            return np.full(n, self.mean)
        return rng.normal(self.mean, np.sqrt(self.var), size=n)


@dataclass(frozen=True)
class DiscreteLaw:
    values: tuple[float, ...]
    probs: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(sum(v * p for v, p in zip(self.values, self.probs)))

    def variance(self) -> float:
        m = self.mean
        return float(sum(p * (v - m) ** 2 for v, p in zip(self.values, self.probs)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.choice(np.asarray(self.values), size=n, p=np.asarray(self.probs))


def bernoulli_law(p: float) -> DiscreteLaw:
    if p <= 0.0:
        return DiscreteLaw((0.0,), (1.0,))
    if p >= 1.0:
        return DiscreteLaw((1.0,), (1.0,))
    return DiscreteLaw((0.0, 1.0), (1.0 - p, p))


def discrete_from_atoms(values, weights) -> DiscreteLaw:
    """Collapse repeated atom values (exact float equality) and sort."""
    mass: dict[float, float] = {}
    for v, w in zip(values, weights):
        if w > 0.0:
            mass[float(v)] = mass.get(float(v), 0.0) + float(w)
    vals = tuple(sorted(mass))
    total = sum(mass.values())
    return DiscreteLaw(vals, tuple(mass[v] / total for v in vals))


@dataclass(frozen=True)
class MixtureLaw:
    """Gaussian mixture; components with zero variance are atoms."""

    weights: tuple[float, ...]
    means: tuple[float, ...]
    vars: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(sum(w * m for w, m in zip(self.weights, self.means)))

    def variance(self) -> float:
        m = self.mean
        return float(
            sum(w * (v + (mu - m) ** 2) for w, mu, v in zip(self.weights, self.means, self.vars))
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.choice(len(self.weights), size=n, p=np.asarray(self.weights))
        means = np.asarray(self.means)[idx]
        sds = np.sqrt(np.asarray(self.vars))[idx]
        return means + sds * rng.standard_normal(n)


@dataclass(frozen=True)
class EmpiricalLaw:
    """Sorted sample standing in for a marginal; carries its seed for provenance."""

    sorted_values: np.ndarray
    seed_key: tuple[int, ...] = ()

    def __post_init__(self):
        v = np.asarray(self.sorted_values, dtype=float)
        object.__setattr__(self, "sorted_values", v)

    @property
    def n(self) -> int:
        return int(self.sorted_values.size)

    @property
    def mean(self) -> float:
        return float(self.sorted_values.mean())

    def variance(self) -> float:
        return float(self.sorted_values.var())

    def quantile_grid(self, n: int) -> np.ndarray:
        """Empirical quantile function at midpoints (i - 1/2)/n, linear interpolation."""
        u = (np.arange(1, n + 1) - 0.5) / n
        m = self.sorted_values.size
        return np.interp(u * (m - 1), np.arange(m), self.sorted_values)
