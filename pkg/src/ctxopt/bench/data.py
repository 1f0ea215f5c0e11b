"""Random streams and synthetic data generators.

Every generator takes a ``numpy.random.Generator``; :func:`trial_streams`
derives independent PCG64 streams per trial from a single seed so results do
not depend on how trials are scheduled.  Normal draws go through the inverse
normal CDF applied to uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from ..errors import InvalidInputError
from ..kernel import check_dataset

__all__ = [
    "Dataset",
    "make_rng",
    "trial_streams",
    "standard_normal",
    "gen_portfolio",
    "portfolio_mean",
    "NEWSVENDOR_MEAN",
    "NEWSVENDOR_COV",
    "NEWSVENDOR_PROBES",
    "newsvendor_center",
    "newsvendor_demand",
    "newsvendor_density",
    "gen_newsvendor",
    "WindParams",
    "gen_wind_synthetic",
    "wind_dataset",
]


@dataclass
class Dataset:
    covariates: np.ndarray
    outcomes: np.ndarray

    def __post_init__(self):
        self.covariates, self.outcomes = check_dataset(self.covariates, self.outcomes)

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.covariates[idx], self.outcomes[idx])


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def trial_streams(seed: int, trials: int):
    """One independent generator per trial, spawned from ``SeedSequence(seed)``."""
    return [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(trials)]


def standard_normal(rng, size):
    u = rng.random(size)
    # Generator.random can return exactly 0.0
    u = np.where(u > 0.0, u, 2.0 ** -54)
    return ndtri(u)


# ---------------------------------------------------------------- portfolio


def portfolio_mean(gamma):
    """Conditional mean return of each of the first two assets."""
    g = np.asarray(gamma, dtype=float)
    return 0.5 - g * g


def gen_portfolio(n: int, rng) -> Dataset:
    """Three assets: two noisy copies of ``0.5 - g^2`` with opposite noise, one riskless at zero."""
    rng = make_rng(rng)
    g = rng.uniform(-1.0, 1.0, n)
    eps = standard_normal(rng, n)
    m = portfolio_mean(g)
    xi = np.column_stack([m + 0.1 * eps, m - 0.1 * eps, np.zeros(n)])
    return Dataset(g[:, None], xi)


# ---------------------------------------------------------------- newsvendor

NEWSVENDOR_MEAN = np.array([7.5, 5.0])
NEWSVENDOR_COV = np.diag([2.0, 1.0])
NEWSVENDOR_PROBES = np.array([[1.5, 2.5], [3.0, 2.5], [4.5, 2.5], [4.5, 5.0], [1.5, 5.0], [3.0, 5.0]])
DEMAND_HALF_WIDTH = 10.0


def newsvendor_center(gamma):
    """Demand center ``50 + 20 sin(3 t / pi) + 5 p`` for covariates ``(t, p)``."""
    g = np.atleast_2d(np.asarray(gamma, dtype=float))
    out = 50.0 + 20.0 * np.sin(3.0 * g[:, 0] / math.pi) + 5.0 * g[:, 1]
    return out if np.ndim(gamma) > 1 else float(out[0])


def newsvendor_demand(gamma, m: int, rng) -> np.ndarray:
    """``m`` demand draws from the conditional law at a single covariate."""
    c = newsvendor_center(np.asarray(gamma, dtype=float).reshape(1, -1))[0]
    return make_rng(rng).uniform(c - DEMAND_HALF_WIDTH, c + DEMAND_HALF_WIDTH, m)


def newsvendor_density(gamma) -> float:
    g = np.asarray(gamma, dtype=float).reshape(-1) - NEWSVENDOR_MEAN
    var = np.diag(NEWSVENDOR_COV)
    return float(np.exp(-0.5 * np.sum(g * g / var)) / (2 * math.pi * math.sqrt(np.prod(var))))


def gen_newsvendor(n: int, rng) -> Dataset:
    rng = make_rng(rng)
    z = standard_normal(rng, (n, 2))
    gam = NEWSVENDOR_MEAN + z * np.sqrt(np.diag(NEWSVENDOR_COV))
    c = newsvendor_center(gam)
    demand = rng.uniform(c - DEMAND_HALF_WIDTH, c + DEMAND_HALF_WIDTH)
    return Dataset(gam, demand[:, None])


# ---------------------------------------------------------------- wind


@dataclass(frozen=True)
class WindParams:
    """Synthetic hourly wind production and prices.

    Production on day ``t`` is ``base + carry * (prev - base) + noise`` per
    hour, where the noise is a day-level shock plus hourly jitter, clipped to
    ``[0, capacity]``.  Prices follow a daily shape with a lognormal day level.
    """

    capacity: float = 3000.0
    base_level: float = 1200.0
    base_amplitude: float = 300.0
    carry: float = 0.7
    day_shock: float = 450.0
    hour_noise: float = 250.0
    price_level: float = 30.0
    price_amplitude: float = 10.0
    price_day_sigma: float = 0.15
    price_hour_sigma: float = 2.0
    hours: int = 24


def _wind_base(p: WindParams):
    h = np.arange(p.hours)
    return p.base_level + p.base_amplitude * np.cos(2 * math.pi * (h - 3) / p.hours)


def gen_wind_synthetic(days: int, rng, params: WindParams = WindParams()):
    """``(prices, production)`` arrays of shape ``days x hours``; day 0 starts at the base shape."""
    if days < 1:
        raise InvalidInputError("days must be positive")
    rng = make_rng(rng)
    p = params
    base = _wind_base(p)
    hours = np.arange(p.hours)
    price_shape = p.price_level + p.price_amplitude * np.sin(2 * math.pi * (hours - 8) / p.hours)
    prod = np.empty((days, p.hours))
    prices = np.empty((days, p.hours))
    prev = base.copy()
    for t in range(days):
        shock = p.day_shock * standard_normal(rng, 1)[0]
        jitter = p.hour_noise * standard_normal(rng, p.hours)
        cur = base + p.carry * (prev - base) + shock + jitter
        cur = np.clip(cur, 0.0, p.capacity)
        prod[t] = cur
        prev = cur
        level = math.exp(p.price_day_sigma * standard_normal(rng, 1)[0])
        prices[t] = np.maximum(price_shape * level + p.price_hour_sigma * standard_normal(rng, p.hours), 0.5)
    return prices, prod


def wind_dataset(prices, production) -> Dataset:
    """Covariate = previous day's production; outcome = ``[prices, production]`` of the day."""
    P = np.asarray(prices, dtype=float)
    X = np.asarray(production, dtype=float)
    if P.shape != X.shape or P.shape[0] < 2:
        raise InvalidInputError("need matching price/production arrays with at least two days")
    return Dataset(X[:-1], np.hstack([P[1:], X[1:]]))
