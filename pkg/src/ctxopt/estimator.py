"""Weighted conditional moments, the variance-regularized objective and
finite-sample bound calculators.

All ``(1 + o(1))`` factors in the bounds are taken as 1 and unnamed absolute
constants are explicit arguments defaulting to 1, so the calculators are
useful for shape, monotonicity and coverage checks rather than certified
constants.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "LossModel",
    "BoundInputs",
    "conditional_expectation",
    "conditional_variance",
    "rnw_objective",
    "generalization_bound",
    "finite_set_bound",
    "covering_number",
    "continuous_set_bound",
    "stddev_deviation_bound",
    "suboptimality_bound",
    "continuous_suboptimality_bound",
    "highdim_bound",
    "subgaussian_norm_bound",
    "dro_equivalence_rhs",
    "dro_equivalence_certified",
    "check_subgradient",
]


@dataclass
class LossModel:
    """Loss ``l(x, xi)`` with a subgradient in ``x`` and an affine map into [0, 1].

    ``evaluate`` and ``subgradient`` act on raw units and must broadcast over
    a matrix of outcome rows.  ``calibrate`` applies ``(raw - offset) / scale``.
    """

    evaluate: Callable
    subgradient: Callable
    lipschitz: float = 1.0
    scale: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise InvalidInputError("calibration scale must be positive")

    @classmethod
    def from_range(cls, evaluate, subgradient, lo, hi, lipschitz=1.0):
        """Calibration derived from the loss range ``[lo, hi]`` on the declared supports."""
        if not hi > lo:
            raise InvalidInputError("loss range must have hi > lo")
        return cls(evaluate, subgradient, lipschitz=lipschitz / (hi - lo), scale=hi - lo, offset=lo)

    def calibrate(self, raw):
        return (np.asarray(raw, dtype=float) - self.offset) / self.scale

    def uncalibrate(self, value):
        return np.asarray(value, dtype=float) * self.scale + self.offset

    def losses(self, x, outcomes):
        return np.asarray(self.evaluate(x, outcomes), dtype=float)

    def calibrated_losses(self, x, outcomes):
        return self.calibrate(self.losses(x, outcomes))


def _pair(w, losses):
    w = np.asarray(w, dtype=float).reshape(-1)
    z = np.asarray(losses, dtype=float).reshape(-1)
    if w.shape != z.shape:
        raise InvalidInputError(f"weights have length {w.size} but losses have length {z.size}")
    return w, z


def conditional_expectation(w, losses) -> float:
    w, z = _pair(w, losses)
    return float(w @ z)


def conditional_variance(w, losses) -> float:
    """Weighted variance ``E[l^2] - E[l]^2``, clamped at zero."""
    w, z = _pair(w, losses)
    m = w @ z
    return float(max(w @ (z * z) - m * m, 0.0))


def rnw_objective(w, losses, lam: float) -> float:
    if lam < 0:
        raise InvalidInputError("regularization weight must be nonnegative")
    return conditional_expectation(w, losses) + lam * math.sqrt(conditional_variance(w, losses))


@dataclass(frozen=True)
class BoundInputs:
    """Plug-in quantities for the bound calculators.

    ``g_gamma`` is the scaled marginal density ``f(gamma) / (2 int K^2)``.
    ``C`` and ``C_lambda`` stand in for the constants the theory leaves
    unspecified.
    """

    n: float = 1000
    h: float = 1.0
    p: int = 1
    delta: float = 0.05
    g_gamma: float = 1.0
    variance: float = 0.25
    cardinality: float = 1.0
    diameter: float = 1.0
    decision_dim: int = 1
    resolution: float = 0.1
    lipschitz: float = 1.0
    tau: float = 0.1
    sigma: float = 1.0
    C: float = 1.0
    C_lambda: float = 1.0
    lam: float = 0.0
    gap: float = 1.0
    n1: Optional[float] = None
    n2: Optional[float] = None
    reduced_dim: Optional[int] = None
    gamma_max: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise InvalidInputError(f"delta must lie in (0, 1), got {self.delta}")
        for name in ("n", "h", "g_gamma", "cardinality", "diameter", "resolution", "tau", "sigma", "C"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if self.variance < 0 or self.lipschitz < 0 or self.C_lambda < 0 or self.lam < 0:
            raise InvalidInputError("variance, lipschitz, C_lambda and lam must be nonnegative")

    def replace(self, **kw) -> "BoundInputs":
        return replace(self, **kw)

    @property
    def effective_n(self) -> float:
        """``n h^p g(gamma)``."""
        return self.n * self.h ** self.p * self.g_gamma


def _log_term_bound(variance, log_term, eff_n):
    return math.sqrt(variance * log_term / eff_n)


def generalization_bound(inp: BoundInputs) -> float:
    return _log_term_bound(inp.variance, math.log(1.0 / inp.delta), inp.effective_n)


def finite_set_bound(inp: BoundInputs) -> float:
    return _log_term_bound(inp.variance, math.log(inp.cardinality / inp.delta), inp.effective_n)


def covering_number(diameter: float, dim: int, resolution: float) -> int:
    """Ball-covering count ``ceil((1 + 2D/eta)^d)``."""
    if diameter < 0 or resolution <= 0 or dim < 1:
        raise InvalidInputError("covering_number needs D >= 0, eta > 0, d >= 1")
    # guard against 1e-15 overshoot making ceil jump
    val = (1.0 + 2.0 * diameter / resolution) ** dim
    return int(math.ceil(val - 1e-9 * val))


def continuous_set_bound(inp: BoundInputs) -> float:
    card = covering_number(inp.diameter, inp.decision_dim, inp.resolution)
    log_term = math.log(card / inp.delta)
    base = _log_term_bound(inp.variance, log_term, inp.effective_n)
    return base + inp.lipschitz * inp.resolution * (1.0 + math.sqrt(log_term / inp.effective_n))


def stddev_deviation_bound(inp: BoundInputs) -> float:
    log_term = math.log((1.0 + 2.0 / inp.tau) / inp.delta)
    return inp.tau + math.sqrt(log_term / inp.effective_n)


def _subopt(sd, tau, log_a, log_b, eff_n):
    return (sd + tau) * math.sqrt(4.0 * log_a / eff_n) + 2.0 * log_b / eff_n


def suboptimality_bound(inp: BoundInputs) -> float:
    """Excess true cost of the regularized minimizer over a finite decision set."""
    card = inp.cardinality
    return _subopt(
        math.sqrt(inp.variance),
        inp.tau,
        math.log(6.0 * card / inp.delta),
        math.log(6.0 * card * (1.0 + 2.0 / inp.tau) / inp.delta),
        inp.effective_n,
    )


def continuous_suboptimality_bound(inp: BoundInputs) -> float:
    """Continuous-set version; the covering count replaces ``O(1)(D/eta)^d``."""
    card = covering_number(inp.diameter, inp.decision_dim, inp.resolution)
    return (2.0 + inp.lam) * inp.lipschitz * inp.resolution + _subopt(
        math.sqrt(inp.variance),
        inp.tau,
        math.log(card / inp.delta),
        math.log((1.0 + 2.0 / inp.tau) * card / inp.delta),
        inp.effective_n,
    )


def subgaussian_norm_bound(sigma: float, dim: int, delta: float) -> float:
    """High-probability norm bound ``4 sigma sqrt(d) + 2 sigma sqrt(2 log(1/delta))``."""
    if not 0.0 < delta <= 1.0:
        raise InvalidInputError("delta must lie in (0, 1]")
    return 4.0 * sigma * math.sqrt(dim) + 2.0 * sigma * math.sqrt(2.0 * math.log(1.0 / delta))


def highdim_bound(inp: BoundInputs, bounded: bool = False) -> float:
    """Bound for NW on PCA-projected covariates with sample splitting.

    Needs ``n1``, ``n2`` and ``reduced_dim``.  With ``bounded=True`` the
    almost-sure covariate radius ``gamma_max`` is used (defaulting to the
    sub-gaussian radius); otherwise the sub-gaussian form applies.
    """
    if inp.n1 is None or inp.n2 is None or inp.reduced_dim is None:
        raise InvalidInputError("highdim_bound needs n1, n2 and reduced_dim")
    if not inp.gap > 0:
        raise InvalidInputError("spectral gap must be positive")
    n1, n2, pr = inp.n1, inp.n2, inp.reduced_dim
    eff_n1 = n1 * inp.h ** pr * inp.g_gamma
    card, delta = inp.cardinality, inp.delta
    if bounded:
        gmax = inp.gamma_max if inp.gamma_max is not None else _subgaussian_radius(inp)
        first = _log_term_bound(inp.variance, math.log(2.0 * card / delta), eff_n1)
        second = (8.0 / inp.h) * (inp.C / inp.gap) * math.sqrt(pr / n2 * math.log(4.0 * card / delta)) * gmax
    else:
        first = _log_term_bound(inp.variance, math.log(5.0 * n1 * card / delta), eff_n1)
        second = (
            (8.0 / inp.h)
            * (4.0 * inp.sigma * inp.C / inp.gap)
            * math.sqrt(pr / n2 * math.log(10.0 * n1 * card / delta))
            * (math.sqrt(inp.p) + math.sqrt(0.5 * math.log(5.0 * n1 * card / delta)))
        )
    return first + second


def _subgaussian_radius(inp: BoundInputs) -> float:
    n1 = inp.n1 if inp.n1 is not None else inp.n
    return 4.0 * inp.sigma * (math.sqrt(inp.p) + math.sqrt(0.5 * math.log(5.0 * n1 * inp.cardinality / inp.delta)))


def dro_equivalence_rhs(inp: BoundInputs) -> float:
    """Threshold on the true conditional std above which DRO and RNW coincide w.h.p."""
    card = covering_number(inp.diameter, inp.decision_dim, inp.resolution)
    eff = inp.effective_n
    return (
        inp.C_lambda / math.sqrt(eff)
        + inp.tau
        + math.sqrt((math.log(card / inp.delta) + math.log(1.0 + 2.0 / inp.tau)) / eff)
        + 2.0 * inp.lipschitz * inp.resolution
    )


def dro_equivalence_certified(stddevs, inp: BoundInputs) -> bool:
    """True when every supplied conditional std exceeds :func:`dro_equivalence_rhs`."""
    return bool(np.all(np.asarray(stddevs, dtype=float) >= dro_equivalence_rhs(inp)))


def check_subgradient(loss: LossModel, x, outcome, eps: float = 1e-6) -> float:
    """Max abs gap between the analytic subgradient and central differences."""
    x = np.asarray(x, dtype=float)
    outcome = np.atleast_2d(np.asarray(outcome, dtype=float))
    g = np.asarray(loss.subgradient(x, outcome), dtype=float).reshape(-1)
    fd = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = eps
        fd[k] = (loss.losses(x + e, outcome)[0] - loss.losses(x - e, outcome)[0]) / (2 * eps)
    return float(np.max(np.abs(g - fd)))
