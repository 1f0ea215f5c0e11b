"""Worst-case expectation over a chi-square ball of reweightings.

For a center ``w_bar`` on the simplex with strictly positive entries the
ambiguity set is::

    { w in simplex : sum_i (w_i - w_bar_i)**2 / (2 w_bar_i) <= rho }

With the default ``"proof"`` convention ``rho = lam**2 / 2``, which makes the
worst case equal ``E + lam * sqrt(V)`` whenever ``V >= lam**2``.  The
``"main"`` convention divides by ``w_bar_i`` instead of ``2 w_bar_i`` with the
same right-hand side, i.e. ``rho = lam**2 / 4`` in the form above.

The maximizer has the form ``w_i = w_bar_i * max(0, 1 + (z_i - alpha) / mu)``,
so its support is an upper level set of ``z``.  The exact solver walks that
family from the full support downward, clamping the lowest tie-group of
losses at each step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintViolationError, InvalidInputError, NumericalError

__all__ = [
    "AmbiguitySpec",
    "DualCertificate",
    "WorstCaseResult",
    "worst_case_expectation",
    "worst_case_value",
    "sandwich_check",
    "dual_objective",
    "chi2_divergence",
    "worst_case_subgradient",
    "restrict_to_support",
]

CONVENTIONS = ("proof", "main")
COMPLEMENTARITY_TOL = 1e-10


@dataclass(frozen=True)
class AmbiguitySpec:
    radius: float
    center: np.ndarray
    convention: str = "proof"

    def __post_init__(self):
        lam = float(self.radius)
        if not (lam >= 0 and math.isfinite(lam)):
            raise InvalidInputError(f"radius must be a finite nonnegative number, got {self.radius}")
        w = np.asarray(self.center, dtype=float).reshape(-1)
        if w.size == 0 or not np.all(np.isfinite(w)):
            raise InvalidInputError("center must be a non-empty finite weight vector")
        if np.any(w <= 0):
            i = int(np.flatnonzero(w <= 0)[0])
            raise InvalidInputError(f"center weights must be strictly positive (index {i} is {w[i]})")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"center weights must sum to 1, got {w.sum()!r}")
        if self.convention not in CONVENTIONS:
            raise InvalidInputError(f"convention must be one of {CONVENTIONS}")
        object.__setattr__(self, "radius", lam)
        object.__setattr__(self, "center", w / w.sum())

    @property
    def rho(self) -> float:
        """Budget for ``sum (w - w_bar)^2 / (2 w_bar)``."""
        return self.radius ** 2 / (2.0 if self.convention == "proof" else 4.0)

    @property
    def dual_coefficient(self) -> float:
        """Coefficient of ``nu`` in the conic dual, ``sqrt(2 rho)``."""
        return math.sqrt(2.0 * self.rho)


@dataclass(frozen=True)
class DualCertificate:
    alpha: float
    beta: np.ndarray
    nu: float


@dataclass
class WorstCaseResult:
    value: float
    worst_weights: np.ndarray
    tight: bool
    dual_certificate: DualCertificate
    iterations: int = 0
    info: dict = field(default_factory=dict)


def chi2_divergence(w, center) -> float:
    """``sum (w_i - c_i)^2 / (2 c_i)``."""
    w = np.asarray(w, dtype=float)
    c = np.asarray(center, dtype=float)
    return float(np.sum((w - c) ** 2 / (2.0 * c)))


def _moments(wb, z):
    m = float(wb @ z)
    s = float(max(wb @ ((z - m) ** 2), 0.0))
    return m, s


def _kkt_on_support(wb, z, mask, rho):
    """Closed-form stationary point with ``w`` zero off ``mask`` and the budget tight.

    Returns ``(weights, alpha, mu)`` or ``None`` when no such point exists.
    """
    wf = wb[mask]
    W = float(wf.sum())
    zf = z[mask]
    mean = float(wf @ zf) / W
    s = float(max(wf @ ((zf - mean) ** 2) / W, 0.0))
    denom = 2.0 * rho - (1.0 - W) / W
    if denom <= 0 or s <= 0:
        return None
    mu = math.sqrt(W * s / denom)
    alpha = mean - mu * (1.0 - W) / W
    w = np.zeros_like(wb)
    w[mask] = wf * (1.0 + (zf - alpha) / mu)
    return w, alpha, mu


def _certificate(wb, z, alpha, mu, coef):
    # beta_i = -mu (w_i - wb_i) / sqrt(wb_i), written without the cancellation in w - wb
    sq = np.sqrt(wb)
    beta = -sq * np.maximum(z - alpha, -mu)
    nu = max(mu * coef, float(np.linalg.norm(beta)))
    return DualCertificate(alpha=float(alpha), beta=beta, nu=float(nu))


def _trivial_certificate(wb, z):
    # any alpha works when nu's coefficient is zero; pick one that makes beta feasible
    alpha = float(z.max())
    beta = np.sqrt(wb) * (alpha - z)
    return DualCertificate(alpha=alpha, beta=beta, nu=float(np.linalg.norm(beta)))


def worst_case_expectation(z, spec: AmbiguitySpec) -> WorstCaseResult:
    """Exact maximizer of ``w @ z`` over the ambiguity set of ``spec``."""
    z = np.asarray(z, dtype=float).reshape(-1)
    wb = spec.center
    if z.shape != wb.shape:
        raise InvalidInputError(f"losses have length {z.size} but the center has length {wb.size}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("losses must be finite")
    return _solve(wb, z, spec.rho)


def _solve(wb, z, rho) -> WorstCaseResult:
    # unchecked core shared with the solvers' inner loops
    coef = math.sqrt(2.0 * rho)
    mean, s = _moments(wb, z)

    if rho == 0.0 or s == 0.0:
        return WorstCaseResult(mean, wb.copy(), True, _trivial_certificate(wb, z), info={"path": "nominal"})

    zmax = float(z.max())
    top = z == zmax
    W_top = float(wb[top].sum())
    if (1.0 - W_top) / (2.0 * W_top) <= rho:
        w = np.where(top, wb / W_top, 0.0)
        cert = DualCertificate(alpha=zmax, beta=np.zeros_like(wb), nu=0.0)
        return WorstCaseResult(zmax, w, False, cert, info={"path": "point-mass"})

    # fast path: full support
    if s >= 2.0 * rho:
        scale = math.sqrt(2.0 * rho / s)
        w = wb * (1.0 + scale * (z - mean))
        if np.all(w >= -COMPLEMENTARITY_TOL):
            w = np.clip(w, 0.0, None)
            mu = 1.0 / scale
            cert = _certificate(wb, z, mean, mu, coef)
            value = mean + coef * math.sqrt(s)
            return WorstCaseResult(value, w, True, cert, info={"path": "fast"})

    # active set: clamp the lowest tie-group until the stationary point is nonnegative
    levels = np.unique(z)  # ascending
    cap = 2 * z.size
    for it, cut in enumerate(levels):
        if it >= cap:
            break
        mask = z >= cut
        sol = _kkt_on_support(wb, z, mask, rho)
        if sol is None:
            break
        w, alpha, mu = sol
        if np.all(w[mask] >= -COMPLEMENTARITY_TOL * max(1.0, abs(alpha))):
            w = np.clip(w, 0.0, None)
            w /= w.sum()
            cert = _certificate(wb, z, alpha, mu, coef)
            return WorstCaseResult(float(w @ z), w, it == 0, cert, iterations=it + 1, info={"path": "active-set"})
    residual = float(min(np.min(w), 0.0)) if sol is not None else float("nan")
    raise NumericalError("active-set worst-case solve did not find a KKT point", residual=residual)


def worst_case_value(z, center, lam, convention="proof") -> float:
    return worst_case_expectation(z, AmbiguitySpec(lam, center, convention)).value


def sandwich_check(z, center, lam, convention="proof", tol=1e-9):
    """``(lower, value, upper)`` bracketing the worst case by mean/std expressions.

    Raises :class:`NumericalError` if the ordering fails by more than ``tol``;
    the lower bound is only guaranteed for losses in [0, 1].
    """
    spec = AmbiguitySpec(lam, center, convention)
    z = np.asarray(z, dtype=float).reshape(-1)
    mean, s = _moments(spec.center, z)
    r = spec.dual_coefficient
    sd = math.sqrt(s)
    lower = mean + max(r * sd - r * r, 0.0)
    upper = mean + r * sd
    value = worst_case_expectation(z, spec).value
    if not (lower - tol <= value <= upper + tol):
        raise NumericalError(
            f"sandwich ordering violated: {lower!r} <= {value!r} <= {upper!r}", residual=max(lower - value, value - upper)
        )
    return lower, value, upper


def dual_objective(z, center, lam, alpha, beta, nu, convention="proof", tol=1e-9) -> float:
    """Value of the conic dual at ``(alpha, beta, nu)``; raises if the point is infeasible."""
    spec = AmbiguitySpec(lam, center, convention)
    z = np.asarray(z, dtype=float).reshape(-1)
    beta = np.asarray(beta, dtype=float).reshape(-1)
    wb = spec.center
    if beta.shape != wb.shape or z.shape != wb.shape:
        raise InvalidInputError("z, center and beta must have equal length")
    sq = np.sqrt(wb)
    slack = alpha - z - beta / sq
    scale = max(1.0, abs(alpha), float(np.abs(z).max()))
    bad = np.flatnonzero(slack < -tol * scale)
    if bad.size:
        i = int(bad[0])
        raise ConstraintViolationError(
            f"dual constraint alpha >= z_i + beta_i / sqrt(w_i) fails at index {i} by {-slack[i]:.3e}",
            index=i,
        )
    if np.linalg.norm(beta) > nu + tol * max(1.0, nu):
        raise ConstraintViolationError(
            f"cone constraint ||beta|| <= nu fails ({np.linalg.norm(beta):.6g} > {nu:.6g})", index=-1
        )
    return float(alpha - sq @ beta + spec.dual_coefficient * nu)


def restrict_to_support(weights, *arrays, floor=0.0):
    """Drop samples whose weight is ``<= floor``; renormalizes the kept weights."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    keep = w > floor
    if not keep.any():
        raise InvalidInputError("no sample has positive weight")
    out = [w[keep] / w[keep].sum()]
    out.extend(np.asarray(a)[keep] for a in arrays)
    return tuple(out)


def worst_case_subgradient(loss, x, outcomes, center, lam, convention="proof"):
    """Danskin subgradient ``sum_i w*_i g_i`` of the worst-case loss at ``x``.

    ``loss`` is a :class:`~ctxopt.estimator.LossModel`.  Raw-unit losses are
    fine: the maximizer is invariant to positive affine rescaling of ``z``.
    Returns ``(subgradient, WorstCaseResult)``.
    """
    w, X = restrict_to_support(center, outcomes)
    z = loss.losses(x, X)
    res = worst_case_expectation(z, AmbiguitySpec(lam, w, convention))
    G = np.atleast_2d(np.asarray(loss.subgradient(x, X), dtype=float))
    return res.worst_weights @ G, res
