"""Feasible sets, projections and the outer minimizers used by the experiments."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .dro import AmbiguitySpec, _solve, restrict_to_support, worst_case_expectation
from .errors import InvalidInputError, NumericalError
from .estimator import LossModel

__all__ = [
    "Simplex",
    "Box",
    "HalfspacePolytope",
    "SolveReport",
    "project_simplex",
    "project_box",
    "project_polytope",
    "minimize_subgradient",
    "minimize_subgradient_restarted",
    "minimize_scalar_convex",
    "portfolio_loss",
    "newsvendor_loss",
    "wind_loss",
    "solve_rnw_linear",
    "solve_newsvendor_dro",
    "solve_wind_dro",
    "solve_wind_nominal",
    "solve_ldr_portfolio",
    "ldr_constraints",
]


# ---------------------------------------------------------------- projections


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_box(v, lower, upper) -> np.ndarray:
    return np.clip(np.asarray(v, dtype=float), lower, upper)


def project_polytope(v, A, b, max_iter: int = 20000, tol: float = 1e-12) -> np.ndarray:
    """Projection onto ``{x : A x <= b}`` by Dykstra's alternating projections."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).reshape(-1)
    x = np.asarray(v, dtype=float).reshape(-1).copy()
    if np.all(A @ x <= b):
        return x
    m = A.shape[0]
    norms2 = np.einsum("ij,ij->i", A, A)
    if np.any(norms2 == 0):
        raise InvalidInputError("halfspace normals must be nonzero")
    incr = np.zeros((m, x.size))
    for _ in range(max_iter):
        x_old = x.copy()
        for k in range(m):
            y = x + incr[k]
            viol = A[k] @ y - b[k]
            x = y - (viol / norms2[k]) * A[k] if viol > 0 else y
            incr[k] = y - x
        if np.max(np.abs(x - x_old)) <= tol * max(1.0, np.max(np.abs(x))):
            break
    return x


# ---------------------------------------------------------------- sets


class Simplex:
    def __init__(self, dim: int):
        if dim < 1:
            raise InvalidInputError("simplex dimension must be positive")
        self.dim = int(dim)

    @property
    def diameter(self) -> float:
        return math.sqrt(2.0) if self.dim > 1 else 0.0

    def project(self, v):
        return project_simplex(v)

    def contains(self, x, tol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)

    def vertices(self):
        return np.eye(self.dim)


class Box:
    def __init__(self, lower, upper):
        lo = np.asarray(lower, dtype=float).reshape(-1)
        hi = np.asarray(upper, dtype=float).reshape(-1)
        lo, hi = np.broadcast_arrays(lo, hi)
        if np.any(hi < lo):
            raise InvalidInputError("box needs lower <= upper")
        self.lower, self.upper = lo.copy(), hi.copy()
        self.dim = lo.size

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def project(self, v):
        return project_box(v, self.lower, self.upper)

    def contains(self, x, tol=1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))


class HalfspacePolytope:
    """``{x : A x <= b}``; must be bounded for the diameter to be finite."""

    def __init__(self, A, b, diameter: Optional[float] = None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        if self.A.shape[0] != self.b.size:
            raise InvalidInputError("A and b disagree on the number of halfspaces")
        self.dim = self.A.shape[1]
        self._diameter = diameter

    def project(self, v):
        return project_polytope(v, self.A, self.b)

    def contains(self, x, tol=1e-8) -> bool:
        return bool(np.all(self.A @ np.asarray(x, dtype=float) <= self.b + tol))

    def vertices(self):
        """Brute-force vertex enumeration; fine for a handful of halfspaces in low dimension."""
        d = self.dim
        verts = []
        for rows in itertools.combinations(range(self.A.shape[0]), d):
            sub = self.A[list(rows)]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            x = np.linalg.solve(sub, self.b[list(rows)])
            if self.contains(x, 1e-9):
                verts.append(x)
        return np.array(verts).reshape(-1, d)

    @property
    def diameter(self) -> float:
        if self._diameter is None:
            V = self.vertices()
            if V.shape[0] == 0:
                raise InvalidInputError("polytope is empty or unbounded")
            diff = V[:, None, :] - V[None, :, :]
            self._diameter = float(np.sqrt((diff ** 2).sum(-1)).max())
        return self._diameter


# ---------------------------------------------------------------- minimizers


@dataclass
class SolveReport:
    x: np.ndarray
    value: float
    iterations: int
    step: float
    converged: bool
    trace: list = field(default_factory=list)


def minimize_subgradient(
    oracle: Callable,
    feasible,
    x0,
    max_iter: int = 5000,
    step_scale: Optional[float] = None,
    tol: float = 1e-8,
    window: int = 100,
) -> SolveReport:
    """Projected subgradient descent with step ``c / sqrt(t)``.

    ``oracle(x)`` returns ``(value, subgradient)``.  By default
    ``c = D / ||g_1||``.  Stops early once the best value improved by less
    than ``tol * max(1, |best|)`` over the last ``window`` steps.  The trace
    holds the best-so-far value after each step.
    """
    x = feasible.project(np.asarray(x0, dtype=float))
    f, g = oracle(x)
    if not np.isfinite(f):
        raise NumericalError("objective is not finite at the starting point", trace=[f])
    best_x, best_f = x.copy(), float(f)
    trace = [best_f]
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return SolveReport(best_x, best_f, 0, 0.0, True, trace)
    c = step_scale if step_scale is not None else max(feasible.diameter, 1e-12) / gnorm
    step = c
    converged = False
    t = 0
    for t in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm == 0.0:
            converged = True
            break
        step = c / math.sqrt(t)
        x = feasible.project(x - step * g)
        f, g = oracle(x)
        if not np.isfinite(f):
            raise NumericalError(f"objective became non-finite at iteration {t}", trace=trace)
        if f < best_f:
            best_f, best_x = float(f), x.copy()
        trace.append(best_f)
        if t >= window and trace[-window - 1] - best_f < tol * max(1.0, abs(best_f)):
            converged = True
            break
    return SolveReport(best_x, best_f, t, step, converged, trace)


def minimize_subgradient_restarted(
    oracle: Callable,
    feasible,
    x0,
    max_iter: int = 5000,
    rounds: int = 20,
    shrink: float = 0.5,
    tol: float = 1e-10,
) -> SolveReport:
    """Projected subgradient in rounds, each restarted at the best point with a smaller step.

    The iteration budget is split evenly across ``rounds``; the step
    constant starts at ``D / ||g_1||`` and is multiplied by ``shrink`` after
    every round.  On sharp (e.g. polyhedral) objectives this converges far
    faster than a single ``c / sqrt(t)`` run.  Stops once two consecutive
    rounds improve the best value by less than ``tol * max(1, |best|)``.
    """
    x = feasible.project(np.asarray(x0, dtype=float))
    f, g = oracle(x)
    if not np.isfinite(f):
        raise NumericalError("objective is not finite at the starting point", trace=[f])
    gnorm = float(np.linalg.norm(g))
    if gnorm == 0.0:
        return SolveReport(x, float(f), 0, 0.0, True, [float(f)])
    c = max(feasible.diameter, 1e-12) / gnorm
    per = max(1, max_iter // rounds)
    best = SolveReport(x, float(f), 0, 0.0, False, [float(f)])
    total, stalls = 0, 0
    for _ in range(rounds):
        rep = minimize_subgradient(oracle, feasible, best.x, max_iter=per, step_scale=c, window=per + 1)
        total += rep.iterations
        gain = best.value - rep.value
        trace = best.trace + [min(v, best.value) for v in rep.trace[1:]]
        if rep.value < best.value:
            best = SolveReport(rep.x, rep.value, total, rep.step, False, trace)
        else:
            best = SolveReport(best.x, best.value, total, rep.step, False, trace)
        stalls = stalls + 1 if gain < tol * max(1.0, abs(best.value)) else 0
        if stalls >= 2:
            best.converged = True
            break
        c *= shrink
    return best


def minimize_scalar_convex(objective: Callable, a: float, b: float, tol: float = 1e-6):
    """Minimize a convex function of one variable on ``[a, b]``; returns ``(q, value)``.

    Uses bounded Brent search and then compares against both endpoints,
    since piecewise-linear objectives often attain their minimum at a bound.
    """
    if b < a:
        raise InvalidInputError("interval needs a <= b")
    if b - a <= tol:
        q = 0.5 * (a + b)
        return q, float(objective(q))
    res = minimize_scalar(objective, bounds=(a, b), method="bounded", options={"xatol": tol})
    cands = [(float(res.fun), float(res.x)), (float(objective(a)), a), (float(objective(b)), b)]
    val, q = min(cands, key=lambda c: (c[0], c[1]))
    return q, val


# ---------------------------------------------------------------- losses


def portfolio_loss() -> LossModel:
    """Negative portfolio return ``-xi @ x``."""

    def evaluate(x, xi):
        return -(np.atleast_2d(xi) @ x)

    def sub(x, xi):
        return -np.atleast_2d(xi)

    return LossModel(evaluate, sub)


def newsvendor_loss(backorder: float, holding: float) -> LossModel:
    """``holding (q - xi)_+ + backorder (xi - q)_+`` with right derivatives at kinks."""
    if backorder < 0 or holding < 0:
        raise InvalidInputError("cost rates must be nonnegative")

    def evaluate(q, xi):
        q = float(np.asarray(q).reshape(-1)[0])
        d = np.asarray(xi, dtype=float).reshape(-1)
        return holding * np.maximum(q - d, 0.0) + backorder * np.maximum(d - q, 0.0)

    def sub(q, xi):
        q = float(np.asarray(q).reshape(-1)[0])
        d = np.asarray(xi, dtype=float).reshape(-1)
        return np.where(q >= d, holding, -backorder)[:, None]

    return LossModel(evaluate, sub, lipschitz=max(backorder, holding))


def _split_wind(outcomes):
    Y = np.atleast_2d(np.asarray(outcomes, dtype=float))
    if Y.shape[1] % 2:
        raise InvalidInputError("wind outcomes must hold prices then productions")
    k = Y.shape[1] // 2
    return Y[:, :k], Y[:, k:]


def wind_loss() -> LossModel:
    """Commitment loss ``-x @ pi + 2 sum_j pi_j (x_j - xi_j)_+``; outcomes are ``[pi, xi]``."""

    def evaluate(x, outcomes):
        P, Xi = _split_wind(outcomes)
        return -(P @ x) + 2.0 * np.sum(P * np.maximum(x - Xi, 0.0), axis=1)

    def sub(x, outcomes):
        P, Xi = _split_wind(outcomes)
        return -P + 2.0 * P * (x >= Xi)

    return LossModel(evaluate, sub)


# ---------------------------------------------------------------- problems


def _weights(w, n):
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != n:
        raise InvalidInputError(f"weights have length {w.size}, data has {n} rows")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidInputError("weights must lie on the simplex")
    return w


def solve_rnw_linear(returns, w, lam: float, feasible=None, max_iter: int = 5000) -> SolveReport:
    """Minimize ``-E_w[xi] @ x + lam * sd_w(xi @ x)`` for a linear portfolio loss.

    The weighted mean and covariance are formed once, so each step costs
    O(d^2) regardless of the sample count.
    """
    R = np.atleast_2d(np.asarray(returns, dtype=float))
    w = _weights(w, R.shape[0])
    if lam < 0:
        raise InvalidInputError("lam must be nonnegative")
    d = R.shape[1]
    feasible = feasible if feasible is not None else Simplex(d)
    mean = w @ R
    C = R - mean
    S = (C * w[:, None]).T @ C

    if lam == 0.0 and isinstance(feasible, Simplex):
        x = np.zeros(d)
        x[int(np.argmax(mean))] = 1.0
        val = float(-mean @ x)
        return SolveReport(x, val, 0, 0.0, True, [val])

    def oracle(x):
        Sx = S @ x
        q = float(x @ Sx)
        sd = math.sqrt(q) if q > 0 else 0.0
        g = -mean + (lam * Sx / sd if sd > 1e-15 else 0.0)
        return -float(mean @ x) + lam * sd, g

    starts = [np.full(d, 1.0 / d)]
    if isinstance(feasible, Simplex):
        starts.extend(np.eye(d))
    best = None
    for x0 in starts:
        rep = minimize_subgradient(oracle, feasible, x0, max_iter=max_iter)
        if best is None or rep.value < best.value:
            best = rep
    return best


def solve_newsvendor_dro(demands, w, backorder: float, holding: float, lam: float, q_range=None, tol: float = 1e-6):
    """Order quantity minimizing the worst-case newsvendor cost."""
    d = np.asarray(demands, dtype=float).reshape(-1)
    w = _weights(w, d.size)
    w, d = restrict_to_support(w, d)
    loss = newsvendor_loss(backorder, holding)
    spec = AmbiguitySpec(lam, w)
    a, b = q_range if q_range is not None else (float(d.min()), float(d.max()))
    calls = [0]

    def objective(q):
        calls[0] += 1
        return worst_case_expectation(loss.losses(q, d), spec).value

    q, val = minimize_scalar_convex(objective, a, b, tol)
    return SolveReport(np.array([q]), val, calls[0], tol, True, [val])


def solve_wind_nominal(outcomes, w) -> np.ndarray:
    """Exact minimizer of the weighted commitment loss (no robustness).

    Per hour the cost is convex piecewise linear with breakpoints at the
    sampled productions, so the minimizer is the smallest production at
    which half the price-weighted mass has been reached.
    """
    P, Xi = _split_wind(outcomes)
    w = _weights(w, P.shape[0])
    x = np.zeros(P.shape[1])
    for j in range(P.shape[1]):
        mass = w * P[:, j]
        total = mass.sum()
        if total <= 0:
            continue
        order = np.argsort(Xi[:, j], kind="stable")
        cum = np.cumsum(mass[order])
        k = int(np.searchsorted(cum, 0.5 * total - 1e-12 * total))
        x[j] = Xi[order[min(k, order.size - 1)], j]
    return x


def solve_wind_dro(outcomes, w, lam: float, max_iter: int = 5000, upper=None) -> SolveReport:
    """Worst-case commitment over the box ``[0, max production]``.

    Starts from the exact nominal solution, which is also returned for
    ``lam == 0``.  The restarted subgradient run works on losses divided by
    a fixed scale so that the stopping tolerance is unit-free.
    """
    outcomes = np.atleast_2d(np.asarray(outcomes, dtype=float))
    w = _weights(w, outcomes.shape[0])
    w, outcomes = restrict_to_support(w, outcomes)
    P, Xi = _split_wind(outcomes)
    hi = np.asarray(upper, dtype=float) if upper is not None else Xi.max(axis=0)
    box = Box(np.zeros_like(hi), hi)
    loss = wind_loss()
    x0 = solve_wind_nominal(outcomes, w)
    if lam == 0.0:
        val = float(w @ loss.losses(x0, outcomes))
        return SolveReport(x0, val, 0, 0.0, True, [val])

    scale = max(float(np.max(P @ hi)), 1e-12)
    rho = AmbiguitySpec(lam, w).rho
    Ps, Xs = P / scale, Xi

    # same as worst_case_subgradient(loss, ...) but without per-call validation
    def oracle(x):
        over = x >= Xs
        z = -(Ps @ x) + 2.0 * np.sum(Ps * np.maximum(x - Xs, 0.0), axis=1)
        res = _solve(w, z, rho)
        G = Ps * np.where(over, 1.0, -1.0)
        return res.value, res.worst_weights @ G

    rounds = max(5, min(20, max_iter // 50))
    rep = minimize_subgradient_restarted(oracle, box, x0, max_iter=max_iter, rounds=rounds)
    rep.value = float(worst_case_expectation(loss.losses(rep.x, outcomes), AmbiguitySpec(lam, w)).value)
    rep.trace = [v * scale for v in rep.trace]
    return rep


def ldr_constraints(gammas):
    """The no-short-sale and budget halfspaces for decisions affine in a scalar covariate.

    Each constraint is affine in the covariate, so holding it at the smallest
    and largest observed value is equivalent to holding it at every sample.
    """
    g = np.asarray(gammas, dtype=float).reshape(-1)
    A, b = [], []
    for gv in sorted({float(g.min()), float(g.max())}):
        A += [[-1.0, 0.0, -gv], [0.0, -1.0, -gv], [1.0, 1.0, 2.0 * gv]]
        b += [0.0, 0.0, 1.0]
    return np.array(A), np.array(b)


def solve_ldr_portfolio(gammas, returns, lam_reg: float, max_iter: int = 5000):
    """Fit the affine rule ``(x1 + g y, x2 + g y, rest)`` by regularized empirical return.

    Returns ``(x1, x2, y, objective)`` where ``objective`` is the maximized
    regularized empirical return.
    """
    g = np.asarray(gammas, dtype=float).reshape(-1)
    R = np.atleast_2d(np.asarray(returns, dtype=float))
    if R.shape[0] != g.size:
        raise InvalidInputError("gammas and returns disagree on the sample count")
    if lam_reg < 0:
        raise InvalidInputError("lam_reg must be nonnegative")
    A, b = ldr_constraints(g)
    poly = HalfspacePolytope(A, b)
    lin = np.array([R[:, 0].mean(), R[:, 1].mean(), float(g @ (R[:, 0] + R[:, 1])) / g.size])

    def objective(theta):
        return float(lin @ theta - lam_reg * theta @ theta)

    if lam_reg > 0:
        # gradient step 1/L with L = 2 lam_reg lands on P(lin / (2 lam_reg)); iterate to a fixed point
        theta = np.zeros(3)
        for _ in range(max_iter):
            nxt = poly.project(theta + (lin - 2.0 * lam_reg * theta) / (2.0 * lam_reg))
            if np.max(np.abs(nxt - theta)) <= 1e-12:
                theta = nxt
                break
            theta = nxt
    else:
        # linear objective: the optimum sits at a vertex
        V = poly.vertices()
        theta = V[int(np.argmax(V @ lin))]
    x1, x2, y = (float(t) for t in theta)
    return x1, x2, y, objective(theta)
