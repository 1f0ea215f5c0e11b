import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import minimize

from ctxopt.dro import AmbiguitySpec, worst_case_expectation, worst_case_value
from ctxopt.errors import InvalidInputError, NumericalError
from ctxopt.estimator import check_subgradient
from ctxopt.solvers import (
    Box,
    HalfspacePolytope,
    Simplex,
    ldr_constraints,
    minimize_scalar_convex,
    minimize_subgradient,
    minimize_subgradient_restarted,
    newsvendor_loss,
    portfolio_loss,
    project_polytope,
    project_simplex,
    solve_ldr_portfolio,
    solve_newsvendor_dro,
    solve_rnw_linear,
    solve_wind_dro,
    solve_wind_nominal,
    wind_loss,
)
from oracles import simplex_grid

vec = lambda d: arrays(float, (d,), elements=st.floats(-5, 5))  # noqa: E731


def qp_projection(v, A=None, b=None, simplex=False):
    """Euclidean projection by SLSQP, used as an oracle."""
    cons = []
    if simplex:
        cons.append({"type": "eq", "fun": lambda x: x.sum() - 1.0})
        bounds = [(0, None)] * v.size
    else:
        cons.append({"type": "ineq", "fun": lambda x: b - A @ x, "jac": lambda x: -A})
        bounds = None
    r = minimize(lambda x: 0.5 * np.sum((x - v) ** 2), np.zeros_like(v), jac=lambda x: x - v,
                 bounds=bounds, constraints=cons, method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
    return r.x


# ---------------------------------------------------------------- projections

def test_simplex_projection_examples():
    np.testing.assert_array_equal(project_simplex([0.2, 0.3, 0.5]), [0.2, 0.3, 0.5])
    np.testing.assert_array_equal(project_simplex([2.0, 0.0]), [1.0, 0.0])
    np.testing.assert_allclose(project_simplex([0.6, 0.6]), [0.5, 0.5])
    np.testing.assert_allclose(qp_projection(np.array([0.6, 0.6]), simplex=True), [0.5, 0.5], atol=1e-8)


@given(st.integers(1, 6).flatmap(vec))
def test_simplex_projection_matches_qp(v):
    p = project_simplex(v)
    assert np.all(p >= 0) and abs(p.sum() - 1) < 1e-12
    np.testing.assert_allclose(p, qp_projection(v, simplex=True), atol=1e-6)
    np.testing.assert_allclose(project_simplex(p), p, atol=1e-15)


@given(st.integers(1, 6).flatmap(lambda d: st.tuples(vec(d), vec(d))))
def test_projections_nonexpansive(pair):
    u, v = pair
    assert np.linalg.norm(project_simplex(u) - project_simplex(v)) <= np.linalg.norm(u - v) + 1e-12
    box = Box(-np.ones(u.size), np.ones(u.size))
    assert np.linalg.norm(box.project(u) - box.project(v)) <= np.linalg.norm(u - v) + 1e-12
    np.testing.assert_array_equal(box.project(box.project(u)), box.project(u))


def test_polytope_projection_examples():
    np.testing.assert_array_equal(project_polytope([0.5], [[1.0]], [1.0]), [0.5])
    np.testing.assert_allclose(project_polytope([2.0], [[1.0]], [1.0]), [1.0])
    # wedge x <= 1, y <= x; compare with a dense grid QP
    A, b = np.array([[1.0, 0.0], [-1.0, 1.0]]), np.array([1.0, 0.0])
    v = np.array([0.3, 2.0])
    p = project_polytope(v, A, b)
    xs = np.linspace(-1, 1.0, 2001)
    X, Y = np.meshgrid(xs, np.linspace(-1, 2, 3001))
    ok = (X <= 1) & (Y <= X)
    d = np.where(ok, (X - v[0]) ** 2 + (Y - v[1]) ** 2, np.inf)
    k = np.unravel_index(np.argmin(d), d.shape)
    assert np.linalg.norm(p - [X[k], Y[k]]) < 2e-3
    np.testing.assert_allclose(p, qp_projection(v, A, b), atol=1e-6)
    with pytest.raises(InvalidInputError):
        project_polytope([1.0, 1.0], [[0.0, 0.0]], [-1.0])


@given(arrays(float, (2,), elements=st.floats(-3, 3)), arrays(float, (4, 2), elements=st.floats(-1, 1)))
def test_polytope_projection_feasible_and_idempotent(v, A):
    A = A + np.array([[1, 0], [0, 1], [-1, 0], [0, -1]])  # keeps each normal away from zero
    b = np.ones(4)
    p = project_polytope(v, A, b)
    assert np.all(A @ p <= b + 1e-8)
    np.testing.assert_allclose(project_polytope(p, A, b), p, atol=1e-9)
    np.testing.assert_allclose(p, qp_projection(v, A, b), atol=1e-6)


def test_set_diameters():
    assert Simplex(3).diameter == pytest.approx(math.sqrt(2))
    assert Box([0, 0], [3, 4]).diameter == pytest.approx(5.0)
    square = HalfspacePolytope([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, 1])
    assert square.diameter == pytest.approx(2 * math.sqrt(2), rel=0.05)
    A, b = ldr_constraints(np.array([-1.0, 0.3, 1.0]))
    V = HalfspacePolytope(A, b).vertices()
    assert V.shape[0] >= 4
    with pytest.raises(InvalidInputError):
        Box([1.0], [0.0])
    with pytest.raises(InvalidInputError):
        HalfspacePolytope([[1.0, 0.0]], [1.0, 2.0])


# ---------------------------------------------------------------- minimizers

def test_subgradient_quadratic_on_box():
    rep = minimize_subgradient(lambda x: (float(x @ x), 2 * x), Box(-np.ones(3), 2 * np.ones(3)), [1.5, -0.7, 2.0])
    assert np.linalg.norm(rep.x) < 1e-4
    assert np.all(np.diff(rep.trace) <= 0)


@given(arrays(float, (4,), elements=st.floats(-3, 3)))
def test_subgradient_linear_on_simplex_finds_vertex(c):
    rep = minimize_subgradient(lambda x: (float(c @ x), c), Simplex(4), np.full(4, 0.25), max_iter=20000)
    assert rep.value <= float(c.min()) + 1e-4
    assert Simplex(4).contains(rep.x)
    assert rep.value <= float(c.mean()) + 1e-12


def test_restarted_subgradient_on_sharp_objective():
    c = np.array([0.3, -0.2, 0.7])
    oracle = lambda x: (float(np.abs(x - c).sum()), np.sign(x - c))  # noqa: E731
    rep = minimize_subgradient_restarted(oracle, Box(-np.ones(3), np.ones(3)), np.zeros(3))
    single = minimize_subgradient(oracle, Box(-np.ones(3), np.ones(3)), np.zeros(3), window=10 ** 9)
    assert rep.value < 1e-6 and rep.value <= single.value
    assert np.all(np.diff(rep.trace) <= 0)


def test_subgradient_aborts_with_trace_on_nan():
    def oracle(x):
        return (float("nan") if x[0] < 0.5 else float(x[0])), np.array([1.0])

    with pytest.raises(NumericalError) as exc:
        minimize_subgradient(oracle, Box([0.0], [1.0]), [1.0])
    assert exc.value.trace and exc.value.trace[0] == 1.0


def test_scalar_convex_examples():
    q, v = minimize_scalar_convex(lambda q: (q - 3) ** 2, 0, 10, tol=1e-6)
    assert abs(q - 3) < 1e-5 and v < 1e-9
    loss = newsvendor_loss(10.0, 6.0)
    d = np.array([40.0, 60.0])
    q, _ = minimize_scalar_convex(lambda q: float(np.mean(loss.losses(q, d))), 40, 60)
    assert q == pytest.approx(60.0, abs=1e-6)
    rng = np.random.default_rng(0)
    psi = 55.0
    demands = rng.uniform(psi - 10, psi + 10, 20000)
    q, _ = minimize_scalar_convex(lambda q: float(np.mean(loss.losses(q, demands))), demands.min(), demands.max())
    assert q == pytest.approx(psi - 10 + 20 * 10 / 16, abs=0.3)
    assert q == pytest.approx(np.quantile(demands, 0.625), abs=0.05)


# ---------------------------------------------------------------- losses

@given(st.integers(0, 10_000))
def test_losses_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        R = rng.normal(size=(1, 3))
        assert check_subgradient(portfolio_loss(), rng.dirichlet(np.ones(3)), R) < 1e-5
        d = rng.uniform(0, 100, size=1)
        q = d + rng.choice([-1, 1]) * rng.uniform(0.1, 10)
        assert check_subgradient(newsvendor_loss(10, 6), q, d, eps=1e-4) < 1e-5
        xi = rng.uniform(0, 10, 4)
        x = xi + rng.choice([-1, 1], 4) * rng.uniform(0.1, 1, 4)
        out = np.concatenate([rng.uniform(1, 5, 4), xi])[None, :]
        assert check_subgradient(wind_loss(), x, out, eps=1e-4) < 1e-5


def test_newsvendor_right_derivative_at_kink():
    assert newsvendor_loss(10, 6).subgradient(5.0, [5.0])[0, 0] == 6.0
    with pytest.raises(InvalidInputError):
        newsvendor_loss(-1, 6)


# ---------------------------------------------------------------- RNW

def rnw_grid_value(R, w, lam, step=0.005):
    G = simplex_grid(R.shape[1], step)
    P = G @ R.T
    mean = P @ w
    sd = np.sqrt(np.maximum(P ** 2 @ w - mean ** 2, 0))
    obj = -mean + lam * sd
    return float(obj.min())


def test_rnw_lambda_zero_takes_best_asset_first_index():
    R = np.array([[1.0, 2.0, 2.0], [3.0, 2.0, 2.0]])
    rep = solve_rnw_linear(R, [0.5, 0.5], 0.0)
    np.testing.assert_array_equal(rep.x, [1.0, 0.0, 0.0])
    rep = solve_rnw_linear(R, [0.9, 0.1], 0.0)
    np.testing.assert_array_equal(rep.x, [0.0, 1.0, 0.0])


@given(st.integers(0, 10_000), st.sampled_from([0.1, 0.5, 1.0, 3.0]))
def test_rnw_matches_grid(seed, lam):
    rng = np.random.default_rng(seed)
    R = rng.normal(0.1, 0.3, size=(8, 3))
    w = rng.dirichlet(np.ones(8))
    rep = solve_rnw_linear(R, w, lam)
    assert Simplex(3).contains(rep.x)
    assert rep.value <= rnw_grid_value(R, w, lam) + 1e-3


def test_rnw_anticorrelated_equal_split():
    eps = np.random.default_rng(1).normal(size=50)
    R = np.column_stack([0.2 + eps, 0.2 - eps, np.zeros(50)])
    rep = solve_rnw_linear(R, np.full(50, 0.02), 0.5)
    np.testing.assert_allclose(rep.x, [0.5, 0.5, 0.0], atol=1e-2)


def test_rnw_std_nonincreasing_in_lambda():
    rng = np.random.default_rng(4)
    R = rng.normal([0.3, 0.2, 0.05], [0.5, 0.2, 0.01], size=(40, 3))
    w = rng.dirichlet(np.ones(40))
    sds = []
    for lam in (0.0, 0.1, 0.3, 1.0, 3.0, 10.0):
        x = solve_rnw_linear(R, w, lam).x
        p = R @ x
        sds.append(math.sqrt(max(w @ p ** 2 - (w @ p) ** 2, 0)))
    assert np.all(np.diff(sds) <= 1e-4)


def test_rnw_against_conic_solver():
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(9)
    R = rng.normal(0.1, 0.4, size=(12, 4))
    w = rng.dirichlet(np.ones(12))
    lam = 0.7
    mean = w @ R
    L = np.sqrt(w)[:, None] * (R - mean)
    x = cp.Variable(4)
    prob = cp.Problem(cp.Minimize(-mean @ x + lam * cp.norm(L @ x)), [x >= 0, cp.sum(x) == 1])
    prob.solve()
    assert solve_rnw_linear(R, w, lam).value == pytest.approx(prob.value, abs=1e-4)


def test_rnw_rejects_bad_weights():
    with pytest.raises(InvalidInputError):
        solve_rnw_linear(np.ones((2, 2)), [0.7, 0.7], 0.1)
    with pytest.raises(InvalidInputError):
        solve_rnw_linear(np.ones((2, 2)), [0.5, 0.5], -1.0)


# ---------------------------------------------------------------- newsvendor

def test_newsvendor_examples():
    assert solve_newsvendor_dro([47.0], [1.0], 10, 6, 0.0).x[0] == 47.0
    rep = solve_newsvendor_dro([40.0, 60.0], [0.5, 0.5], 10, 6, 0.0)
    assert rep.x[0] == pytest.approx(60.0, abs=1e-6)


@pytest.mark.parametrize("lam", [0.5, 1.0, 5.0])
def test_newsvendor_two_point_matches_grid(lam):
    d, w = np.array([40.0, 60.0]), np.array([0.5, 0.5])
    loss = newsvendor_loss(10, 6)
    qs = np.linspace(40, 60, 20001)
    vals = [worst_case_value(loss.losses(q, d), w, lam) for q in qs]
    rep = solve_newsvendor_dro(d, w, 10, 6, lam)
    # q is located to 1e-6, so the value carries up to slope * 1e-6
    assert rep.value <= min(vals) + 1e-4
    assert rep.x[0] == pytest.approx(qs[int(np.argmin(vals))], abs=2e-3)


def test_newsvendor_large_lambda_minimizes_max_loss():
    d, w = np.array([40.0, 60.0]), np.array([0.5, 0.5])
    rep = solve_newsvendor_dro(d, w, 10, 6, 50.0)
    # max(6(q-40), 10(60-q)) is smallest where the two costs meet
    assert rep.x[0] == pytest.approx(40 + 200 / 16, abs=1e-4)


@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.1, 1.0]))
def test_dro_objective_dominates_nominal(seed, lam):
    rng = np.random.default_rng(seed)
    d = rng.uniform(40, 60, 10)
    w = rng.dirichlet(np.ones(10))
    rep = solve_newsvendor_dro(d, w, 10, 6, lam)
    nominal = float(w @ newsvendor_loss(10, 6).losses(rep.x, d))
    assert rep.value >= nominal - 1e-9


# ---------------------------------------------------------------- wind

def wind_outcomes(P, X):
    return np.hstack([np.atleast_2d(P), np.atleast_2d(X)])


def test_wind_zero_commitment_is_free():
    out = wind_outcomes([[3.0, 4.0]], [[1.0, 2.0]])
    assert wind_loss().losses(np.zeros(2), out)[0] == 0.0


def test_wind_single_sample_commits_production():
    out = wind_outcomes([[3.0, 4.0, 5.0]], [[10.0, 0.0, 7.0]])
    rep = solve_wind_dro(out, [1.0], 0.0)
    np.testing.assert_allclose(rep.x, [10.0, 0.0, 7.0])
    assert rep.value == pytest.approx(-(30 + 35))


@given(st.integers(0, 10_000))
def test_wind_two_samples_coordinatewise(seed):
    rng = np.random.default_rng(seed)
    P = rng.uniform(1, 5, size=(2, 4))
    X = rng.uniform(0, 10, size=(2, 4))
    w = rng.dirichlet([1, 1])
    x = solve_wind_nominal(wind_outcomes(P, X), w)
    for j in range(4):
        cands = np.sort(X[:, j])
        costs = [np.sum(w * (-P[:, j] * c + 2 * P[:, j] * np.maximum(c - X[:, j], 0))) for c in cands]
        assert np.min(costs) == pytest.approx(
            np.sum(w * (-P[:, j] * x[j] + 2 * P[:, j] * np.maximum(x[j] - X[:, j], 0))), abs=1e-12
        )


def conic_wind(P, X, w, lam):
    """Worst-case commitment problem as one SOCP through its conic dual."""
    cp = pytest.importorskip("cvxpy")
    n, k = P.shape
    x, alpha, beta, nu = cp.Variable(k), cp.Variable(), cp.Variable(n), cp.Variable()
    sq = np.sqrt(w)
    cons = [x >= 0, x <= X.max(axis=0), cp.norm(beta) <= nu]
    for i in range(n):
        li = -P[i] @ x + 2 * P[i] @ cp.pos(x - X[i])
        cons.append(alpha >= li + beta[i] / sq[i])
    prob = cp.Problem(cp.Minimize(alpha - sq @ beta + AmbiguitySpec(lam, w).dual_coefficient * nu), cons)
    prob.solve()
    return prob.value


@pytest.mark.parametrize("lam", [0.1, 0.5, 2.0])
def test_wind_dro_against_conic_solver(lam):
    rng = np.random.default_rng(11)
    P = rng.uniform(20, 40, size=(6, 3))
    X = rng.uniform(0, 100, size=(6, 3))
    w = rng.dirichlet(np.ones(6) * 3)
    rep = solve_wind_dro(wind_outcomes(P, X), w, lam)
    ref = conic_wind(P, X, w, lam)
    assert rep.value == pytest.approx(ref, abs=1e-5 * abs(ref))
    assert np.all(rep.x >= 0) and np.all(rep.x <= X.max(axis=0) + 1e-12)
    nominal = float(w @ wind_loss().losses(rep.x, wind_outcomes(P, X)))
    assert rep.value >= nominal - 1e-9
    assert rep.trace[-1] <= rep.trace[0] + 1e-9


# ---------------------------------------------------------------- LDR

def ldr_grid_oracle(g, R, lam, num=81):
    A, b = ldr_constraints(g)
    V = HalfspacePolytope(A, b).vertices()
    lo, hi = V.min(axis=0), V.max(axis=0)
    axes = [np.linspace(lo[i], hi[i], num) for i in range(3)]
    T = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    T = T[np.all(T @ A.T <= b + 1e-12, axis=1)]
    lin = np.array([R[:, 0].mean(), R[:, 1].mean(), g @ (R[:, 0] + R[:, 1]) / g.size])
    return float(np.max(T @ lin - lam * np.sum(T * T, axis=1)))


def test_ldr_zero_returns():
    x1, x2, y, obj = solve_ldr_portfolio(np.linspace(-1, 1, 5), np.zeros((5, 3)), 0.3)
    assert (x1, x2, y) == (0.0, 0.0, 0.0) and obj == 0.0


def test_ldr_constant_returns_full_allocation():
    g = np.linspace(-1, 1, 11)
    R = np.tile([1.0, 1.0, 0.0], (11, 1))
    x1, x2, y, obj = solve_ldr_portfolio(g, R, 0.01)
    assert x1 + x2 == pytest.approx(1.0, abs=1e-6)
    assert abs(y) < 1e-6
    assert obj >= ldr_grid_oracle(g, R, 0.01) - 1e-9


@given(st.integers(0, 10_000), st.integers(2, 20), st.sampled_from([0.0, 0.01, 0.1, 1.0]))
def test_ldr_matches_grid_oracle(seed, n, lam):
    rng = np.random.default_rng(seed)
    g = rng.uniform(-1, 1, n)
    R = np.column_stack([rng.normal(0.2, 0.5, n), rng.normal(0.1, 0.5, n), np.zeros(n)])
    x1, x2, y, obj = solve_ldr_portfolio(g, R, lam)
    A, b = ldr_constraints(g)
    assert np.all(A @ [x1, x2, y] <= b + 1e-8)
    for gv in g:
        assert x1 + gv * y >= -1e-8 and x2 + gv * y >= -1e-8 and x1 + x2 + 2 * gv * y <= 1 + 1e-8
    # the grid only holds feasible points, so it can never beat the solver by more than the tolerance
    assert obj >= ldr_grid_oracle(g, R, lam) - 1e-2


@pytest.mark.parametrize("lam", [0.0, 0.05, 0.5])
def test_ldr_against_conic_solver(lam):
    cp = pytest.importorskip("cvxpy")
    rng = np.random.default_rng(21)
    g = rng.uniform(-1, 1, 15)
    R = np.column_stack([0.5 - g ** 2 + 0.1 * rng.normal(size=15), 0.5 - g ** 2 - 0.1 * rng.normal(size=15), np.zeros(15)])
    x1, x2, y, obj = solve_ldr_portfolio(g, R, lam)
    A, b = ldr_constraints(g)
    lin = np.array([R[:, 0].mean(), R[:, 1].mean(), g @ (R[:, 0] + R[:, 1]) / g.size])
    t = cp.Variable(3)
    prob = cp.Problem(cp.Maximize(lin @ t - lam * cp.sum_squares(t)), [A @ t <= b])
    prob.solve()
    assert obj == pytest.approx(prob.value, abs=1e-6)


def test_ldr_input_errors():
    with pytest.raises(InvalidInputError):
        solve_ldr_portfolio([0.0, 1.0], np.zeros((3, 3)), 0.1)
    with pytest.raises(InvalidInputError):
        solve_ldr_portfolio([0.0, 1.0], np.zeros((2, 3)), -0.1)
