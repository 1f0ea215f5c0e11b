import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from ctxopt.bench.data import gen_newsvendor, gen_portfolio, gen_wind_synthetic, make_rng, wind_dataset
from ctxopt.kernel import KernelSpec, nw_weights
from ctxopt.models import DRONewsvendor, DROWindCommitment, LDRPortfolio, NadarayaWatsonWeights, PCAReducer, RNWPortfolio
from ctxopt.solvers import solve_ldr_portfolio, solve_newsvendor_dro, solve_rnw_linear


def test_weights_match_function():
    G = make_rng(0).normal(size=(8, 2))
    est = NadarayaWatsonWeights(bandwidth=0.7).fit(G)
    np.testing.assert_array_equal(est.weights(G[0]), nw_weights(KernelSpec(bandwidth=0.7, dim=2), G, G[0]))
    W = est.transform(G[:3])
    assert W.shape == (3, 8)
    np.testing.assert_allclose(W.sum(axis=1), 1.0)
    np.testing.assert_array_equal(NadarayaWatsonWeights(bandwidth=None).fit(G).weights(G[0]), np.full(8, 1 / 8))


def test_unfitted_raises():
    with pytest.raises(NotFittedError):
        NadarayaWatsonWeights().weights([0.0])
    with pytest.raises(NotFittedError):
        RNWPortfolio().predict([[0.0]])
    with pytest.raises(NotFittedError):
        LDRPortfolio().predict([[0.0]])


def test_params_and_clone():
    m = DRONewsvendor(bandwidth=0.5, lam=0.2, backorder=4.0)
    c = clone(m)
    assert c.get_params() == m.get_params()
    c.set_params(lam=1.0)
    assert m.lam == 0.2 and c.lam == 1.0


def test_pca_reducer():
    rng = make_rng(1)
    u = np.array([3.0, 4.0, 0.0]) / 5
    G = np.outer(rng.normal(size=200), u) + 0.01 * rng.normal(size=(200, 3))
    red = PCAReducer(n_components=1).fit(G)
    assert abs(abs(red.components_[0] @ u) - 1) < 1e-3
    assert red.transform(G).shape == (200, 1)
    split = PCAReducer(n_components=1, split_fraction=0.5, random_state=3).fit(G)
    assert split.split_.n1 == 100 and split.split_.n2 == 100
    assert split.eigenvalues_[0] > split.eigenvalues_[1]


def test_pipeline_passes_reduced_covariates():
    G = make_rng(2).normal(size=(30, 4))
    pipe = make_pipeline(PCAReducer(n_components=2), NadarayaWatsonWeights(bandwidth=1.0)).fit(G)
    assert pipe.transform(G[:2]).shape == (2, 30)


def test_rnw_portfolio_matches_solver():
    ds = gen_portfolio(80, make_rng(3))
    m = RNWPortfolio(bandwidth=0.3, lam=0.5).fit(ds.covariates, ds.outcomes)
    X = m.predict([[0.0], [0.5]])
    assert X.shape == (2, 3)
    w = nw_weights(KernelSpec(bandwidth=0.3), ds.covariates, [0.0])
    np.testing.assert_allclose(X[0], solve_rnw_linear(ds.outcomes, w, 0.5).x)


def test_newsvendor_model_matches_solver():
    ds = gen_newsvendor(40, make_rng(4))
    m = DRONewsvendor(bandwidth=1.0, lam=0.3).fit(ds.covariates, ds.outcomes[:, 0])
    q = m.predict([[4.5, 5.0]])
    w = nw_weights(KernelSpec(bandwidth=1.0, dim=2), ds.covariates, [4.5, 5.0])
    assert q[0, 0] == pytest.approx(solve_newsvendor_dro(ds.outcomes[:, 0], w, 10, 6, 0.3).x[0])
    with pytest.raises(ValueError):
        DRONewsvendor().fit(ds.covariates, ds.outcomes[:5])


def test_wind_model_shapes():
    ds = wind_dataset(*gen_wind_synthetic(8, make_rng(5)))
    x = DROWindCommitment(bandwidth=5000.0, lam=0.2).fit(ds.covariates, ds.outcomes).predict(ds.covariates[:1])
    assert x.shape == (1, 24) and np.all(x >= 0)


def test_ldr_model():
    ds = gen_portfolio(60, make_rng(6))
    m = LDRPortfolio(lam_reg=0.1).fit(ds.covariates, ds.outcomes)
    np.testing.assert_allclose(m.coef_, solve_ldr_portfolio(ds.covariates[:, 0], ds.outcomes, 0.1)[:3])
    A = m.predict(np.linspace(-1, 1, 9)[:, None])
    np.testing.assert_allclose(A.sum(axis=1), 1.0)
    assert np.all(A >= -1e-8)
    with pytest.raises(ValueError):
        LDRPortfolio().fit(np.zeros((4, 2)), np.zeros((4, 3)))
