"""Estimator-style wrappers around the weighting, reduction and decision routines.

``fit`` stores the training covariates and outcomes; ``predict`` returns one
decision per query covariate row.  A ``bandwidth`` of ``None`` means uniform
weights, i.e. the sample average approximation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .kernel import KernelSpec, nw_weights, uniform_weights
from .solvers import solve_ldr_portfolio, solve_newsvendor_dro, solve_rnw_linear, solve_wind_dro
from .subspace import fit_subspace, project, split_sample

__all__ = [
    "NadarayaWatsonWeights",
    "PCAReducer",
    "RNWPortfolio",
    "DRONewsvendor",
    "DROWindCommitment",
    "LDRPortfolio",
]


class NadarayaWatsonWeights(BaseEstimator):
    def __init__(self, kernel="exponential", bandwidth=1.0):
        self.kernel = kernel
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        self.X_ = check_array(X, ensure_2d=True)
        self.n_features_in_ = self.X_.shape[1]
        return self

    def weights(self, query) -> np.ndarray:
        """Weight vector for one query, or a matrix with one row per query row."""
        check_is_fitted(self, "X_")
        q = np.asarray(query, dtype=float)
        if q.ndim == 1:
            return self._one(q)
        return np.vstack([self._one(row) for row in check_array(q)])

    def transform(self, X):
        return self.weights(check_array(X))

    def _one(self, q):
        if self.bandwidth is None:
            return uniform_weights(self.X_.shape[0])
        spec = KernelSpec(self.kernel, float(self.bandwidth), self.n_features_in_)
        return nw_weights(spec, self.X_, q)


class PCAReducer(BaseEstimator, TransformerMixin):
    """Top principal directions of the covariates, optionally fit on a random part only.

    With ``split_fraction`` set, ``split_.fit_indices`` are the rows used for
    the covariance and ``split_.weight_indices`` the rows left for weighting.
    """

    def __init__(self, n_components=1, split_fraction=None, random_state=0):
        self.n_components = n_components
        self.split_fraction = split_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.split_ = None
        rows = X
        if self.split_fraction is not None:
            self.split_ = split_sample(X.shape[0], self.split_fraction, self.random_state)
            rows = X[self.split_.fit_indices]
        self.model_ = fit_subspace(rows, self.n_components)
        self.components_ = self.model_.basis
        self.eigenvalues_ = self.model_.eigenvalues
        self.mean_ = self.model_.mean
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return project(self.model_, check_array(X))


class _ContextualDecision(BaseEstimator):
    def fit(self, X, Y):
        self.X_ = check_array(X)
        self.Y_ = check_array(Y, ensure_2d=False)
        if self.Y_.ndim == 1:
            self.Y_ = self.Y_[:, None]
        if self.Y_.shape[0] != self.X_.shape[0]:
            raise ValueError(f"X has {self.X_.shape[0]} rows but Y has {self.Y_.shape[0]}")
        self.n_features_in_ = self.X_.shape[1]
        self.weighter_ = NadarayaWatsonWeights(self.kernel, self.bandwidth).fit(self.X_)
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = check_array(X)
        return np.vstack([self._decide(self.weighter_.weights(row)) for row in X])


class RNWPortfolio(_ContextualDecision):
    """Allocation maximizing weighted mean return minus ``lam`` times weighted std."""

    def __init__(self, kernel="exponential", bandwidth=1.0, lam=0.0):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.lam = lam

    def _decide(self, w):
        return solve_rnw_linear(self.Y_, w, self.lam).x


class DRONewsvendor(_ContextualDecision):
    def __init__(self, kernel="exponential", bandwidth=1.0, lam=0.0, backorder=10.0, holding=6.0):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.lam = lam
        self.backorder = backorder
        self.holding = holding

    def _decide(self, w):
        return solve_newsvendor_dro(self.Y_[:, 0], w, self.backorder, self.holding, self.lam).x


class DROWindCommitment(_ContextualDecision):
    """Hourly commitments; ``Y`` rows are ``[prices, productions]``."""

    def __init__(self, kernel="exponential", bandwidth=1.0, lam=0.0):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.lam = lam

    def _decide(self, w):
        return solve_wind_dro(self.Y_, w, self.lam).x


class LDRPortfolio(BaseEstimator):
    """Allocation affine in a scalar covariate, fit by ridge-penalized empirical return."""

    def __init__(self, lam_reg=0.1):
        self.lam_reg = lam_reg

    def fit(self, X, Y):
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError("the affine rule takes a single covariate")
        Y = check_array(Y)
        self.coef_ = np.array(solve_ldr_portfolio(X[:, 0], Y, self.lam_reg)[:3])
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        g = check_array(X)[:, 0]
        x1, x2, y = self.coef_
        a1, a2 = x1 + g * y, x2 + g * y
        return np.column_stack([a1, a2, 1.0 - a1 - a2])
