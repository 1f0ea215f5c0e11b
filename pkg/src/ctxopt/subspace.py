"""PCA subspace estimation with optional sample splitting.

The covariance basis is computed by cyclic Jacobi rotations so the routine has
no LAPACK dependency and returns a deterministic sign convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalError
from .kernel import KernelSpec, check_dataset, nw_weights

__all__ = [
    "SplitIndices",
    "SubspaceModel",
    "split_sample",
    "sample_covariance",
    "jacobi_eigh",
    "top_eigvecs",
    "fit_subspace",
    "project",
    "reduced_nw_weights",
]

MAX_SWEEPS = 100
OFFDIAG_TOL = 1e-12


@dataclass(frozen=True)
class SplitIndices:
    weight_indices: np.ndarray  # I1, used for NW weighting
    fit_indices: np.ndarray  # I2, used to estimate the subspace
    seed: int

    @property
    def n1(self) -> int:
        return int(self.weight_indices.size)

    @property
    def n2(self) -> int:
        return int(self.fit_indices.size)


@dataclass(frozen=True)
class SubspaceModel:
    basis: np.ndarray  # p' x p, orthonormal rows
    eigenvalues: np.ndarray  # all p eigenvalues, nonincreasing
    mean: np.ndarray

    @property
    def intrinsic_dim(self) -> int:
        return int(self.basis.shape[0])

    @property
    def gap(self) -> float:
        """Spectral gap between the p'-th and (p'+1)-th eigenvalues."""
        k = self.intrinsic_dim
        nxt = self.eigenvalues[k] if k < self.eigenvalues.size else -np.inf
        return float(self.eigenvalues[k - 1] - nxt)

    def explained_variance_ratio(self) -> float:
        total = self.eigenvalues.sum()
        if total <= 0:
            return 1.0
        return float(self.eigenvalues[: self.intrinsic_dim].sum() / total)


def split_sample(n: int, fraction: float, seed: int = 0) -> SplitIndices:
    """Random disjoint split with ``|I1| = round(fraction * n)``."""
    if n < 2:
        raise InvalidInputError("need at least two observations to split")
    if not 0.0 < fraction < 1.0:
        raise InvalidInputError("fraction must lie in (0, 1)")
    n1 = int(round(fraction * n))
    if n1 < 1 or n1 > n - 1:
        raise InvalidInputError(f"fraction {fraction} leaves an empty part for n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return SplitIndices(np.sort(perm[:n1]), np.sort(perm[n1:]), seed)


def sample_covariance(rows):
    """Covariance with 1/m normalization, and the row mean."""
    X = np.asarray(rows, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] == 0:
        raise InvalidInputError("sample_covariance needs at least one row")
    mean = X.mean(axis=0)
    C = X - mean
    S = C.T @ C / X.shape[0]
    return 0.5 * (S + S.T), mean


def _offdiag_norm(A):
    # summing only off-diagonal squares avoids cancellation against a large diagonal
    off = A - np.diag(np.diag(A))
    return float(np.sqrt(np.sum(off * off)))


def jacobi_eigh(A, max_sweeps: int = MAX_SWEEPS, tol: float = OFFDIAG_TOL):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(values, vectors)`` with eigenvectors in the columns, in the
    original (unsorted) diagonal order.  Convergence is declared once the
    off-diagonal Frobenius norm drops below ``tol * max(1, ||A||_F)``.
    """
    A = np.array(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidInputError("matrix must be square")
    p = A.shape[0]
    A = 0.5 * (A + A.T)
    V = np.eye(p)
    scale = max(1.0, float(np.linalg.norm(A)))
    for _ in range(max_sweeps):
        if _offdiag_norm(A) <= tol * scale:
            return np.diag(A).copy(), V
        for i in range(p - 1):
            for j in range(i + 1, p):
                aij = A[i, j]
                if abs(aij) <= 1e-300:
                    continue
                theta = (A[j, j] - A[i, i]) / (2.0 * aij)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ai = A[:, i].copy()
                aj = A[:, j].copy()
                A[:, i] = c * ai - s * aj
                A[:, j] = s * ai + c * aj
                ri = A[i, :].copy()
                rj = A[j, :].copy()
                A[i, :] = c * ri - s * rj
                A[j, :] = s * ri + c * rj
                A[i, j] = A[j, i] = 0.0
                vi = V[:, i].copy()
                V[:, i] = c * vi - s * V[:, j]
                V[:, j] = s * vi + c * V[:, j]
    resid = _offdiag_norm(A)
    if resid <= tol * scale:
        return np.diag(A).copy(), V
    raise NumericalError(f"Jacobi eigensolver did not converge (off-diagonal norm {resid:.3e})", residual=resid)


def top_eigvecs(cov, n_components: int) -> SubspaceModel:
    """Top eigenvectors as rows, largest-magnitude entry made positive."""
    cov = np.asarray(cov, dtype=float)
    p = cov.shape[0]
    if not 1 <= n_components <= p:
        raise InvalidInputError(f"n_components must be in [1, {p}]")
    if not np.allclose(cov, cov.T, atol=1e-10 * max(1.0, np.abs(cov).max())):
        raise InvalidInputError("covariance matrix must be symmetric")
    vals, vecs = jacobi_eigh(cov)
    # stable sort keeps ascending original index among ties
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    vals = np.where(vals < 0, np.where(vals >= -1e-10, 0.0, vals), vals)
    basis = vecs[:, :n_components].T.copy()
    lead = np.argmax(np.abs(basis), axis=1)
    signs = np.sign(basis[np.arange(n_components), lead])
    signs[signs == 0] = 1.0
    basis *= signs[:, None]
    return SubspaceModel(basis=basis, eigenvalues=vals, mean=np.zeros(p))


def fit_subspace(rows, n_components: int) -> SubspaceModel:
    cov, mean = sample_covariance(rows)
    model = top_eigvecs(cov, n_components)
    return SubspaceModel(basis=model.basis, eigenvalues=model.eigenvalues, mean=mean)


def project(model: SubspaceModel, gamma) -> np.ndarray:
    """``U (gamma - mean)``; accepts a single vector or a matrix of rows."""
    g = np.asarray(gamma, dtype=float)
    if g.shape[-1] != model.basis.shape[1]:
        raise InvalidInputError(f"expected vectors of length {model.basis.shape[1]}, got {g.shape[-1]}")
    return (g - model.mean) @ model.basis.T


def reduced_nw_weights(spec: KernelSpec, model: SubspaceModel, covariates, gamma) -> np.ndarray:
    """NW weights computed on projected covariates (rows should be the I1 part)."""
    G = check_dataset(covariates)
    if spec.dim != model.intrinsic_dim:
        raise InvalidInputError("kernel dimension must equal the subspace dimension")
    return nw_weights(spec, project(model, G), project(model, gamma))
