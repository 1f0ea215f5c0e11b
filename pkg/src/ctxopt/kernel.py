"""Kernel evaluation and Nadaraya-Watson weights.

The exponential kernel is ``K(theta) = exp(-||theta||_2) / Z``.  The Gaussian
variant uses ``exp(-||theta||_2**2)``.  Nadaraya-Watson weights only need the
unnormalized shape because ``Z`` cancels in the ratio.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DegenerateWeightsError, InvalidInputError

__all__ = [
    "KernelFamily",
    "KernelSpec",
    "eval_kernel",
    "log_kernel",
    "kernel_normalizer",
    "kernel_l2_integral",
    "nw_weights",
    "normalize_log_weights",
    "uniform_weights",
    "check_dataset",
]


class KernelFamily(str, enum.Enum):
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"


@dataclass(frozen=True)
class KernelSpec:
    family: KernelFamily = KernelFamily.EXPONENTIAL
    bandwidth: float = 1.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise InvalidInputError(f"bandwidth must be positive and finite, got {self.bandwidth}")
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError(f"dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "dim", int(self.dim))

    def with_bandwidth(self, bandwidth: float) -> "KernelSpec":
        return KernelSpec(self.family, bandwidth, self.dim)


def _as_finite(a, name):
    arr = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return arr


def log_kernel(spec: KernelSpec, theta) -> np.ndarray:
    """Log of the unnormalized kernel shape, row-wise over the last axis."""
    theta = np.asarray(theta, dtype=float)
    if spec.family is KernelFamily.EXPONENTIAL:
        return -np.linalg.norm(theta, axis=-1)
    return -np.sum(theta * theta, axis=-1)


def eval_kernel(spec: KernelSpec, theta) -> float:
    """Unnormalized kernel value at a single length-``dim`` vector."""
    theta = _as_finite(theta, "theta").reshape(-1)
    if theta.shape[0] != spec.dim:
        raise InvalidInputError(f"theta has length {theta.shape[0]}, expected {spec.dim}")
    return float(np.exp(log_kernel(spec, theta)))


def _unit_sphere_log_area(p):
    return math.log(2.0) + 0.5 * p * math.log(math.pi) - gammaln(0.5 * p)


def kernel_normalizer(spec: KernelSpec) -> float:
    """``Z = int exp(-||theta||) dtheta`` over R^p, equal to ``S_{p-1} * Gamma(p)``."""
    if spec.family is not KernelFamily.EXPONENTIAL:
        raise NotImplementedError("normalizer is only provided for the exponential kernel")
    p = spec.dim
    return float(math.exp(_unit_sphere_log_area(p) + gammaln(p)))


def kernel_l2_integral(spec: KernelSpec) -> float:
    """Integral of the squared normalized unit-bandwidth kernel, ``1 / (2**p Z)``."""
    z = kernel_normalizer(spec)
    return float(1.0 / (2.0 ** spec.dim * z))


def normalize_log_weights(logk) -> np.ndarray:
    """Turn log kernel values into simplex weights by max-shifted exponentiation."""
    logk = np.asarray(logk, dtype=float)
    finite = np.isfinite(logk)
    if not finite.any():
        raise DegenerateWeightsError("all kernel values vanished")
    shifted = np.where(finite, logk - logk[finite].max(), -np.inf)
    k = np.exp(shifted)
    return k / k.sum()


def uniform_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def check_dataset(covariates, outcomes=None):
    """Validate a covariate matrix and optional outcome matrix; returns 2-D float arrays."""
    G = _as_finite(covariates, "covariates")
    if G.ndim == 1:
        G = G[:, None]
    if G.ndim != 2 or G.shape[0] < 1:
        raise InvalidInputError("covariates must be a non-empty n x p matrix")
    if outcomes is None:
        return G
    X = _as_finite(outcomes, "outcomes")
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != G.shape[0]:
        raise InvalidInputError(
            f"covariates have {G.shape[0]} rows but outcomes have {X.shape[0]}"
        )
    return G, X


def nw_weights(spec: KernelSpec, covariates, gamma) -> np.ndarray:
    """Nadaraya-Watson weights of each row of ``covariates`` for the query ``gamma``.

    Raises :class:`DegenerateWeightsError` when no kernel value survives even in
    log space (e.g. scaled distances overflow).
    """
    G = check_dataset(covariates)
    g = _as_finite(gamma, "gamma").reshape(-1)
    if G.shape[1] != spec.dim or g.shape[0] != spec.dim:
        raise InvalidInputError(
            f"dimension mismatch: kernel dim {spec.dim}, covariates {G.shape[1]}, query {g.shape[0]}"
        )
    with np.errstate(over="ignore", invalid="ignore"):
        diff = (g[None, :] - G) / spec.bandwidth
        logk = log_kernel(spec, diff)
    try:
        return normalize_log_weights(logk)
    except DegenerateWeightsError:
        dist = float(np.max(np.linalg.norm(g[None, :] - G, axis=1)))
        raise DegenerateWeightsError(
            f"kernel values underflow for every sample (max distance {dist:.6g}, h={spec.bandwidth:.6g})",
            max_distance=dist,
        ) from None
