"""Plug-in kriging: conditional-mean predictions and variances at target
locations given (estimated) model parameters.

The data covariance carries the nugget on its diagonal while cross- and
target-covariances do not, so the predictor targets the smooth surface
mu + S rather than the noisy observations. One Cholesky factorization is
shared across all targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from ._linalg import cholesky_lower
from .model import Dataset, ModelParams, build_cov_matrix, matern_cov, pairwise_distances


@dataclass
class KrigingOutput:
    targets: np.ndarray
    predictions: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        if not (len(self.targets) == self.predictions.size == self.variances.size):
            raise ValueError("mismatched kriging output lengths")


def krige(psi: ModelParams, data: Dataset, targets: np.ndarray) -> KrigingOutput:
    """Predict mu + S at ``targets``:

        pred = mu + c0' (Sigma + tau2 I)^-1 (y - mu)
        var  = sigma2 - c0' (Sigma + tau2 I)^-1 c0

    with c0 the nugget-free cross-covariance. Variances are clamped at
    zero to absorb roundoff.
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if not np.all(np.isfinite(targets)):
        raise ValueError("non-finite target locations")

    cov = build_cov_matrix(data.locations, psi.theta, psi.tau2)
    chol = cholesky_lower(cov, context="kriging system")
    cross = matern_cov(pairwise_distances(data.locations, targets), psi.theta)

    z = solve_triangular(chol, data.values - psi.mu, lower=True, check_finite=False)
    v = solve_triangular(chol, cross, lower=True, check_finite=False)
    predictions = psi.mu + v.T @ z
    variances = np.maximum(psi.theta.sigma2 - np.einsum("ij,ij->j", v, v), 0.0)
    return KrigingOutput(targets=targets, predictions=predictions, variances=variances)
