"""
scikit-learn style front end for the thresholding estimator.
"""

import logging
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import DEFAULT_BLOCK_SIZE, DEFAULT_ORDERING
from .newton_cg import SolverConfig
from .pipeline import estimate_precision
from .sparse_sym import SampleMatrix, SparsityPattern

log = logging.getLogger(__name__)


class ThresholdedGraphicalLasso(BaseEstimator):
    """
    Sparse precision matrix from soft-thresholded sample covariance and
    max-det completion.

    Parameters
    ----------
    alpha : float
        Off-diagonal penalty (the threshold).
    prior : SparsityPattern, optional
        Entries allowed to be nonzero; everything else is forced to zero.
    ordering, amalgamate, block_size : see ``estimate_precision``.
    newton_tol, max_newton : solver stopping rule.

    Attributes
    ----------
    precision_ : scipy.sparse.csc_matrix
    covariance_ : scipy.sparse.csc_matrix
        Thresholded covariance, which the estimate's inverse matches on its pattern.
    location_ : ndarray
    report_ : EstimateReport
    """

    def __init__(
        self,
        alpha: float = 0.1,
        prior: Optional[SparsityPattern] = None,
        ordering: str = DEFAULT_ORDERING,
        amalgamate: int = 0,
        block_size: int = DEFAULT_BLOCK_SIZE,
        newton_tol: float = 1e-7,
        max_newton: int = 50,
    ):
        self.alpha = alpha
        self.prior = prior
        self.ordering = ordering
        self.amalgamate = amalgamate
        self.block_size = block_size
        self.newton_tol = newton_tol
        self.max_newton = max_newton

    def fit(self, X, y=None):
        """Fit on an (n_samples, n_features) array."""
        X = check_array(X, ensure_min_samples=2)
        self.location_ = X.mean(axis=0)
        samples = SampleMatrix.from_observations(X)
        cfg = SolverConfig(newton_tol=self.newton_tol, max_newton=self.max_newton)
        result = estimate_precision(
            samples, self.alpha, self.prior, cfg, self.ordering, self.amalgamate, self.block_size
        )
        self.precision_ = result.X.to_scipy()
        self.covariance_ = result.C_H.to_scipy()
        self.logdet_ = result.newton.state.g - X.shape[1]
        self.report_ = result.report
        self.n_features_in_ = X.shape[1]
        return self

    def score(self, X, y=None) -> float:
        """Average Gaussian log-likelihood of X under the fitted precision."""
        check_is_fitted(self, "precision_")
        X = check_array(X)
        Z = X - self.location_
        quad = np.einsum("ij,ij->i", Z, (self.precision_ @ Z.T).T).mean()
        p = X.shape[1]
        return float(-0.5 * (quad - self.logdet_ + p * np.log(2.0 * np.pi)))
