"""scikit-learn style wrappers for the fitting and clustering steps."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .curvature import batch_spectra
from .witness import NULL_TOL, component_count, fit_implicit


class ImplicitPolynomialFitter(BaseEstimator):
    """Find the lowest-degree polynomial vanishing on the rows of X.

    After ``fit``: ``witness_`` (an ImplicitWitness), ``degree_`` and
    ``coef_`` (unit coefficients over the graded-lex basis in the scaled
    coordinates).  ``decision_function`` returns signed polynomial values in
    the original coordinates.
    """

    def __init__(self, d_max=4, null_tol=NULL_TOL, holdout_frac=0.2, random_state=0):
        self.d_max = d_max
        self.null_tol = null_tol
        self.holdout_frac = holdout_frac
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        w = fit_implicit(X, self.d_max, self.null_tol, self.holdout_frac, self.random_state)
        if w is None:
            raise ValueError(f"no vanishing polynomial of degree <= {self.d_max} passed validation")
        self.witness_ = w
        self.degree_ = w.degree
        self.coef_ = w.coeffs
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "witness_")
        X = check_array(X, dtype=float)
        return self.witness_.polynomial(self.witness_.transform(X))

    def score_samples(self, X):
        """Negative Sampson-normalized residual (higher means closer to the zero set)."""
        check_is_fitted(self, "witness_")
        return -self.witness_.sampson(check_array(X, dtype=float))


class RadiusComponents(ClusterMixin, BaseEstimator):
    """Connected components of the graph joining rows closer than ``link_radius``."""

    def __init__(self, link_radius=0.05):
        self.link_radius = link_radius

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        comp = component_count(X, self.link_radius)
        self.labels_ = comp.labels
        self.n_components_ = comp.count
        self.component_sizes_ = comp.sizes
        return self


class PrincipalCurvatures(TransformerMixin, BaseEstimator):
    """Map parameter points of a patch to their sorted principal curvatures."""

    def __init__(self, patch=None):
        self.patch = patch

    def fit(self, X=None, y=None):
        if self.patch is None:
            raise ValueError("PrincipalCurvatures needs a patch")
        self.n_features_in_ = self.patch.param_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.patch.param_dim:
            raise ValueError(f"expected {self.patch.param_dim} parameter columns")
        w, _, _, geo = batch_spectra(self.patch, X)
        return np.where(geo.valid[:, None], w, np.nan)
