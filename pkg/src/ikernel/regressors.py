"""scikit-learn style wrappers around the kernel estimators.

``fit(X, Y)`` takes positions of shape (M, N, d) and observations of the same
shape; ``predict(X)`` returns the forward map of the fitted kernel.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_pair, check_particles
from .basis import make_basis
from .errors import ConfigurationError
from .estimator import assemble, choose_dimension, estimate
from .kernels import BasisExpansion
from .measure import AnalyticUniformPair
from .sim import forward


class _KernelRegressor(RegressorMixin, BaseEstimator):
    _kind = ""

    def __init__(self, basis="poly", n_basis=None, beta=1.0, gamma=1.0, measure=None,
                 interval=None):
        self.basis = basis
        self.n_basis = n_basis
        self.beta = beta
        self.gamma = gamma
        self.measure = measure
        self.interval = interval

    def _solver_params(self):
        return {}

    def _family(self, M):
        n = self.n_basis if self.n_basis is not None else choose_dimension(M, self.beta, self.gamma)
        if isinstance(self.basis, str):
            model = AnalyticUniformPair() if self.measure is None else self.measure
            return make_basis(self.basis, n, model, self.interval)
        if self.basis.n < n:
            raise ConfigurationError(f"basis has {self.basis.n} functions, need {n}")
        return self.basis.with_n(n) if self.basis.n != n else self.basis

    def fit(self, X, Y):
        X, Y = check_pair(X, Y)
        family = self._family(X.shape[0])
        self.system_ = assemble(X, family, Y=Y)
        result = estimate(self.system_, self._kind, **self._solver_params())
        self.result_ = result
        self.coef_ = result.coef
        self.gated_ = result.gated
        self.lambda_min_ = self.system_.lambda_min
        self.basis_ = family
        self.kernel_ = BasisExpansion(result.coef, family)
        return self

    def predict(self, X):
        check_is_fitted(self, "kernel_")
        return forward(self.kernel_, check_particles(X))

    def score(self, X, Y, sample_weight=None):
        """Coefficient of determination over all coordinates."""
        X, Y = check_pair(X, Y)
        resid = Y - self.predict(X)
        total = Y - Y.mean()
        denom = float(np.sum(total**2))
        return 1.0 - float(np.sum(resid**2)) / denom if denom > 0 else 0.0


class TamedLeastSquares(_KernelRegressor):
    """Least squares that returns the zero kernel when the normal matrix is
    too poorly conditioned (smallest eigenvalue at or below ``threshold``)."""

    _kind = "tlse"

    def __init__(self, basis="poly", n_basis=None, beta=1.0, gamma=1.0, measure=None,
                 interval=None, threshold=None):
        super().__init__(basis, n_basis, beta, gamma, measure, interval)
        self.threshold = threshold

    def _solver_params(self):
        return {"threshold": self.threshold}


class LeastSquares(_KernelRegressor):
    _kind = "lse"

    def __init__(self, basis="poly", n_basis=None, beta=1.0, gamma=1.0, measure=None,
                 interval=None, rank_tol=1e-10):
        super().__init__(basis, n_basis, beta, gamma, measure, interval)
        self.rank_tol = rank_tol

    def _solver_params(self):
        return {"rank_tol": self.rank_tol}


class Tikhonov(_KernelRegressor):
    _kind = "tikhonov"

    def __init__(self, basis="poly", n_basis=None, beta=1.0, gamma=1.0, measure=None,
                 interval=None, reg=1e-6):
        super().__init__(basis, n_basis, beta, gamma, measure, interval)
        self.reg = reg

    def _solver_params(self):
        return {"reg": self.reg}


class TruncatedSVD(_KernelRegressor):
    _kind = "tsvd"

    def __init__(self, basis="poly", n_basis=None, beta=1.0, gamma=1.0, measure=None,
                 interval=None, cut=1e-10):
        super().__init__(basis, n_basis, beta, gamma, measure, interval)
        self.cut = cut

    def _solver_params(self):
        return {"cut": self.cut}


REGRESSORS = {"tlse": TamedLeastSquares, "lse": LeastSquares, "tikhonov": Tikhonov,
              "tsvd": TruncatedSVD}
