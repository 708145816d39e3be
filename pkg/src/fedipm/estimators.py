"""scikit-learn style wrappers around the sketches and the least-squares solver."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .centralpath import HyperParams
from .erm import erm_coefficients, erm_to_conic
from .fednet.protocol import run_federated
from .sketch import SketchKind, SketchSpec, make_sketch, sketch_specs
from .solver import Mode, solve

__all__ = ["SketchTransformer", "FederatedLeastSquares"]


class SketchTransformer(TransformerMixin, BaseEstimator):
    """Project feature vectors with a seeded ``b x d`` sketch ``R``.

    ``transform`` maps each row ``h`` to ``R h``; ``inverse_transform`` maps
    back with ``R^T``, so ``inverse_transform(transform(X))`` is the unbiased
    estimate ``R^T R h`` of every row.
    """

    def __init__(self, kind: str = "AMS", n_components: int = 16, seed: int = 0, sketch_id: int = 1):
        self.kind = kind
        self.n_components = n_components
        self.seed = seed
        self.sketch_id = sketch_id

    def fit(self, X, y=None):
        X = check_array(X)
        kind = SketchKind.parse(self.kind)
        d = X.shape[1]
        rows = d if kind is SketchKind.IDENTITY else int(self.n_components)
        self.spec_ = SketchSpec(kind, rows, d, int(self.seed), int(self.sketch_id))
        self.components_ = np.asarray(make_sketch(self.spec_))
        self.n_features_in_ = d
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.components_.T

    def inverse_transform(self, Z):
        check_is_fitted(self, "components_")
        Z = check_array(Z)
        return Z @ self.components_


class FederatedLeastSquares(RegressorMixin, BaseEstimator):
    """Least-squares regression solved by central-path following on the conic reduction.

    Coefficients are boxed to ``[-x_bound, x_bound]``. ``mode`` selects EXACT,
    SKETCHED (with ``b`` rows per sketch and ``seed``) or FEDERATED, in which
    the data rows are split over ``n_clients`` and the protocol is simulated.
    """

    def __init__(
        self,
        delta: float = 1e-2,
        x_bound: float = 10.0,
        fit_intercept: bool = True,
        mode: str = "EXACT",
        sketch: str = "AMS",
        b: int = 8,
        seed: int = 0,
        n_clients: int = 1,
        alpha: float = 1e-2,
        max_iter: int | None = None,
    ):
        self.delta = delta
        self.x_bound = x_bound
        self.fit_intercept = fit_intercept
        self.mode = mode
        self.sketch = sketch
        self.b = b
        self.seed = seed
        self.n_clients = n_clients
        self.alpha = alpha
        self.max_iter = max_iter

    def _design(self, X):
        if self.fit_intercept:
            return np.hstack([X, np.ones((X.shape[0], 1))])
        return X

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        design = self._design(X)
        problem = erm_to_conic("squared", design, -y, x_bound=self.x_bound, clients=self.n_clients)
        params = HyperParams.practical(len(problem.blocks) + 1, alpha=self.alpha)
        mode = Mode(str(self.mode).upper())
        specs = None
        if mode is not Mode.EXACT:
            specs = sketch_specs(self.sketch, self.b, problem.d, seed=self.seed)
        if mode is Mode.FEDERATED:
            result = run_federated(problem, self.delta, params, specs, max_iter=self.max_iter)
        else:
            result = solve(problem, self.delta, params, mode=mode, specs=specs, max_iter=self.max_iter)
        w = erm_coefficients(problem, result.x)
        if self.fit_intercept:
            self.coef_, self.intercept_ = w[:-1], float(w[-1])
        else:
            self.coef_, self.intercept_ = w, 0.0
        self.n_iter_ = result.rounds
        self.result_ = result
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_ + self.intercept_
