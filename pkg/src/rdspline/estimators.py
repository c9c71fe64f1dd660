"""Scikit-learn style estimators wrapping the three density methods.

All three expose ``fit(X)`` / ``score_samples(X)`` / ``pdf(X)`` and compose with
the usual scikit-learn tooling through ``get_params`` / ``set_params``.  The
heavy lifting lives in the functional modules; these classes only validate
inputs, build grids, and hold the fitted state.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, DensityMixin

from . import baselines
from .density import DensityModel, pdf_at, pdf_grid, sensitivity_from_spec
from .grid import GridSpec, ScalarField, grid_from_bounds
from .solver import FitConfig, fit as solver_fit
from .validation import as_bounds, as_samples, broadcast_axis_param


def _build_grid(grid_shape, bounds, bc) -> GridSpec:
    d = len(grid_shape)
    bounds = as_bounds(bounds, d)
    bcs = broadcast_axis_param(bc, d, "bc")
    return grid_from_bounds(grid_shape, bounds, bcs)


class SplineDensity(BaseEstimator, DensityMixin):
    """Penalized maximum-likelihood density: exponential of a grid B-spline.

    Parameters
    ----------
    grid_shape : per-axis coefficient counts.
    bounds : per-axis (lo, hi) of the domain box (default unit box).
    bc : boundary condition name(s): "periodic", "zeropad" or "mirror".
    degree : B-spline degree in {0, 1, 3}.
    lam : weight of the Hessian nuclear-norm penalty (0 disables it).
    sensitivity : SensitivityMap, JSON-style dict, or None for uniform.
    p : Schatten order of the penalty (1, 2 or inf).
    """

    def __init__(self, grid_shape=(32, 32), bounds=None, bc="periodic", degree=1,
                 lam=0.5, sensitivity=None, quad_scale=4, max_iter=500, tol=1e-6,
                 p=1, prox_iters=25, prox_tol=1e-5, init_value=-1.0,
                 pin_mask=None, pin_value=-20.0, debug=False):
        self.grid_shape = grid_shape
        self.bounds = bounds
        self.bc = bc
        self.degree = degree
        self.lam = lam
        self.sensitivity = sensitivity
        self.quad_scale = quad_scale
        self.max_iter = max_iter
        self.tol = tol
        self.p = p
        self.prox_iters = prox_iters
        self.prox_tol = prox_tol
        self.init_value = init_value
        self.pin_mask = pin_mask
        self.pin_value = pin_value
        self.debug = debug

    def _config(self) -> FitConfig:
        return FitConfig(
            lam=self.lam, max_iter=self.max_iter, eps_tol=self.tol,
            degree=self.degree, quad_scale=self.quad_scale, p=self.p,
            prox_iters=self.prox_iters, prox_tol=self.prox_tol,
            init_value=self.init_value, pin_mask=self.pin_mask,
            pin_value=self.pin_value, debug=self.debug,
        )

    def fit(self, X, y=None):
        X = as_samples(X, d=len(self.grid_shape))
        self.grid_ = _build_grid(self.grid_shape, self.bounds, self.bc)
        self.sensitivity_ = sensitivity_from_spec(self.sensitivity)
        result = solver_fit(X, self.sensitivity_, self.grid_, self._config())
        self.result_ = result
        self.model_ = result.model
        self.coeffs_ = result.coeffs
        self.trace_ = result.trace
        self.converged_ = result.converged
        self.n_iter_ = result.n_iter
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")

    def pdf(self, X) -> np.ndarray:
        """Target-density estimate (Lebesgue-normalized)."""
        self._check_fitted()
        return pdf_at(self.model_, self.sensitivity_, as_samples(X, self.grid_.d))

    def observed_pdf(self, X) -> np.ndarray:
        """Detected-event density estimate ``rho * xi / E(rho)``."""
        self._check_fitted()
        return pdf_at(self.model_, self.sensitivity_, as_samples(X, self.grid_.d),
                      observed=True)

    def score_samples(self, X) -> np.ndarray:
        return np.log(self.pdf(X))

    def pdf_grid(self, scale: int = 1, observed: bool = False) -> ScalarField:
        """Density sampled on the fit grid refined by ``scale``."""
        self._check_fitted()
        return pdf_grid(self.model_, scale, xi=self.sensitivity_, observed=observed)


class WeightedKDE(BaseEstimator, DensityMixin):
    """Gaussian KDE with sensitivity weights ``1 / xi`` and Scott bandwidths."""

    def __init__(self, sensitivity=None, periods=None):
        self.sensitivity = sensitivity
        self.periods = periods

    def fit(self, X, y=None):
        X = as_samples(X)
        self.sensitivity_ = sensitivity_from_spec(self.sensitivity)
        periods = self.periods
        if periods is not None:
            periods = broadcast_axis_param(periods, X.shape[1], "periods")
        self.model_ = baselines.kde_fit(X, self.sensitivity_, periods)
        self.bandwidth_ = self.model_.bandwidth
        return self

    def pdf(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return baselines.kde_eval(self.model_, as_samples(X, self.model_.d))

    def score_samples(self, X) -> np.ndarray:
        return np.log(self.pdf(X))

    def pdf_grid(self, grid: GridSpec) -> ScalarField:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return baselines.kde_eval_grid(self.model_, grid)


class WeightedHistogram(BaseEstimator, DensityMixin):
    """Weighted histogram on the domain box with max(FD, Sturges) bin widths."""

    def __init__(self, grid_shape=(32, 32), bounds=None, bc="periodic", sensitivity=None):
        self.grid_shape = grid_shape
        self.bounds = bounds
        self.bc = bc
        self.sensitivity = sensitivity

    def fit(self, X, y=None):
        X = as_samples(X, d=len(self.grid_shape))
        self.grid_ = _build_grid(self.grid_shape, self.bounds, self.bc)
        self.sensitivity_ = sensitivity_from_spec(self.sensitivity)
        self.model_ = baselines.hist_fit(X, self.sensitivity_, self.grid_)
        return self

    def pdf(self, X) -> np.ndarray:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        return baselines.hist_eval(self.model_, as_samples(X, self.grid_.d))

    def score_samples(self, X) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(X))

    def pdf_grid(self, grid: GridSpec = None) -> ScalarField:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted")
        grid = grid if grid is not None else self.grid_
        vals = baselines.hist_eval(self.model_, grid.points_world()).reshape(grid.shape)
        return ScalarField(grid, vals)
