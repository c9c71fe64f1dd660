"""Sensitivity-weighted density estimation with regularized log-density splines."""

from .grid import (
    BoundaryCondition,
    GridSpec,
    ScalarField,
    fine_grid,
    grid_from_bounds,
    separable_convolve,
    separable_convolve_adjoint,
    upsample_zeros,
)
from .bsplines import (
    FilterBank,
    bspline_eval,
    eval_spline_grid,
    eval_spline_points,
    make_filter,
)
from .density import (
    DensityModel,
    GriddedSensitivity,
    SensitivityMap,
    SinSquaredSensitivity,
    UniformSensitivity,
    expectation,
    log_density_grid,
    pdf_at,
    pdf_grid,
    sensitivity_from_spec,
    weighted_basis_moments,
)
from .likelihood import (
    BandedHessianPart,
    DataSums,
    accumulate_data_sums,
    gradient,
    hessian_parts,
    neg_log_likelihood,
)
from .regularizer import (
    HessianField,
    hessian_adjoint,
    hessian_field,
    hessian_norm_map,
    project_dual_ball,
    prox,
    regularizer_value,
    schatten_norm,
)
from .solver import FitConfig, FitResult, FitTrace, fit, lipschitz_bound, objective
from .estimators import SplineDensity, WeightedHistogram, WeightedKDE

__version__ = "0.1.0"

__all__ = [
    "BandedHessianPart",
    "BoundaryCondition",
    "DataSums",
    "DensityModel",
    "FilterBank",
    "FitConfig",
    "FitResult",
    "FitTrace",
    "GriddedSensitivity",
    "GridSpec",
    "HessianField",
    "ScalarField",
    "SensitivityMap",
    "SinSquaredSensitivity",
    "SplineDensity",
    "UniformSensitivity",
    "WeightedHistogram",
    "WeightedKDE",
    "accumulate_data_sums",
    "bspline_eval",
    "eval_spline_grid",
    "eval_spline_points",
    "expectation",
    "fine_grid",
    "fit",
    "gradient",
    "grid_from_bounds",
    "hessian_adjoint",
    "hessian_field",
    "hessian_norm_map",
    "hessian_parts",
    "lipschitz_bound",
    "log_density_grid",
    "make_filter",
    "neg_log_likelihood",
    "objective",
    "pdf_at",
    "pdf_grid",
    "project_dual_ball",
    "prox",
    "regularizer_value",
    "schatten_norm",
    "sensitivity_from_spec",
    "separable_convolve",
    "separable_convolve_adjoint",
    "upsample_zeros",
    "weighted_basis_moments",
]
