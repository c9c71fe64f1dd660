"""Exponential log-spline densities and sensitivity-weighted integrals.

The model density is ``rho(x; c) = exp(sum_m c[m] * phi_m(x))`` with ``phi_m``
a tensor B-spline basis on a uniform grid.  All integrals against the
sensitivity measure are Riemann sums on an ``s``-times refined grid, evaluated
through separable convolutions so that no per-basis loop is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsplines import eval_spline_grid, eval_spline_points, make_filter
from .grid import (
    BoundaryCondition,
    GridSpec,
    ScalarField,
    constant_field,
    downsample,
    fine_grid,
    separable_convolve_adjoint,
)

LOG_DENSITY_OVERFLOW = 700.0
DEFAULT_QUAD_SCALE = 4


class SensitivityMap:
    """Detection-probability field ``xi >= 0`` acting as the reference measure."""

    def at(self, pts) -> np.ndarray:
        raise NotImplementedError

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        return self.at(grid.points_world()).reshape(grid.shape)

    def max_value(self) -> float:
        raise NotImplementedError

    def validate_on(self, grid: GridSpec):
        vals = self.sample_on(grid)
        if np.any(vals < 0):
            raise ValueError("sensitivity map must be nonnegative")
        frac = float(np.mean(vals <= 0))
        if frac >= 0.10:
            raise ValueError(
                f"sensitivity vanishes on {frac:.0%} of quadrature nodes; "
                "it must be positive almost everywhere"
            )
        return vals


class UniformSensitivity(SensitivityMap):
    """Constant detection probability; reduces every estimator to its unweighted form."""

    def at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.ones(pts.shape[0])

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        return np.ones(grid.shape)

    def max_value(self) -> float:
        return 1.0


class SinSquaredSensitivity(SensitivityMap):
    """``xi(x) = sin^2(x_axis / period + phase) + eps`` along one axis."""

    def __init__(self, period: float, phase: float = 0.0, eps: float = 1e-3, axis: int = 0):
        if period <= 0:
            raise ValueError("period must be positive")
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        self.period = float(period)
        self.phase = float(phase)
        self.eps = float(eps)
        self.axis = int(axis)

    def at(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x = pts[:, self.axis]
        return np.sin(x / self.period + self.phase) ** 2 + self.eps

    def sample_on(self, grid: GridSpec) -> np.ndarray:
        x = grid.axis_coords(self.axis)
        line = np.sin(x / self.period + self.phase) ** 2 + self.eps
        shape = [1] * grid.d
        shape[self.axis] = grid.sizes[self.axis]
        return np.broadcast_to(line.reshape(shape), grid.shape).copy()

    def max_value(self) -> float:
        return 1.0 + self.eps


class GriddedSensitivity(SensitivityMap):
    """Sensitivity stored as B-spline coefficients on its own (fine) grid.

    Node values are used directly as coefficients: exact interpolation for
    degrees 0 and 1, a mild smoothing for degree 3; nonnegative nodes keep the
    interpolant nonnegative either way.
    """

    def __init__(self, field: ScalarField, degree: int = 1):
        if np.any(field.values < 0):
            raise ValueError("gridded sensitivity must be nonnegative")
        self.field = field
        self.degree = int(degree)

    def at(self, pts) -> np.ndarray:
        return eval_spline_points(self.field, self.degree, pts)

    def max_value(self) -> float:
        return float(self.field.values.max())


def sensitivity_from_spec(spec) -> SensitivityMap:
    """Build a sensitivity map from its JSON-style description."""
    if spec is None:
        return UniformSensitivity()
    if isinstance(spec, SensitivityMap):
        return spec
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return UniformSensitivity()
    if kind == "sinsq":
        return SinSquaredSensitivity(
            period=float(spec["T"]),
            phase=float(spec.get("phase", 0.0)),
            eps=float(spec.get("eps", 1e-3)),
            axis=int(spec.get("axis", 0)),
        )
    raise ValueError(f"unknown sensitivity kind {kind!r}")


def quadrature_weights(grid: GridSpec) -> np.ndarray:
    """Riemann weights on a grid: cell volume, with 1/2 end-weights on closed axes."""
    w = np.ones(grid.shape)
    for k in range(grid.d):
        if grid.bcs[k] is not BoundaryCondition.PERIODIC:
            taper = np.ones(grid.sizes[k])
            taper[0] = 0.5
            taper[-1] = 0.5
            shape = [1] * grid.d
            shape[k] = grid.sizes[k]
            w = w * taper.reshape(shape)
    return w * grid.cell_volume


class QuadratureWorkspace:
    """Fine-grid machinery shared by all sensitivity-weighted integrals.

    Holds the refined grid, the sampled sensitivity times quadrature weights,
    the order-0 filter bank, and the partition field ``S = sum_m phi_m`` used
    for exact banded row sums.  The log-density samples are the only part that
    changes with the coefficients.
    """

    def __init__(self, grid: GridSpec, degree: int, scale: int, xi: SensitivityMap):
        self.grid = grid
        self.degree = int(degree)
        self.scale = int(scale)
        if self.scale < 1:
            raise ValueError("quadrature scale must be >= 1")
        self.xi = xi
        self.fine = fine_grid(grid, self.scale)
        self.bank0 = make_filter(self.degree, (0,) * grid.d, self.scale)
        self.xi_values = xi.validate_on(self.fine)
        self.quad_w = quadrature_weights(self.fine)
        self.xi_w = self.xi_values * self.quad_w
        ones = constant_field(grid, 1.0)
        self.partition_fine = eval_spline_grid(ones, self.degree, self.scale).values
        self._coarse = tuple(slice(None, None, self.scale) for _ in range(grid.d))

    def log_density(self, coeff_values: np.ndarray) -> np.ndarray:
        field = ScalarField(self.grid, coeff_values)
        logdens = eval_spline_grid(field, self.degree, self.scale).values
        if logdens.max() > LOG_DENSITY_OVERFLOW:
            raise OverflowError("density overflow; rescale coefficients or domain")
        return logdens

    def shifted_mass(self, logdens: np.ndarray, weights=None):
        """Return ``(shift, ew, Z)`` with ``E(rho) = exp(shift) * Z``.

        ``ew = weights * exp(logdens - shift)`` is the fine-grid measure of the
        model, stabilized by the max log-density.
        """
        if weights is None:
            weights = self.xi_w
        shift = float(logdens.max())
        ew = weights * np.exp(logdens - shift)
        z = float(ew.sum())
        if z <= 0 or not np.isfinite(z):
            raise ValueError("degenerate measure")
        return shift, ew, z

    def reduce_to_basis(self, fine_values: np.ndarray) -> np.ndarray:
        """Integrate fine-grid values against every basis function (one sweep).

        Computes ``out[k] = sum_fine phi_k(x) * fine_values(x)`` via the adjoint
        of the upsample-and-convolve evaluation, then coarse subsampling.
        """
        f = ScalarField(self.fine, fine_values)
        adj = separable_convolve_adjoint(f, self.bank0.taps, self.grid.bcs)
        return adj.values[self._coarse].copy()

    def coarse_subsample(self, fine_values: np.ndarray) -> np.ndarray:
        return fine_values[self._coarse]


@dataclass
class DensityModel:
    """Grid, spline degree and coefficients of one fitted (or candidate) density."""

    grid: GridSpec
    degree: int
    coeffs: ScalarField
    quad_scale: int = DEFAULT_QUAD_SCALE

    def __post_init__(self):
        if self.coeffs.grid.shape != self.grid.shape:
            raise ValueError("coefficient field shape does not match grid")
        self._workspaces = {}

    def with_coeffs(self, values: np.ndarray) -> "DensityModel":
        out = DensityModel(self.grid, self.degree, ScalarField(self.grid, values),
                           self.quad_scale)
        out._workspaces = self._workspaces  # coefficient-independent, shareable
        return out

    def workspace(self, xi: SensitivityMap, scale: int = None) -> QuadratureWorkspace:
        scale = self.quad_scale if scale is None else int(scale)
        key = (id(xi), scale)
        ws = self._workspaces.get(key)
        if ws is None or ws.xi is not xi:
            ws = QuadratureWorkspace(self.grid, self.degree, scale, xi)
            self._workspaces[key] = ws
        return ws


def log_density_grid(model: DensityModel, s: int = 1) -> ScalarField:
    """Exact samples of ``log rho`` on the ``s``-refined grid."""
    return eval_spline_grid(model.coeffs, model.degree, s)


def log_density_points(model: DensityModel, pts) -> np.ndarray:
    return eval_spline_points(model.coeffs, model.degree, pts)


def expectation(model: DensityModel, f_samples, xi: SensitivityMap) -> float:
    """Quadrature of ``f * rho`` against the sensitivity measure.

    ``f_samples`` may be a :class:`ScalarField` on the quadrature grid, a plain
    array of that shape, or ``None`` for ``E(rho)`` itself.
    """
    ws = model.workspace(xi)
    logdens = ws.log_density(model.coeffs.values)
    shift, ew, z = ws.shifted_mass(logdens)
    if f_samples is None:
        return float(np.exp(shift) * z)
    vals = f_samples.values if isinstance(f_samples, ScalarField) else np.asarray(f_samples)
    if vals.shape != ws.fine.shape:
        raise ValueError("f_samples must live on the model's quadrature grid")
    return float(np.exp(shift) * (vals * ew).sum())


def log_expectation_of_density(model: DensityModel, xi: SensitivityMap) -> float:
    """``log E(rho)``, computed in shifted form to avoid overflow."""
    ws = model.workspace(xi)
    logdens = ws.log_density(model.coeffs.values)
    shift, _, z = ws.shifted_mass(logdens)
    return shift + float(np.log(z))


def weighted_basis_moments(model: DensityModel, xi: SensitivityMap) -> ScalarField:
    """The moment vector ``f[k] = E(phi_k * rho) / E(rho)`` for all basis indices.

    One separable adjoint convolution of the fine-grid measure with the order-0
    filters, followed by coarse subsampling; sums to 1 for degrees 1 and 3 on
    periodic grids (partition of unity) up to quadrature accuracy.
    """
    ws = model.workspace(xi)
    logdens = ws.log_density(model.coeffs.values)
    _, ew, z = ws.shifted_mass(logdens)
    f = ws.reduce_to_basis(ew) / z
    return ScalarField(model.grid, f)


def pdf_at(model: DensityModel, xi: SensitivityMap, pts, observed: bool = False) -> np.ndarray:
    """Normalized density values at the given points.

    Default is the target estimate ``rho / integral(rho)`` (Lebesgue
    normalization).  With ``observed=True``, returns the detected-event density
    ``rho * xi / E(rho)`` instead.
    """
    pts = np.asarray(pts, dtype=float)
    logdens = log_density_points(model, pts)
    if observed:
        ws = model.workspace(xi)
        fine_log = ws.log_density(model.coeffs.values)
        shift, _, z = ws.shifted_mass(fine_log)
        return np.exp(logdens - shift) / z * xi.at(pts)
    lebesgue = UniformSensitivity()
    ws = model.workspace(lebesgue)
    fine_log = ws.log_density(model.coeffs.values)
    shift, _, z = ws.shifted_mass(fine_log)
    return np.exp(logdens - shift) / z


def pdf_grid(model: DensityModel, s: int = 1, xi: SensitivityMap = None,
             observed: bool = False) -> ScalarField:
    """Normalized density sampled on the ``s``-refined grid (see :func:`pdf_at`)."""
    logdens = log_density_grid(model, s)
    if observed:
        if xi is None:
            raise ValueError("observed density needs the sensitivity map")
        ws = model.workspace(xi)
        fine_log = ws.log_density(model.coeffs.values)
        shift, _, z = ws.shifted_mass(fine_log)
        xi_vals = xi.sample_on(logdens.grid) if s != ws.scale else ws.xi_values
        vals = np.exp(logdens.values - shift) / z * xi_vals
        return ScalarField(logdens.grid, vals)
    lebesgue = UniformSensitivity()
    ws = model.workspace(lebesgue)
    fine_log = ws.log_density(model.coeffs.values)
    shift, _, z = ws.shifted_mass(fine_log)
    return ScalarField(logdens.grid, np.exp(logdens.values - shift) / z)
