"""Data term of the fit: log-likelihood, gradient, and banded Hessian pieces.

For coefficients ``c`` and samples ``X``, the negative log-likelihood (constant
``log xi`` terms dropped) is ``-<c, phi_sums> + N * log E(rho(c))``; its Hessian
is ``N * (D - f  f^T)`` with the moment vector ``f`` and the banded, positive
matrix ``D`` of basis-pair integrals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsplines import point_basis
from .density import (
    DensityModel,
    SensitivityMap,
    log_expectation_of_density,
    weighted_basis_moments,
)
from .grid import BoundaryCondition, GridSpec, ScalarField


@dataclass
class DataSums:
    """Per-basis sums of basis values over the sample set (sufficient statistics)."""

    phi_sums: ScalarField
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one sample")
        if np.any(self.phi_sums.values < 0):
            raise ValueError("basis sums cannot be negative")


def accumulate_data_sums(samples, grid: GridSpec, degree: int) -> DataSums:
    """Scatter-add the active basis values of every sample onto the grid.

    Periodic axes fold the samples first; a sample outside a non-periodic axis
    range raises with the offending index.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] < 1:
        raise ValueError("need at least one sample")
    idx_list, w_list, _ = point_basis(grid, pts, degree)
    sums = np.zeros(grid.shape)
    n_loc = idx_list[0].shape[1]
    for combo in np.ndindex(*([n_loc] * grid.d)):
        w = w_list[0][:, combo[0]].copy()
        for k in range(1, grid.d):
            w = w * w_list[k][:, combo[k]]
        gather = tuple(idx_list[k][:, combo[k]] for k in range(grid.d))
        np.add.at(sums, gather, w)
    return DataSums(ScalarField(grid, sums), pts.shape[0])


def neg_log_likelihood(model: DensityModel, data: DataSums, xi: SensitivityMap) -> float:
    """``-<c, phi_sums> + N log E(rho)`` (minimization convention)."""
    inner = float(np.sum(model.coeffs.values * data.phi_sums.values))
    return -inner + data.n_samples * log_expectation_of_density(model, xi)


def gradient(model: DensityModel, data: DataSums, xi: SensitivityMap) -> ScalarField:
    """Gradient of the negative log-likelihood over the coefficients."""
    f = weighted_basis_moments(model, xi)
    return ScalarField(model.grid, -data.phi_sums.values + data.n_samples * f.values)


def log_sensitivity_term(samples, xi: SensitivityMap) -> float:
    """The constant ``sum log xi(x)`` omitted from the objective.

    Reported for diagnostics only; raises if the sensitivity vanishes at a
    sample (where the term is undefined).
    """
    vals = xi.at(np.asarray(samples, dtype=float))
    if np.any(vals <= 0):
        raise ValueError("log sensitivity undefined: zero sensitivity at a sample")
    return float(np.log(vals).sum())


@dataclass
class BandedHessianPart:
    """Bands of ``D[k, k + off] = E(phi_k phi_{k+off} rho) / E(rho)``.

    Offsets run over the ``(2n+1)^d`` support neighborhood; entries whose
    partner index leaves a non-periodic axis are zero.
    """

    grid: GridSpec
    offsets: list
    bands: dict

    def row_sums(self) -> np.ndarray:
        total = np.zeros(self.grid.shape)
        for off in self.offsets:
            total += np.abs(self.bands[off])
        return total

    def diagonal(self) -> np.ndarray:
        return self.bands[(0,) * self.grid.d]

    def to_dense(self) -> np.ndarray:
        """Materialize the full matrix (small grids only)."""
        npts = self.grid.num_points
        out = np.zeros((npts, npts))
        shape = self.grid.shape
        idx = np.arange(npts).reshape(shape)
        for off, band in self.bands.items():
            coords = np.meshgrid(*[np.arange(n) for n in shape], indexing="ij")
            target = []
            valid = np.ones(shape, dtype=bool)
            for k, (c, o) in enumerate(zip(coords, off)):
                t = c + o
                if self.grid.bcs[k] is BoundaryCondition.PERIODIC:
                    t = t % shape[k]
                else:
                    valid &= (t >= 0) & (t < shape[k])
                    t = np.clip(t, 0, shape[k] - 1)
                target.append(t)
            rows = idx[valid]
            cols = idx[tuple(t[valid] for t in target)]
            out[rows, cols] = band[valid]
        return out


def axis_sampling_matrix(grid: GridSpec, fine_size: int, taps: np.ndarray,
                         scale: int, axis: int) -> np.ndarray:
    """Dense ``(fine_size, N)`` per-axis evaluation operator with BC folding.

    Column ``m`` holds ``beta((f - s*m) / s)`` summed over the extension images
    of ``m`` (wrap, reflection, or nothing for zero padding).
    """
    n = grid.sizes[axis]
    bc = grid.bcs[axis]
    r = taps.size // 2
    margin = r // scale + 2
    out = np.zeros((fine_size, n))
    f = np.arange(fine_size)
    for m_ext in range(-margin, n + margin):
        j = f - scale * m_ext
        col = np.zeros(fine_size)
        inside = np.abs(j) <= r
        col[inside] = taps[j[inside] + r]
        if not np.any(col):
            continue
        if 0 <= m_ext < n:
            out[:, m_ext] += col
        elif bc is BoundaryCondition.PERIODIC:
            out[:, m_ext % n] += col
        elif bc is BoundaryCondition.MIRROR:
            period = 2 * n - 2
            mm = m_ext % period
            mm = min(mm, period - mm)
            out[:, mm] += col
        # ZEROPAD: out-of-range coefficients read zero; drop the column.
    return out


def _contract_axis(values: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    """Apply ``mat.T`` along one axis of ``values`` (fine -> coarse)."""
    moved = np.moveaxis(values, axis, 0)
    flat = moved.reshape(moved.shape[0], -1)
    res = mat.T @ flat
    res = res.reshape((mat.shape[1],) + moved.shape[1:])
    return np.moveaxis(res, 0, axis)


def hessian_parts(model: DensityModel, xi: SensitivityMap):
    """Moment vector ``f`` and banded part ``D`` of the likelihood Hessian.

    The Hessian of the negative log-likelihood is ``N * (D - f  f^T)``.  Each
    band is one separable correlation of the fine-grid measure with a
    shifted-filter product, realized through small per-axis operator matrices.
    """
    ws = model.workspace(xi)
    grid = model.grid
    n = model.degree
    logdens = ws.log_density(model.coeffs.values)
    _, ew, z = ws.shifted_mass(logdens)
    f = ws.reduce_to_basis(ew) / z

    mats = [
        axis_sampling_matrix(grid, ws.fine.sizes[k], ws.bank0.taps[k], ws.scale, k)
        for k in range(grid.d)
    ]
    if n > 0:
        offsets = [tuple(o - n for o in off)
                   for off in np.ndindex(*[2 * n + 1 for _ in range(grid.d)])]
    else:
        offsets = [(0,) * grid.d]
    bands = {}
    for off in offsets:
        temp = ew
        for k in range(grid.d):
            a = mats[k]
            delta = off[k]
            if delta == 0:
                g = a * a
            elif grid.bcs[k] is BoundaryCondition.PERIODIC:
                cols = (np.arange(grid.sizes[k]) + delta) % grid.sizes[k]
                g = a * a[:, cols]
            else:
                shifted = np.zeros_like(a)
                nk = grid.sizes[k]
                if delta > 0:
                    shifted[:, : nk - delta] = a[:, delta:]
                else:
                    shifted[:, -delta:] = a[:, : nk + delta]
                g = a * shifted
            temp = _contract_axis(temp, g, k)
        bands[off] = temp / z
    part = BandedHessianPart(grid=grid, offsets=offsets, bands=bands)
    return ScalarField(grid, f), part
