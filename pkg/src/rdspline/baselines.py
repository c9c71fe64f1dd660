"""Weighted kernel-density and weighted-histogram baselines.

Both invert the detection probability pointwise (weights ``1 / xi(x_k)``), which
is the standard way to handle uneven sensitivity and the behavior the spline
estimator is compared against.  Bandwidths follow the usual rules: Scott for the
KDE (on weighted moments, with the effective sample size), and the larger of the
Freedman-Diaconis and Sturges widths for the histogram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .density import SensitivityMap, UniformSensitivity
from .grid import BoundaryCondition, GridSpec, ScalarField

_WRAP_IMAGES = (-1, 0, 1)


def axis_periods(grid: GridSpec):
    """Per-axis wrap lengths: the extent on periodic axes, ``None`` elsewhere."""
    return tuple(
        grid.axis_extent(k) if grid.bcs[k] is BoundaryCondition.PERIODIC else None
        for k in range(grid.d)
    )


def _sample_weights(samples: np.ndarray, xi: SensitivityMap) -> np.ndarray:
    vals = xi.at(samples)
    if np.any(vals <= 0):
        raise ValueError("zero sensitivity at sample")
    return 1.0 / vals


@dataclass
class KdeModel:
    """Gaussian product-kernel estimator with per-sample weights."""

    samples: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    bandwidth: np.ndarray  # (d,)
    periods: tuple  # per-axis wrap length or None

    @property
    def d(self) -> int:
        return self.samples.shape[1]


def kde_fit(samples, xi: SensitivityMap = None, periods=None) -> KdeModel:
    """Scott-rule weighted KDE: ``h_j = sigma_j * N_eff**(-1/(d+4))``.

    The weighted standard deviation and the effective sample size
    ``N_eff = (sum w)^2 / sum w^2`` replace their unweighted counterparts.
    """
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if n < 2:
        raise ValueError("need at least two samples")
    xi = xi if xi is not None else UniformSensitivity()
    w = _sample_weights(pts, xi)
    n_eff = float(w.sum()) ** 2 / float((w**2).sum())
    mean = np.average(pts, axis=0, weights=w)
    var = np.average((pts - mean) ** 2, axis=0, weights=w)
    sigma = np.sqrt(var)
    if np.any(sigma <= 0):
        raise ValueError("degenerate sample spread; bandwidth undefined")
    h = sigma * n_eff ** (-1.0 / (d + 4))
    if periods is None:
        periods = (None,) * d
    return KdeModel(samples=pts, weights=w, bandwidth=h, periods=tuple(periods))


def _axis_kernel_matrix(x: np.ndarray, centers: np.ndarray, h: float, period):
    """(len(x), len(centers)) normalized 1-D Gaussian values, wrapped if periodic."""
    diff = x[:, None] - centers[None, :]
    if period is None:
        z = np.exp(-0.5 * (diff / h) ** 2)
    else:
        z = np.zeros_like(diff)
        for img in _WRAP_IMAGES:
            z += np.exp(-0.5 * ((diff + img * period) / h) ** 2)
    return z / np.sqrt(2.0 * np.pi * h * h)


def kde_eval(model: KdeModel, pts, chunk: int = 512) -> np.ndarray:
    """Weighted kernel sum at arbitrary points (chunked over queries)."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    out = np.empty(pts.shape[0])
    wsum = model.weights.sum()
    for start in range(0, pts.shape[0], chunk):
        sl = slice(start, start + chunk)
        acc = np.ones((pts[sl].shape[0], model.samples.shape[0]))
        for k in range(model.d):
            acc *= _axis_kernel_matrix(
                pts[sl][:, k], model.samples[:, k], model.bandwidth[k], model.periods[k]
            )
        out[sl] = acc @ model.weights / wsum
    return out


def kde_eval_grid(model: KdeModel, grid: GridSpec, sample_chunk: int = 200_000) -> ScalarField:
    """Kernel sum on a full lattice via per-axis factor matrices.

    The separable kernel turns the grid evaluation into small matrix products
    (cost still linear in the number of samples).
    """
    if grid.d != model.d:
        raise ValueError("grid dimension does not match the model")
    n = model.samples.shape[0]
    out = np.zeros(grid.shape)
    for start in range(0, n, sample_chunk):
        sl = slice(start, start + sample_chunk)
        mats = [
            _axis_kernel_matrix(
                grid.axis_coords(k), model.samples[sl][:, k],
                model.bandwidth[k], model.periods[k],
            )
            for k in range(grid.d)
        ]
        w = model.weights[sl]
        if grid.d == 1:
            out += mats[0] @ w
        elif grid.d == 2:
            out += mats[0] @ (w[:, None] * mats[1].T)
        elif grid.d == 3:
            out += np.einsum("ak,bk,ck->abc", mats[0] * w, mats[1], mats[2])
        else:
            raise NotImplementedError("grid KDE evaluation supports d <= 3")
    return ScalarField(grid, out / model.weights.sum())


@dataclass
class HistModel:
    """Weighted histogram normalized to integrate to one."""

    edges: list  # per-axis bin edges
    density: np.ndarray  # per-bin density values

    @property
    def d(self) -> int:
        return len(self.edges)


def _axis_bins(data: np.ndarray, lo: float, hi: float, n: int) -> np.ndarray:
    """Bin edges with width ``max(Freedman-Diaconis, Sturges)`` over [lo, hi]."""
    extent = hi - lo
    q75, q25 = np.percentile(data, [75, 25])
    iqr = q75 - q25
    sturges_width = extent / (int(np.ceil(np.log2(n))) + 1)
    fd_width = 2.0 * iqr * n ** (-1.0 / 3.0)
    width = sturges_width if iqr == 0 else max(fd_width, sturges_width)
    nbins = max(1, int(np.ceil(extent / width)))
    return np.linspace(lo, hi, nbins + 1)


def hist_fit(samples, xi: SensitivityMap, grid: GridSpec) -> HistModel:
    """Weighted histogram over the grid's domain box."""
    pts = np.asarray(samples, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    xi = xi if xi is not None else UniformSensitivity()
    w = _sample_weights(pts, xi)
    edges = []
    for k in range(grid.d):
        lo = grid.origin[k]
        hi = lo + grid.axis_extent(k)
        edges.append(_axis_bins(pts[:, k], lo, hi, n))
    counts, _ = np.histogramdd(pts, bins=edges, weights=w)
    bin_volume = float(np.prod([e[1] - e[0] for e in edges]))
    total = counts.sum()
    if total <= 0:
        raise ValueError("no sample fell inside the domain")
    return HistModel(edges=edges, density=counts / (total * bin_volume))


def hist_eval(model: HistModel, pts) -> np.ndarray:
    """Piecewise-constant lookup; zero outside the histogram box."""
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    idx = []
    inside = np.ones(pts.shape[0], dtype=bool)
    for k, e in enumerate(model.edges):
        j = np.searchsorted(e, pts[:, k], side="right") - 1
        j = np.where(pts[:, k] == e[-1], len(e) - 2, j)  # closed top edge
        inside &= (j >= 0) & (j <= len(e) - 2)
        idx.append(np.clip(j, 0, len(e) - 2))
    vals = model.density[tuple(idx)]
    return np.where(inside, vals, 0.0)


def hist_fit_eval(samples, xi: SensitivityMap, grid: GridSpec) -> ScalarField:
    """Fit the weighted histogram and resample it onto the grid's lattice."""
    model = hist_fit(samples, xi, grid)
    vals = hist_eval(model, grid.points_world()).reshape(grid.shape)
    return ScalarField(grid, vals)
