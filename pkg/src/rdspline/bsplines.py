"""Centered B-splines of degree 0, 1 and 3, their filters, and spline evaluation.

Tensor-product B-spline fields on a :class:`~rdspline.grid.GridSpec` are
evaluated either on a refined lattice (one separable convolution of zero-upsampled
coefficients) or at arbitrary points (local basis sums with boundary folding).
Derivative evaluation carries the per-axis chain factor ``step**-order``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import (
    BoundaryCondition,
    GridSpec,
    ScalarField,
    extend_index,
    fine_grid,
    separable_convolve,
    upsample_zeros,
)

SUPPORTED_DEGREES = (0, 1, 3)


def _check_degree(n: int) -> int:
    n = int(n)
    if n not in SUPPORTED_DEGREES:
        raise ValueError(f"unsupported spline degree {n}; supported: {SUPPORTED_DEGREES}")
    return n


def bspline_eval(n: int, order: int, x) -> np.ndarray:
    """Centered B-spline of degree ``n`` (or its ``order``-th derivative) at ``x``.

    Values vanish for ``|x| >= (n + 1) / 2``.  At knots, derivatives that jump
    take their right limit; the second derivative of the degree-1 spline is zero
    away from knots and reported as zero there as well.
    """
    n = _check_degree(n)
    order = int(order)
    if order < 0 or order > 2:
        raise ValueError("derivative order must be 0, 1 or 2")
    if order > n and not (n == 1 and order == 2):
        raise ValueError(f"order {order} derivative undefined for degree {n}")
    x = np.asarray(x, dtype=float)
    if n == 0:
        if order > 0:
            raise ValueError("degree-0 splines have no pointwise derivatives")
        return np.where((x >= -0.5) & (x < 0.5), 1.0, 0.0)
    if n == 1:
        if order == 0:
            return np.maximum(1.0 - np.abs(x), 0.0)
        if order == 1:
            out = np.zeros_like(x)
            out = np.where((x >= -1.0) & (x < 0.0), 1.0, out)
            out = np.where((x >= 0.0) & (x < 1.0), -1.0, out)
            return out
        return np.zeros_like(x)
    # n == 3
    a = np.abs(x)
    if order == 0:
        out = np.where(a < 1.0, 2.0 / 3.0 - a**2 + a**3 / 2.0, 0.0)
        mid = (a >= 1.0) & (a < 2.0)
        return np.where(mid, (2.0 - a) ** 3 / 6.0, out)
    if order == 1:
        inner = -2.0 * a + 1.5 * a**2
        outer = -0.5 * (2.0 - a) ** 2
        mag = np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))
        return np.where(x >= 0, mag, -mag)
    inner = -2.0 + 3.0 * a
    outer = 2.0 - a
    return np.where(a < 1.0, inner, np.where(a < 2.0, outer, 0.0))


def _filter_taps(n: int, order: int, s: int) -> np.ndarray:
    """Taps ``beta^(order)(j / s)`` for ``j`` covering the open support."""
    n = _check_degree(n)
    s = int(s)
    if s < 1:
        raise ValueError("scale must be >= 1")
    if n == 0 and order > 0:
        raise ValueError("degree-0 splines have no derivative filters")
    if n == 1 and order == 2:
        if s != 1:
            raise ValueError("degree-1 second-derivative filter is defined at scale 1 only")
        return np.array([1.0, -2.0, 1.0])
    if n == 0:
        # Right-open support [-1/2, 1/2): even scales hit the cell boundary.
        r = s // 2
    elif n == 1 and order == 1:
        # Averaged one-sided limits are nonzero at the support edge itself.
        r = s
    else:
        r = s * (n + 1) // 2 - 1
    r = max(r, 0)
    j = np.arange(-r, r + 1)
    x = j / s
    if n == 1 and order == 1:
        # Averaged one-sided limits at the knots keep the kernel antisymmetric.
        taps = np.where(x <= -1.0, 0.0, np.where(x < 0.0, 1.0, np.where(x < 1.0, -1.0, 0.0)))
        taps = np.where(x == -1.0, 0.5, taps)
        taps = np.where(x == 0.0, 0.0, taps)
        taps = np.where(x == 1.0, -0.5, taps)
    else:
        taps = bspline_eval(n, order, x)
    return taps.astype(float)


@dataclass(frozen=True)
class FilterBank:
    """Per-axis derivative-sampling kernels for one tensor B-spline evaluation.

    ``taps[k][j]`` tabulates the ``orders[k]``-th derivative of the degree-``n``
    B-spline at ``j / scale``.  Taps are step-free; callers apply the chain
    factor ``prod(step_k ** -orders_k)``.
    """

    degree: int
    scale: int
    orders: tuple
    taps: tuple

    @property
    def d(self) -> int:
        return len(self.orders)


def make_filter(n: int, orders, s: int) -> FilterBank:
    """Build the separable filter bank for the given per-axis derivative orders.

    The degree-1 Hessian uses discrete stencils: ``[1, -2, 1]`` on a pure second
    derivative axis and the centered difference ``[1/2, 0, -1/2]`` on each axis
    of a mixed term (both at scale 1).
    """
    n = _check_degree(n)
    orders = tuple(int(o) for o in orders)
    for o in orders:
        if o not in (0, 1, 2):
            raise ValueError("per-axis derivative orders must be in {0, 1, 2}")
        if o > n and not (n == 1 and o == 2):
            raise ValueError(f"order {o} unsupported for degree {n}")
    taps = tuple(_filter_taps(n, o, s) for o in orders)
    return FilterBank(degree=n, scale=int(s), orders=orders, taps=taps)


def eval_spline_grid(coeffs: ScalarField, n: int, s: int, orders=None) -> ScalarField:
    """Sample the coefficient spline (or a derivative) on the ``s``-refined grid.

    Exactly equals pointwise evaluation at the fine lattice positions; computed
    as one separable convolution of the zero-upsampled coefficients.
    """
    grid = coeffs.grid
    if orders is None:
        orders = (0,) * grid.d
    bank = make_filter(n, orders, s)
    up = upsample_zeros(coeffs, s)
    out = separable_convolve(up, bank.taps, grid.bcs)
    scale = 1.0
    for mu, o in zip(grid.steps, bank.orders):
        if o:
            scale /= mu**o
    if scale != 1.0:
        out = ScalarField(out.grid, out.values * scale)
    return out


def _axis_support(u: np.ndarray, n: int):
    """First active basis index and the (n + 1) offsets for grid coordinates ``u``."""
    if n == 0:
        base = np.floor(u + 0.5).astype(int)
    elif n == 1:
        base = np.floor(u).astype(int)
    else:  # n == 3
        base = np.floor(u).astype(int) - 1
    offsets = np.arange(n + 1)
    return base[:, None] + offsets[None, :]


def point_basis(grid: GridSpec, pts: np.ndarray, n: int, orders=None):
    """Per-axis active indices, weights and validity for arbitrary points.

    Returns lists (one entry per axis) of ``(num_points, n + 1)`` arrays:
    folded lattice indices, basis values (with derivative chain factors), and
    masks that zero contributions falling outside ZEROPAD axes.  Points outside
    a non-periodic axis range raise ``ValueError``.
    """
    n = _check_degree(n)
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[1] != grid.d:
        raise ValueError(f"points have dimension {pts.shape[1]}, grid has {grid.d}")
    if orders is None:
        orders = (0,) * grid.d
    idx_list, w_list, mask_list = [], [], []
    for k in range(grid.d):
        u = (pts[:, k] - grid.origin[k]) / grid.steps[k]
        size = grid.sizes[k]
        bc = grid.bcs[k]
        if bc is BoundaryCondition.PERIODIC:
            u = u % size
        else:
            lo, hi = -1e-9, size - 1 + 1e-9
            bad = (u < lo) | (u > hi)
            if np.any(bad):
                where = int(np.argmax(bad))
                raise ValueError(
                    f"sample out of domain on axis {k} (first offending index {where})"
                )
            u = np.clip(u, 0.0, float(size - 1))
        idx = _axis_support(u, n)
        w = bspline_eval(n, orders[k], u[:, None] - idx)
        if orders[k]:
            w = w / grid.steps[k] ** orders[k]
        src, valid = extend_index(idx, size, bc)
        idx_list.append(src)
        w_list.append(np.where(valid, w, 0.0))
        mask_list.append(valid)
    return idx_list, w_list, mask_list


def eval_spline_points(coeffs: ScalarField, n: int, pts, orders=None) -> np.ndarray:
    """Evaluate the coefficient spline (or a derivative) at arbitrary points."""
    grid = coeffs.grid
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    idx_list, w_list, _ = point_basis(grid, pts, n, orders)
    n_loc = idx_list[0].shape[1]
    out = np.zeros(pts.shape[0])
    c = coeffs.values
    for combo in np.ndindex(*([n_loc] * grid.d)):
        w = w_list[0][:, combo[0]].copy()
        for k in range(1, grid.d):
            w = w * w_list[k][:, combo[k]]
        gather = tuple(idx_list[k][:, combo[k]] for k in range(grid.d))
        out += w * c[gather]
    return out


def basis_matrix(grid: GridSpec, pts, n: int, orders=None) -> np.ndarray:
    """Dense ``(num_points, |M|)`` matrix of basis values at the given points.

    Brute-force companion to :func:`eval_spline_points`; intended for small
    grids (tests, oracles, banded-Hessian assembly on coarse problems).
    """
    pts = np.asarray(pts, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    idx_list, w_list, _ = point_basis(grid, pts, n, orders)
    npts = pts.shape[0]
    out = np.zeros((npts, grid.num_points))
    strides = np.cumprod((grid.sizes + (1,))[::-1])[::-1][1:]
    n_loc = idx_list[0].shape[1]
    rows = np.arange(npts)
    for combo in np.ndindex(*([n_loc] * grid.d)):
        w = w_list[0][:, combo[0]].copy()
        flat = idx_list[0][:, combo[0]] * strides[0]
        for k in range(1, grid.d):
            w = w * w_list[k][:, combo[k]]
            flat = flat + idx_list[k][:, combo[k]] * strides[k]
        np.add.at(out, (rows, flat), w)
    return out
