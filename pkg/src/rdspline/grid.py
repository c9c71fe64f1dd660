"""Uniform multidimensional lattices, boundary handling, and separable convolution.

Every field in the library lives on a :class:`GridSpec`: a uniform lattice with a
per-axis size, step, boundary condition and origin.  Arrays are stored row-major
with axis 0 slowest; a single layout convention is used everywhere.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class BoundaryCondition(enum.Enum):
    """Per-axis extension rule for fields and basis indices.

    PERIODIC wraps indices modulo the axis size.  ZEROPAD reads zeros outside the
    lattice (also used, with pinned boundary coefficients, for domains whose
    density must vanish at the border).  MIRROR reflects about the end samples
    (whole-sample symmetry, period ``2N - 2``).
    """

    PERIODIC = "periodic"
    ZEROPAD = "zeropad"
    MIRROR = "mirror"

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(
                f"unknown boundary condition {value!r}; "
                f"expected one of {[m.value for m in cls]}"
            ) from None


# Stable one-byte codes used by the binary file formats.
BC_TO_CODE = {
    BoundaryCondition.PERIODIC: 0,
    BoundaryCondition.ZEROPAD: 1,
    BoundaryCondition.MIRROR: 2,
}
CODE_TO_BC = {v: k for k, v in BC_TO_CODE.items()}


def extend_index(idx, size: int, bc: BoundaryCondition):
    """Map (possibly out-of-range) lattice indices to source indices.

    Returns ``(source, valid)`` where ``valid`` marks indices that read an actual
    sample; invalid entries (ZEROPAD out of range) read zero and their ``source``
    is clipped so it can be used in a gather.
    """
    idx = np.asarray(idx)
    if bc is BoundaryCondition.PERIODIC:
        return idx % size, np.ones(idx.shape, dtype=bool)
    if bc is BoundaryCondition.ZEROPAD:
        valid = (idx >= 0) & (idx < size)
        return np.clip(idx, 0, size - 1), valid
    if bc is BoundaryCondition.MIRROR:
        if size == 1:
            return np.zeros_like(idx), np.ones(idx.shape, dtype=bool)
        period = 2 * size - 2
        m = idx % period
        m = np.minimum(m, period - m)
        return m, np.ones(idx.shape, dtype=bool)
    raise ValueError(f"unhandled boundary condition {bc}")


@dataclass(frozen=True)
class GridSpec:
    """Uniform lattice: per-axis sizes, steps (world units per index), BCs, origin.

    A periodic axis of size ``N`` covers the half-open interval
    ``[origin, origin + N * step)`` with no duplicated endpoint; a non-periodic
    axis covers the closed interval ``[origin, origin + (N - 1) * step]``.
    """

    sizes: tuple
    steps: tuple
    bcs: tuple
    origin: tuple = None

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.sizes)
        steps = tuple(float(s) for s in self.steps)
        bcs = tuple(BoundaryCondition.parse(b) for b in self.bcs)
        origin = self.origin
        if origin is None:
            origin = (0.0,) * len(sizes)
        origin = tuple(float(o) for o in origin)
        if not (len(sizes) == len(steps) == len(bcs) == len(origin)):
            raise ValueError("sizes, steps, bcs and origin must have equal length")
        if any(n < 2 for n in sizes):
            raise ValueError("every axis needs at least 2 points")
        if any(s <= 0 for s in steps):
            raise ValueError("steps must be positive")
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "bcs", bcs)
        object.__setattr__(self, "origin", origin)

    @property
    def d(self) -> int:
        return len(self.sizes)

    @property
    def shape(self) -> tuple:
        return self.sizes

    @property
    def num_points(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.steps))

    def axis_extent(self, k: int) -> float:
        """World length covered by axis ``k`` (half-open for periodic axes)."""
        n = self.sizes[k]
        if self.bcs[k] is BoundaryCondition.PERIODIC:
            return n * self.steps[k]
        return (n - 1) * self.steps[k]

    @property
    def domain_volume(self) -> float:
        return float(np.prod([self.axis_extent(k) for k in range(self.d)]))

    def axis_coords(self, k: int) -> np.ndarray:
        return self.origin[k] + self.steps[k] * np.arange(self.sizes[k])

    def grid_to_world(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        return np.asarray(self.origin) + np.asarray(self.steps) * m

    def world_to_grid(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x - np.asarray(self.origin)) / np.asarray(self.steps)

    def meshgrid_world(self):
        """World coordinates of all lattice points, as ``d`` arrays of shape ``sizes``."""
        axes = [self.axis_coords(k) for k in range(self.d)]
        return np.meshgrid(*axes, indexing="ij")

    def points_world(self) -> np.ndarray:
        """All lattice points as an ``(num_points, d)`` array, row-major order."""
        mesh = self.meshgrid_world()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def with_sizes(self, sizes, steps) -> "GridSpec":
        return GridSpec(tuple(sizes), tuple(steps), self.bcs, self.origin)


def grid_from_bounds(sizes, bounds, bcs) -> GridSpec:
    """Grid covering per-axis intervals: half-open for periodic axes, closed otherwise."""
    sizes = tuple(int(n) for n in sizes)
    bcs = tuple(BoundaryCondition.parse(b) for b in bcs)
    if len(bounds) != len(sizes) or len(bcs) != len(sizes):
        raise ValueError("sizes, bounds and bcs must have equal length")
    steps, origin = [], []
    for n, (lo, hi), bc in zip(sizes, bounds, bcs):
        lo, hi = float(lo), float(hi)
        if hi <= lo:
            raise ValueError("each axis needs hi > lo")
        div = n if bc is BoundaryCondition.PERIODIC else n - 1
        steps.append((hi - lo) / div)
        origin.append(lo)
    return GridSpec(sizes, tuple(steps), bcs, tuple(origin))


@dataclass
class ScalarField:
    """Real values attached to every point of a grid (row-major array)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


def constant_field(grid: GridSpec, value: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def fine_grid(grid: GridSpec, s: int) -> GridSpec:
    """Grid refined by the integer factor ``s`` (same origin, BCs; step / s).

    Periodic axes grow to ``s * N`` points; non-periodic axes to ``s*(N-1) + 1``
    so that the same closed interval is covered.  Fine index ``s * m`` sits at
    the world position of coarse index ``m``.
    """
    s = int(s)
    if s < 1:
        raise ValueError("refinement factor must be >= 1")
    sizes = []
    for n, bc in zip(grid.sizes, grid.bcs):
        if bc is BoundaryCondition.PERIODIC:
            sizes.append(s * n)
        else:
            sizes.append(s * (n - 1) + 1)
    steps = tuple(mu / s for mu in grid.steps)
    return grid.with_sizes(sizes, steps)


def upsample_zeros(field: ScalarField, s: int) -> ScalarField:
    """Insert ``s - 1`` zeros between samples along every axis."""
    s = int(s)
    if s < 1:
        raise ValueError("upsampling factor must be >= 1")
    if s == 1:
        return field.copy()
    out_grid = fine_grid(field.grid, s)
    out = np.zeros(out_grid.shape)
    sl = tuple(slice(None, None, s) for _ in range(field.grid.d))
    out[sl] = field.values
    return ScalarField(out_grid, out)


def downsample(field: ScalarField, coarse: GridSpec, s: int) -> ScalarField:
    """Keep every ``s``-th sample along every axis (adjoint of zero upsampling)."""
    sl = tuple(slice(None, None, int(s)) for _ in range(field.grid.d))
    vals = field.values[sl]
    return ScalarField(coarse, vals.copy())


def _check_kernel(taps: np.ndarray, size: int, bc: BoundaryCondition):
    taps = np.asarray(taps, dtype=float)
    if taps.ndim != 1:
        raise ValueError("kernels must be one-dimensional")
    if taps.size % 2 == 0:
        raise ValueError("kernels must have odd length (centered at the middle tap)")
    if bc is BoundaryCondition.PERIODIC and taps.size > 2 * size + 1:
        raise ValueError("kernel exceeds period")
    return taps


def _extend_axis0(x: np.ndarray, r: int, bc: BoundaryCondition) -> np.ndarray:
    """Extend the first axis of ``x`` by ``r`` samples on each side."""
    n = x.shape[0]
    if r == 0:
        return x
    if bc is BoundaryCondition.ZEROPAD:
        pad = [(r, r)] + [(0, 0)] * (x.ndim - 1)
        return np.pad(x, pad)
    idx, _ = extend_index(np.arange(-r, n + r), n, bc)
    return x[idx]


def _convolve_axis(x: np.ndarray, taps: np.ndarray, bc: BoundaryCondition, axis: int):
    """out[m] = sum_k taps[k] * x_ext[m - k] along ``axis`` (taps centered)."""
    r = taps.size // 2
    if r == 0:
        return x * taps[0]
    moved = np.moveaxis(x, axis, 0)
    n = moved.shape[0]
    ext = _extend_axis0(moved, r, bc)
    out = np.zeros_like(moved)
    rev = taps[::-1]
    for q in range(taps.size):
        t = rev[q]
        if t != 0.0:
            out += t * ext[q : q + n]
    return np.moveaxis(out, 0, axis)


def _fold_axis0(w: np.ndarray, r: int, n: int, bc: BoundaryCondition) -> np.ndarray:
    """Adjoint of :func:`_extend_axis0`: fold the flaps back onto the core."""
    out = w[r : r + n].copy()
    if r == 0:
        return out
    if bc is BoundaryCondition.ZEROPAD:
        return out
    flap_idx = np.concatenate([np.arange(-r, 0), np.arange(n, n + r)])
    src, _ = extend_index(flap_idx, n, bc)
    flaps = np.concatenate([w[:r], w[r + n :]], axis=0)
    np.add.at(out, src, flaps)
    return out


def _convolve_axis_adjoint(y, taps: np.ndarray, bc: BoundaryCondition, axis: int):
    """Adjoint of :func:`_convolve_axis` for the same taps and extension."""
    r = taps.size // 2
    if r == 0:
        return y * taps[0]
    moved = np.moveaxis(y, axis, 0)
    n = moved.shape[0]
    if bc is BoundaryCondition.PERIODIC:
        # Periodic extension is unitary up to wrapping: the adjoint is the
        # periodic convolution with the reversed kernel.
        out = _convolve_axis(moved, taps[::-1].copy(), bc, 0)
        return np.moveaxis(out, 0, axis)
    pad = [(2 * r, 2 * r)] + [(0, 0)] * (moved.ndim - 1)
    z = np.pad(moved, pad)
    w = np.zeros((n + 2 * r,) + moved.shape[1:])
    for p in range(taps.size):
        t = taps[p]
        if t != 0.0:
            w += t * z[p : p + n + 2 * r]
    out = _fold_axis0(w, r, n, bc)
    return np.moveaxis(out, 0, axis)


def separable_convolve(field: ScalarField, kernels, bcs=None) -> ScalarField:
    """Convolve a field with a separable kernel under per-axis extensions.

    ``result[m] = sum_k field_ext[m - k] * prod_j kernels[j][k_j]`` with each
    kernel centered at its middle tap.  Output shape equals input shape.
    """
    if bcs is None:
        bcs = field.grid.bcs
    bcs = tuple(BoundaryCondition.parse(b) for b in bcs)
    if len(kernels) != field.grid.d or len(bcs) != field.grid.d:
        raise ValueError("need one kernel and one boundary condition per axis")
    out = field.values
    for axis, (taps, bc) in enumerate(zip(kernels, bcs)):
        taps = _check_kernel(taps, field.grid.sizes[axis], bc)
        out = _convolve_axis(out, taps, bc, axis)
    return ScalarField(field.grid, out)


def separable_convolve_adjoint(field: ScalarField, kernels, bcs=None) -> ScalarField:
    """Adjoint of :func:`separable_convolve` (same kernels, same extensions).

    For periodic axes and symmetric kernels this coincides with the forward
    convolution; for other extensions it applies the transposed extension
    operator, which the inner-product tests pin down.
    """
    if bcs is None:
        bcs = field.grid.bcs
    bcs = tuple(BoundaryCondition.parse(b) for b in bcs)
    out = field.values
    for axis, (taps, bc) in enumerate(zip(kernels, bcs)):
        taps = _check_kernel(taps, field.grid.sizes[axis], bc)
        out = _convolve_axis_adjoint(out, taps, bc, axis)
    return ScalarField(field.grid, out)
