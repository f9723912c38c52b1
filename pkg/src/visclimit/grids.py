"""Rectangular 2D meshes, cell-centered fields, discrete calculus, and quadrature."""

import math
from dataclasses import dataclass

import numpy as np

TORUS = "torus"
CHANNEL = "channel"


class TopologyError(ValueError):
    """Raised when an operation needs a wall but the domain has none (or vice versa)."""


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered mesh on [0,Lx] x [0,Ly].

    Topology is either fully periodic (torus) or x-periodic with flat walls
    at y=0 and y=Ly (channel).  Cell centers sit at ((i+1/2)hx, (j+1/2)hy).
    """

    nx: int
    ny: int
    Lx: float
    Ly: float
    topology: str = TORUS

    def __post_init__(self):
        if self.nx < 8 or self.ny < 8:
            raise ValueError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if self.Lx <= 0 or self.Ly <= 0:
            raise ValueError("domain lengths must be positive")
        if self.topology not in (TORUS, CHANNEL):
            raise ValueError(f"unknown topology {self.topology!r}")

    @property
    def hx(self):
        return self.Lx / self.nx

    @property
    def hy(self):
        return self.Ly / self.ny

    @property
    def cell_volume(self):
        return self.hx * self.hy

    @property
    def has_walls(self):
        return self.topology == CHANNEL

    def xcenters(self):
        return (np.arange(self.nx) + 0.5) * self.hx

    def ycenters(self):
        return (np.arange(self.ny) + 0.5) * self.hy

    def mesh(self):
        """Return cell-center coordinate arrays X, Y of shape (nx, ny)."""
        return np.meshgrid(self.xcenters(), self.ycenters(), indexing="ij")


def _check_values(grid, values, shape_tail, allow_inf=False):
    values = np.asarray(values, dtype=float)
    expected = (grid.nx, grid.ny) + shape_tail
    if values.shape != expected:
        raise ValueError(f"field shape {values.shape} does not match grid {expected}")
    bad = np.any(np.isnan(values)) if allow_inf else not np.all(np.isfinite(values))
    if bad:
        raise ValueError("field contains non-finite values")
    return values


@dataclass
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        # +inf admitted as the no-wall distance sentinel; NaN always rejected
        self.values = _check_values(self.grid, self.values, (), allow_inf=True)


@dataclass
class VectorField:
    grid: Grid
    values: np.ndarray  # (nx, ny, 2)

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (2,))


@dataclass
class TensorField:
    grid: Grid
    values: np.ndarray  # (nx, ny, 2, 2); [a, b] = d/dx_b of component a

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, (2, 2))


@dataclass
class BoundaryTrace:
    """Wall samples of a quantity on both channel walls, with arc-length weights hx."""

    grid: Grid
    bottom: np.ndarray  # (nx,)
    top: np.ndarray  # (nx,)

    def __post_init__(self):
        self.bottom = np.asarray(self.bottom, dtype=float)
        self.top = np.asarray(self.top, dtype=float)
        if self.bottom.shape != (self.grid.nx,) or self.top.shape != (self.grid.nx,):
            raise ValueError("boundary trace length must equal nx per wall")

    @property
    def weights(self):
        return np.full(self.grid.nx, self.grid.hx)


def scalar(grid, values):
    return ScalarField(grid, np.asarray(values, dtype=float))


def vector(grid, vx, vy):
    return VectorField(grid, np.stack([np.asarray(vx, float), np.asarray(vy, float)], axis=-1))


def det_sum(a):
    """Deterministic compensated sum (exact rounding, order-independent result)."""
    return math.fsum(np.asarray(a, dtype=float).ravel(order="C"))


def _ddx(a, hx):
    # x is always periodic
    return (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * hx)


def _ddy(a, hy, periodic):
    if periodic:
        return (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * hy)
    out = np.empty_like(a)
    out[:, 1:-1] = (a[:, 2:] - a[:, :-2]) / (2.0 * hy)
    # one-sided second order at the wall rows
    out[:, 0] = (-3.0 * a[:, 0] + 4.0 * a[:, 1] - a[:, 2]) / (2.0 * hy)
    out[:, -1] = (3.0 * a[:, -1] - 4.0 * a[:, -2] + a[:, -3]) / (2.0 * hy)
    return out


def gradient(field):
    """Cell-centered gradient: central in the interior, one-sided at channel walls.

    Scalar input gives a VectorField (df/dx, df/dy); vector input gives the
    TensorField with entry [a, b] = d(u_a)/d(x_b).
    """
    grid = field.grid
    periodic_y = not grid.has_walls
    if isinstance(field, ScalarField):
        gx = _ddx(field.values, grid.hx)
        gy = _ddy(field.values, grid.hy, periodic_y)
        return VectorField(grid, np.stack([gx, gy], axis=-1))
    if isinstance(field, VectorField):
        out = np.empty((grid.nx, grid.ny, 2, 2))
        for a in range(2):
            out[:, :, a, 0] = _ddx(field.values[:, :, a], grid.hx)
            out[:, :, a, 1] = _ddy(field.values[:, :, a], grid.hy, periodic_y)
        return TensorField(grid, out)
    raise TypeError(f"cannot take gradient of {type(field).__name__}")


def divergence(v):
    grid = v.grid
    d = _ddx(v.values[:, :, 0], grid.hx) + _ddy(v.values[:, :, 1], grid.hy, not grid.has_walls)
    return ScalarField(grid, d)


def curl2d(v):
    """Scalar vorticity d(u2)/dx - d(u1)/dy."""
    grid = v.grid
    w = _ddx(v.values[:, :, 1], grid.hx) - _ddy(v.values[:, :, 0], grid.hy, not grid.has_walls)
    return ScalarField(grid, w)


def wall_distance(grid):
    """Distance from cell centers to the nearest wall; +inf on the torus."""
    if not grid.has_walls:
        return ScalarField(grid, np.full((grid.nx, grid.ny), np.inf))
    y = grid.ycenters()
    d = np.minimum(y, grid.Ly - y)
    return ScalarField(grid, np.broadcast_to(d, (grid.nx, grid.ny)).copy())


def strip_mask(grid, width):
    """Boolean mask of cells whose centers lie within `width` of a wall."""
    if not grid.has_walls:
        raise TopologyError("strip region requires a channel domain")
    if width < 0:
        raise ValueError("strip width must be nonnegative")
    return wall_distance(grid).values <= width


def integrate(field, strip_width=None):
    """Midpoint-rule integral of a scalar field, optionally restricted to a wall strip."""
    grid = field.grid
    vals = field.values
    if strip_width is not None:
        vals = vals[strip_mask(grid, strip_width)]
    return det_sum(vals) * grid.cell_volume


def boundary_integrate(trace):
    """Integral over both walls: sum(value) * hx per wall."""
    hx = trace.grid.hx
    return (det_sum(trace.bottom) + det_sum(trace.top)) * hx


def wall_extrapolate(values, grid):
    """Second-order extrapolation of cell-centered values to the two walls.

    Quadratic fit through the first three cell centers; exact for quadratics.
    Returns (bottom, top) arrays of shape (nx,).
    """
    if not grid.has_walls:
        raise TopologyError("wall extrapolation requires a channel domain")
    bottom = (15.0 * values[:, 0] - 10.0 * values[:, 1] + 3.0 * values[:, 2]) / 8.0
    top = (15.0 * values[:, -1] - 10.0 * values[:, -2] + 3.0 * values[:, -3]) / 8.0
    return bottom, top


def restrict_block2(values):
    """Restrict a (2nx, 2ny[, k]) cell-centered array to (nx, ny[, k]) by block averaging."""
    n0, n1 = values.shape[0], values.shape[1]
    if n0 % 2 or n1 % 2:
        raise ValueError("block restriction needs even cell counts")
    v = values.reshape((n0 // 2, 2, n1 // 2, 2) + values.shape[2:])
    return v.mean(axis=(1, 3))
