"""Uniform space-time grids, sampled functions, quadrature, and stencils.

Everything downstream (solvers, observation functionals, norms) works on the
three sampled-function types defined here: ``SpaceProfile`` (functions of x),
``TimeSeries`` (functions of t), and ``Field`` (functions of t and x, rows are
time levels).  All values are plain float64 arrays; instances are treated as
immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError


@dataclass(eq=False)
class Grid:
    """Uniform discretization of the rectangle (0,T) x (0,R).

    Space nodes x_i = i*dx, i = 0..N; time nodes t_n = n*dt, n = 0..M.
    """

    R: float
    T: float
    N: int
    M: int

    def __post_init__(self):
        self.dx = self.R / self.N
        self.dt = self.T / self.M
        x = np.linspace(0.0, self.R, self.N + 1)
        t = np.linspace(0.0, self.T, self.M + 1)
        x.flags.writeable = False
        t.flags.writeable = False
        self.x = x
        self.t = t

    def key(self) -> tuple:
        return (self.R, self.T, self.N, self.M)

    def compatible(self, other: "Grid") -> bool:
        return self.key() == other.key()


def make_grid(R: float, T: float, N: int, M: int) -> Grid:
    """Build a uniform grid; N >= 8 so third-derivative stencils fit."""
    if not (R > 0 and T > 0):
        raise DomainError(f"grid extents must be positive, got R={R}, T={T}")
    if N < 8:
        raise DomainError(f"need N >= 8 space cells, got {N}")
    if M < 2:
        raise DomainError(f"need M >= 2 time steps, got {M}")
    return Grid(float(R), float(T), int(N), int(M))


def _validated(values, shape, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape != shape:
        raise DomainError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise DomainError(f"{name} contains non-finite entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


class _Sampled:
    """Shared arithmetic for sampled-function wrappers."""

    __slots__ = ("grid", "values")

    def _wrap(self, values) -> "_Sampled":
        return type(self)(self.grid, values)

    def _peer_values(self, other):
        if isinstance(other, _Sampled):
            if type(other) is not type(self):
                raise DomainError(
                    f"cannot combine {type(self).__name__} with {type(other).__name__}"
                )
            if not self.grid.compatible(other.grid):
                raise DomainError("operands live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self._wrap(self.values + self._peer_values(other))

    def __sub__(self, other):
        return self._wrap(self.values - self._peer_values(other))

    def __mul__(self, c):
        return self._wrap(self.values * self._peer_values(c))

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)


class SpaceProfile(_Sampled):
    """A function of x sampled at the N+1 space nodes of a grid."""

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _validated(values, (grid.N + 1,), "SpaceProfile values")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "SpaceProfile":
        return cls(grid, np.asarray(fn(grid.x), dtype=float) * np.ones(grid.N + 1))

    @classmethod
    def zeros(cls, grid: Grid) -> "SpaceProfile":
        return cls(grid, np.zeros(grid.N + 1))


class TimeSeries(_Sampled):
    """A function of t sampled at the M+1 time nodes of a grid."""

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _validated(values, (grid.M + 1,), "TimeSeries values")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "TimeSeries":
        return cls(grid, np.asarray(fn(grid.t), dtype=float) * np.ones(grid.M + 1))

    @classmethod
    def zeros(cls, grid: Grid) -> "TimeSeries":
        return cls(grid, np.zeros(grid.M + 1))


class Field(_Sampled):
    """A function of (t, x) sampled on the full grid; values[n, i] ~ u(t_n, x_i)."""

    def __init__(self, grid: Grid, values):
        self.grid = grid
        self.values = _validated(values, (grid.M + 1, grid.N + 1), "Field values")

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable) -> "Field":
        tt, xx = np.meshgrid(grid.t, grid.x, indexing="ij")
        return cls(grid, np.asarray(fn(tt, xx), dtype=float) * np.ones(tt.shape))

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, np.zeros((grid.M + 1, grid.N + 1)))

    def row(self, n: int) -> SpaceProfile:
        return SpaceProfile(self.grid, self.values[n])


# ---------------------------------------------------------------------------
# quadrature

def _integrate_samples(values: np.ndarray, h: float, axis: int = -1) -> np.ndarray:
    """Composite Simpson when the cell count is even, trapezoid otherwise."""
    n = values.shape[axis] - 1
    if n % 2 == 0:
        w = np.ones(n + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= h / 3.0
    else:
        w = np.full(n + 1, h)
        w[0] = w[-1] = h / 2.0
    return np.tensordot(values, w, axes=([axis], [0]))


def integrate_space(p: SpaceProfile) -> float:
    """Integral of p over (0, R)."""
    return float(_integrate_samples(p.values, p.grid.dx))


def integrate_time(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Integral over (0, T) along the first axis of time-sampled values."""
    return _integrate_samples(np.asarray(values, dtype=float), grid.dt, axis=0)


# ---------------------------------------------------------------------------
# finite-difference stencils
#
# Interior points use centered second-order stencils; points where the
# centered stencil does not fit use one-sided second-order closures.

def _deriv_samples(v: np.ndarray, h: float, order: int, axis: int = -1) -> np.ndarray:
    v = np.moveaxis(np.asarray(v, dtype=float), axis, -1)
    n = v.shape[-1] - 1
    out = np.empty_like(v)
    if order == 1:
        out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * h)
        out[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
        out[..., n] = (v[..., n - 2] - 4 * v[..., n - 1] + 3 * v[..., n]) / (2 * h)
    elif order == 2:
        out[..., 1:-1] = (v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]) / h**2
        out[..., 0] = (2 * v[..., 0] - 5 * v[..., 1] + 4 * v[..., 2] - v[..., 3]) / h**2
        out[..., n] = (
            2 * v[..., n] - 5 * v[..., n - 1] + 4 * v[..., n - 2] - v[..., n - 3]
        ) / h**2
    elif order == 3:
        out[..., 2:-2] = (
            v[..., 4:] - 2 * v[..., 3:-1] + 2 * v[..., 1:-3] - v[..., :-4]
        ) / (2 * h**3)
        a = v[..., :5]
        out[..., 0] = (
            -2.5 * a[..., 0] + 9 * a[..., 1] - 12 * a[..., 2] + 7 * a[..., 3] - 1.5 * a[..., 4]
        ) / h**3
        out[..., 1] = (
            -1.5 * a[..., 0] + 5 * a[..., 1] - 6 * a[..., 2] + 3 * a[..., 3] - 0.5 * a[..., 4]
        ) / h**3
        z = v[..., n - 4:]
        out[..., n - 1] = (
            0.5 * z[..., 0] - 3 * z[..., 1] + 6 * z[..., 2] - 5 * z[..., 3] + 1.5 * z[..., 4]
        ) / h**3
        out[..., n] = (
            1.5 * z[..., 0] - 7 * z[..., 1] + 12 * z[..., 2] - 9 * z[..., 3] + 2.5 * z[..., 4]
        ) / h**3
    else:
        raise DomainError(f"unsupported derivative order {order}")
    return np.moveaxis(out, -1, axis)


def diff_x(p: SpaceProfile, order: int) -> SpaceProfile:
    """Spatial derivative of a profile, order 1, 2, or 3."""
    if order not in (1, 2, 3):
        raise DomainError(f"diff_x supports orders 1..3, got {order}")
    return SpaceProfile(p.grid, _deriv_samples(p.values, p.grid.dx, order))


def space_derivative(p: SpaceProfile, order: int) -> SpaceProfile:
    """Derivative of arbitrary order, composed from the order-1..3 stencils."""
    out = p
    while order >= 3:
        out = diff_x(out, 3)
        order -= 3
    if order:
        out = diff_x(out, order)
    return out


def diff_t(s: TimeSeries, order: int) -> TimeSeries:
    """Time derivative by repeated second-order first differences."""
    if order < 0:
        raise DomainError(f"diff_t order must be nonnegative, got {order}")
    if s.grid.M < 2 * order + 2:
        raise DomainError(
            f"time grid too coarse for order-{order} derivative (M={s.grid.M})"
        )
    vals = s.values
    for _ in range(order):
        vals = _deriv_samples(vals, s.grid.dt, 1)
    return TimeSeries(s.grid, vals)


def field_dt(u: Field, order: int) -> Field:
    """Time derivative of a field, column by column."""
    if u.grid.M < 2 * order + 2:
        raise DomainError(
            f"time grid too coarse for order-{order} derivative (M={u.grid.M})"
        )
    vals = u.values
    for _ in range(order):
        vals = _deriv_samples(vals, u.grid.dt, 1, axis=0)
    return Field(u.grid, vals)


def field_dx(u: Field, order: int = 1) -> Field:
    """Spatial derivative of a field, row by row."""
    if order not in (1, 2, 3):
        raise DomainError(f"field_dx supports orders 1..3, got {order}")
    return Field(u.grid, _deriv_samples(u.values, u.grid.dx, order, axis=1))
