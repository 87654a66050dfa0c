"""Crank-Nicolson solver for the linear third-order equation, the Picard
iteration for the nonlinear equation, and the weak-identity residual check.

The linear operator A discretizes b*d_x + d_x^3 with centered stencils.  At
the first interior point the third derivative needs a forward-biased closure,
so the assembled system is banded with 2 sub- and 3 superdiagonals.  Rows 0,
N-1, and N are replaced by the boundary closures: u(t,0), a one-sided stencil
for u_x(t,R), and u(t,R).  The stepping matrix is constant in time, so it is
factorized once per solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

from .calculus import x0_distance
from .errors import DivergedSolution, DomainError, NoContraction, SingularSystem
from .mesh import (
    Field,
    Grid,
    SpaceProfile,
    TimeSeries,
    _deriv_samples,
    _integrate_samples,
    integrate_time,
)
from .nonlinearity import Nonlinearity

_KL, _KU = 2, 3  # bandwidths of the stepping system
_TRACE_RTOL = 1e-6


@dataclass
class LinearProblem:
    """Data of the linear initial-boundary value problem.

    The source is f0 + d_x f1; either part may be None (treated as zero).
    """

    grid: Grid
    b: float
    u0: SpaceProfile
    mu0: TimeSeries
    nu0: TimeSeries
    nu1: TimeSeries
    f0: Field | None = None
    f1: Field | None = None

    def __post_init__(self):
        for name in ("u0", "mu0", "nu0", "nu1", "f0", "f1"):
            obj = getattr(self, name)
            if obj is not None and not obj.grid.compatible(self.grid):
                raise DomainError(f"{name} lives on an incompatible grid")
        left = abs(self.mu0.values[0] - self.u0.values[0])
        right = abs(self.nu0.values[0] - self.u0.values[-1])
        scale = max(1.0, float(np.abs(self.u0.values).max()))
        if left > _TRACE_RTOL * scale or right > _TRACE_RTOL * scale:
            raise DomainError(
                "zeroth-order trace mismatch between boundary data and the "
                f"initial profile (left {left:.3e}, right {right:.3e})"
            )


@dataclass
class SolveDiagnostics:
    trace_errors: dict[str, float] = field(default_factory=dict)
    step_count: int = 0
    linear_solve_residual: float = 0.0
    picard_iters: int = 0
    picard_residuals: list[float] = field(default_factory=list)


def _operator_matrix(grid: Grid, b: float) -> np.ndarray:
    """Dense matrix of b*d_x + d_x^3 with boundary rows zeroed."""
    n = grid.N
    h = grid.dx
    A = np.zeros((n + 1, n + 1))
    idx = np.arange(2, n - 1)
    # centered first derivative
    A[idx, idx - 1] += -b / (2 * h)
    A[idx, idx + 1] += b / (2 * h)
    # centered third derivative
    A[idx, idx - 2] += -1.0 / (2 * h**3)
    A[idx, idx - 1] += 1.0 / h**3
    A[idx, idx + 1] += -1.0 / h**3
    A[idx, idx + 2] += 1.0 / (2 * h**3)
    # first interior point: centered transport, forward-biased dispersion
    A[1, 0] += -b / (2 * h)
    A[1, 2] += b / (2 * h)
    A[1, 0:5] += np.array([-1.5, 5.0, -6.0, 3.0, -0.5]) / h**3
    return A


def _bc_rows(grid: Grid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = grid.N
    row0 = np.zeros(n + 1)
    row0[0] = 1.0
    rown = np.zeros(n + 1)
    rown[n] = 1.0
    flux = np.zeros(n + 1)
    flux[n - 2 : n + 1] = np.array([1.0, -4.0, 3.0]) / (2 * grid.dx)
    return row0, flux, rown


def _to_banded(D: np.ndarray) -> np.ndarray:
    """Pack a dense (kl, ku)-banded matrix into LAPACK gbtrf storage."""
    n = D.shape[0]
    ab = np.zeros((2 * _KL + _KU + 1, n))
    for offset in range(-_KL, _KU + 1):
        diag = np.diagonal(D, offset)
        cols = np.arange(max(0, offset), max(0, offset) + diag.size)
        ab[_KL + _KU - offset, cols] = diag
    return ab


def _source_rows(p: LinearProblem) -> np.ndarray:
    grid = p.grid
    src = np.zeros((grid.M + 1, grid.N + 1))
    if p.f0 is not None:
        src += p.f0.values
    if p.f1 is not None:
        src += _deriv_samples(p.f1.values, grid.dx, 1, axis=1)
    return src


def solve_linear(p: LinearProblem) -> tuple[Field, SolveDiagnostics]:
    """Advance the linear problem with Crank-Nicolson; second order in dt, dx."""
    grid = p.grid
    n, m = grid.N, grid.M
    A = _operator_matrix(grid, p.b)
    row0, flux, rown = _bc_rows(grid)

    Bplus = np.eye(n + 1) + 0.5 * grid.dt * A
    Bminus = np.eye(n + 1) - 0.5 * grid.dt * A
    for B in (Bplus, Bminus):
        B[0] = 0.0
        B[n - 1] = 0.0
        B[n] = 0.0
    Bplus[0], Bplus[n - 1], Bplus[n] = row0, flux, rown

    lu, ipiv, info = lapack.dgbtrf(_to_banded(Bplus), _KL, _KU)
    if info != 0:
        raise SingularSystem(f"banded factorization failed (info={info})")

    src = _source_rows(p)
    u = np.empty((m + 1, n + 1))
    u[0] = p.u0.values
    max_residual = 0.0
    for step in range(m):
        rhs = Bminus @ u[step] + 0.5 * grid.dt * (src[step] + src[step + 1])
        rhs[0] = p.mu0.values[step + 1]
        rhs[n - 1] = p.nu1.values[step + 1]
        rhs[n] = p.nu0.values[step + 1]
        sol, info = lapack.dgbtrs(lu, _KL, _KU, rhs, ipiv)
        if info != 0:
            raise SingularSystem(f"banded back-substitution failed (info={info})")
        if not np.isfinite(sol).all():
            raise DivergedSolution(f"non-finite solution values at step {step + 1}")
        res = np.abs(Bplus @ sol - rhs).max()
        max_residual = max(max_residual, float(res))
        u[step + 1] = sol

    diag = SolveDiagnostics(
        trace_errors={
            "left": float(np.abs(u[:, 0] - p.mu0.values).max()),
            "right": float(np.abs(u[:, n] - p.nu0.values).max()),
            "flux": float(
                np.abs(
                    (u[:, n - 2] - 4 * u[:, n - 1] + 3 * u[:, n]) / (2 * grid.dx)
                    - p.nu1.values
                )[1:].max()
            ),
        },
        step_count=m,
        linear_solve_residual=max_residual,
    )
    return Field(grid, u), diag


def solve_nonlinear(
    p: LinearProblem,
    g: Nonlinearity,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> tuple[Field, SolveDiagnostics]:
    """Picard iteration: resolve the flux nonlinearity through the f1 slot.

    Each pass solves the linear problem with f1 replaced by f1 - g(previous
    iterate) and stops when successive iterates are within ``tol`` in the
    order-zero solution distance.
    """
    if tol <= 0:
        raise DomainError(f"tolerance must be positive, got {tol}")
    grid = p.grid
    f1_base = p.f1.values if p.f1 is not None else np.zeros((grid.M + 1, grid.N + 1))

    v, diag = solve_linear(p)
    residuals: list[float] = []
    for _ in range(max_iter):
        with np.errstate(over="ignore", invalid="ignore"):
            gv = g.eval(0, v.values)
        if not np.isfinite(gv).all():
            raise NoContraction(
                "nonlinear term overflowed during Picard iteration: the "
                "data/horizon smallness hypothesis is violated at this "
                "amplitude and T",
                residuals=residuals,
            )
        candidate = LinearProblem(
            grid, p.b, p.u0, p.mu0, p.nu0, p.nu1, f0=p.f0, f1=Field(grid, f1_base - gv)
        )
        u, diag = solve_linear(candidate)
        with np.errstate(over="ignore", invalid="ignore"):
            step_dist = x0_distance(u, v)
        if not np.isfinite(step_dist):
            raise NoContraction(
                "Picard residual overflowed: the data/horizon smallness "
                "hypothesis is violated",
                residuals=residuals,
            )
        residuals.append(step_dist)
        v = u
        if residuals[-1] < tol:
            diag.picard_iters = len(residuals)
            diag.picard_residuals = residuals
            return v, diag
        if len(residuals) >= 4 and residuals[-1] > 1e3 * (residuals[0] + 1.0):
            if residuals[-1] > residuals[-2] > residuals[-3]:
                raise NoContraction(
                    "Picard residuals are blowing up: the data/horizon "
                    "smallness hypothesis is violated; reduce amplitudes or "
                    "the time horizon",
                    residuals=residuals,
                )
    tail = residuals[-3:]
    monotone = all(a > b for a, b in zip(tail, tail[1:]))
    raise NoContraction(
        "Picard iteration for the nonlinear solve did not reach tolerance "
        f"{tol:g} in {max_iter} iterations (last residuals {tail}); "
        + (
            "residuals were still decreasing, so more iterations may help"
            if monotone
            else "residuals stalled: the data/horizon smallness hypothesis "
            "looks violated; reduce amplitudes or the time horizon"
        ),
        residuals=residuals,
    )


# ---------------------------------------------------------------------------
# weak-identity residual

def _test_function_bundle(grid: Grid, i: int):
    """The i-th smooth test function and the derivatives the identity needs.

    phi(t,x) = (T - t) * sin(i*pi*x/R) * x^2 vanishes at t=T and satisfies
    phi = phi_x = 0 at x=0 and phi = 0 at x=R; its x-derivatives at x=R stay
    nonzero so the boundary-data terms remain part of the check.
    """
    c = i * np.pi / grid.R
    x, t = grid.x, grid.t
    s, cs = np.sin(c * x), np.cos(c * x)
    shape_x = s * x**2
    shape_x1 = c * cs * x**2 + 2 * x * s
    shape_x2 = -(c**2) * s * x**2 + 4 * c * x * cs + 2 * s
    shape_x3 = -(c**3) * cs * x**2 - 6 * c**2 * x * s + 6 * c * cs
    decay = grid.T - t
    return {
        "phi": decay[:, None] * shape_x[None, :],
        "phi_t": -np.ones_like(decay)[:, None] * shape_x[None, :],
        "phi_x": decay[:, None] * shape_x1[None, :],
        "phi_xxx": decay[:, None] * shape_x3[None, :],
        "phi_x_at_0": shape_x[0],  # zero by construction
        "phi_xx_at_0": decay * shape_x2[0],
        "phi_xx_at_R": decay * shape_x2[-1],
        "phi_x_at_R": decay * shape_x1[-1],
        "phi_at_t0": grid.T * shape_x,
    }


def weak_residual(u: Field, p: LinearProblem, test_count: int) -> float:
    """Max absolute residual of the integral identity over the test family."""
    if test_count < 1:
        raise DomainError(f"test_count must be >= 1, got {test_count}")
    grid = u.grid
    f0 = p.f0.values if p.f0 is not None else 0.0
    f1 = p.f1.values if p.f1 is not None else 0.0
    worst = 0.0
    for i in range(1, test_count + 1):
        tf = _test_function_bundle(grid, i)
        integrand = (
            u.values * (tf["phi_t"] + p.b * tf["phi_x"] + tf["phi_xxx"])
            + f0 * tf["phi"]
            - f1 * tf["phi_x"]
        )
        per_row = _integrate_samples(integrand, grid.dx, axis=1)
        bulk = float(integrate_time(per_row, grid))
        initial = float(_integrate_samples(p.u0.values * tf["phi_at_t0"], grid.dx))
        boundary = float(
            integrate_time(
                p.mu0.values * tf["phi_xx_at_0"]
                - p.nu0.values * tf["phi_xx_at_R"]
                + p.nu1.values * tf["phi_x_at_R"],
                grid,
            )
        )
        worst = max(worst, abs(bulk + initial + boundary))
    return worst
