"""Linear inverse operators (fixed points of the measurement-identity update)
and the outer Picard maps that wrap them around the nonlinearity.

The inner update sends candidate controls to the closed-form expression the
differentiated observation identity forces; it contracts in the
exponentially weighted norm once the weight rate gamma is large enough, so
the stopping metric and the probe below both use that norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .calculus import weighted_hk_norm, x0_distance, x0_norm
from .config import Scenario
from .errors import (
    DomainError,
    NoContraction,
    NondegeneracyError,
    PreconditionError,
)
from .forward import LinearProblem, solve_linear
from .mesh import Field, SpaceProfile, TimeSeries, diff_t, field_dx
from .nonlinearity import nu_star, phi_chain
from .observation import (
    H_DELTA,
    H_PSI0,
    H_SLOPE,
    PreconditionReport,
    Weight,
    check_preconditions,
    delta_of,
    psi_of,
    q_of,
    r_tilde_of,
    source_traces,
)

_DEFAULT_FLOOR = 1e-8


@dataclass
class GammaDiagnostics:
    iterations: int
    residuals: list[float]
    gamma: float


@dataclass
class Gamma1Result:
    F: TimeSeries
    nu: TimeSeries
    diagnostics: GammaDiagnostics


@dataclass
class Gamma2Result:
    F: TimeSeries
    diagnostics: GammaDiagnostics


@dataclass
class Gamma3Result:
    nu: TimeSeries
    diagnostics: GammaDiagnostics


@dataclass
class InverseResult:
    """Reconstructed controls with the solution and iteration diagnostics."""

    problem_id: int
    u: Field
    F: TimeSeries | None
    nu1: TimeSeries | None
    inner_iters: list[int]
    outer_residuals: list[float]
    precond: PreconditionReport
    contraction_gamma: float

    def __post_init__(self):
        wants_F = self.problem_id in (1, 2)
        wants_nu1 = self.problem_id in (1, 3)
        if wants_F != (self.F is not None) or wants_nu1 != (self.nu1 is not None):
            raise DomainError(
                f"problem {self.problem_id} result must carry exactly its controls"
            )


def _weighted_distance(pairs, gamma: float) -> float:
    """Sum of weighted L2 norms of the component differences."""
    total = 0.0
    for a, b in pairs:
        total += weighted_hk_norm(TimeSeries(a.grid, a.values - b.values), 0, gamma)
    return total


def _run_fixed_point(apply_update, start, gamma, tol, max_iter):
    """Iterate an update map to its fixed point in the weighted metric."""
    current = start
    residuals: list[float] = []
    for _ in range(max_iter):
        new = apply_update(current)
        dist = _weighted_distance(list(zip(new, current)), gamma)
        residuals.append(dist)
        current = new
        if dist < tol:
            return current, residuals
        if not np.isfinite(dist):
            raise NoContraction(
                "inner fixed-point residual became non-finite", residuals=residuals
            )
    tail = residuals[-3:]
    stalled = not all(a > b for a, b in zip(tail, tail[1:]))
    raise NoContraction(
        f"inner fixed-point iteration did not reach tol {tol:g} in {max_iter} "
        f"iterations (last residuals {tail}); "
        + (
            "residuals stalled: increase the weight rate gamma or reduce T"
            if stalled
            else "residuals still decreasing; raise max_iter"
        ),
        residuals=residuals,
    )


def gamma1(
    phi1t: TimeSeries,
    phi2t: TimeSeries,
    w1: Weight,
    w2: Weight,
    h: Field,
    b: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    gamma: float | None = None,
    delta_floor: float = _DEFAULT_FLOOR,
) -> Gamma1Result:
    """Recover the source amplitude and boundary flux from two reduced
    measurements (measurements with the background response already removed).
    """
    grid = phi1t.grid
    gamma = 16.0 / grid.T if gamma is None else float(gamma)
    psi1, psi2 = psi_of(h, w1), psi_of(h, w2)
    delta = delta_of(psi1, psi2, w1, w2).values
    dmin = float(np.abs(delta).min())
    if dmin < delta_floor:
        raise NondegeneracyError(
            H_DELTA,
            f"min |Delta(t)| = {dmin:.3e} is below the floor {delta_floor:.1e}; "
            "the two-control inversion is not solvable on this data",
        )
    dphi1 = diff_t(phi1t, 1).values
    dphi2 = diff_t(phi2t, 1).values
    zeros = TimeSeries.zeros(grid)
    zero_profile = SpaceProfile.zeros(grid)

    def controls_from(z1, z2):
        F = (z1 * w2.dprime_at_R - z2 * w1.dprime_at_R) / delta
        nu = (psi1.values * z2 - psi2.values * z1) / delta
        return TimeSeries(grid, F), TimeSeries(grid, nu)

    def update(pair):
        F, nu = pair
        forced = Field(grid, F.values[:, None] * h.values)
        u, _ = solve_linear(
            LinearProblem(grid, b, zero_profile, zeros, zeros, nu, f0=forced)
        )
        z1 = dphi1 - r_tilde_of(u, w1).values
        z2 = dphi2 - r_tilde_of(u, w2).values
        return controls_from(z1, z2)

    start = controls_from(dphi1, dphi2)
    (F, nu), residuals = _run_fixed_point(update, start, gamma, tol, max_iter)
    return Gamma1Result(F, nu, GammaDiagnostics(len(residuals), residuals, gamma))


def gamma2(
    phi0t: TimeSeries,
    w0: Weight,
    h: Field,
    b: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    gamma: float | None = None,
    delta_floor: float = _DEFAULT_FLOOR,
) -> Gamma2Result:
    """Recover the source amplitude from one reduced measurement."""
    grid = phi0t.grid
    gamma = 16.0 / grid.T if gamma is None else float(gamma)
    psi0 = psi_of(h, w0).values
    pmin = float(np.abs(psi0).min())
    if pmin < delta_floor:
        raise NondegeneracyError(
            H_PSI0,
            f"min |psi0(t)| = {pmin:.3e} is below the floor {delta_floor:.1e}",
        )
    dphi = diff_t(phi0t, 1).values
    zeros = TimeSeries.zeros(grid)
    zero_profile = SpaceProfile.zeros(grid)

    def update(pair):
        (F,) = pair
        forced = Field(grid, F.values[:, None] * h.values)
        u, _ = solve_linear(
            LinearProblem(grid, b, zero_profile, zeros, zeros, zeros, f0=forced)
        )
        return (TimeSeries(grid, (dphi - r_tilde_of(u, w0).values) / psi0),)

    start = (TimeSeries(grid, dphi / psi0),)
    (F,), residuals = _run_fixed_point(update, start, gamma, tol, max_iter)
    return Gamma2Result(F, GammaDiagnostics(len(residuals), residuals, gamma))


def gamma3(
    phi0t: TimeSeries,
    w0: Weight,
    b: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    gamma: float | None = None,
    delta_floor: float = _DEFAULT_FLOOR,
) -> Gamma3Result:
    """Recover the boundary flux from one reduced measurement."""
    grid = phi0t.grid
    gamma = 16.0 / grid.T if gamma is None else float(gamma)
    slope = w0.dprime_at_R
    if abs(slope) < delta_floor:
        raise NondegeneracyError(
            H_SLOPE,
            f"|omega'(R)| = {abs(slope):.3e} is below the floor {delta_floor:.1e}",
        )
    dphi = diff_t(phi0t, 1).values
    zeros = TimeSeries.zeros(grid)
    zero_profile = SpaceProfile.zeros(grid)

    def update(pair):
        (nu,) = pair
        u, _ = solve_linear(
            LinearProblem(grid, b, zero_profile, zeros, zeros, nu)
        )
        return (TimeSeries(grid, (dphi - r_tilde_of(u, w0).values) / slope),)

    start = (TimeSeries(grid, dphi / slope),)
    (nu,), residuals = _run_fixed_point(update, start, gamma, tol, max_iter)
    return Gamma3Result(nu, GammaDiagnostics(len(residuals), residuals, gamma))


# ---------------------------------------------------------------------------
# nonlinear outer maps

def _gate_preconditions(scenario: Scenario, problem_id: int) -> PreconditionReport:
    report = check_preconditions(scenario, problem_id)
    if report.hard_failures:
        first = report.hard_failures[0]
        raise PreconditionError(
            first["hypothesis"],
            f"hard precondition failed: {first['hypothesis']} ({first['detail']})",
        )
    return report


def _effective_f1(scenario: Scenario, v: Field) -> Field:
    """User flux source minus the nonlinearity evaluated on the iterate."""
    with np.errstate(over="ignore", invalid="ignore"):
        gv = scenario.g.eval(0, v.values)
    if not np.isfinite(gv).all():
        raise NoContraction(
            "nonlinear term overflowed in the outer iteration: the smallness "
            "hypothesis is violated"
        )
    base = scenario.f1.values if scenario.f1 is not None else 0.0
    return Field(scenario.grid, base - gv)


def _outer_loop(scenario: Scenario, one_pass, tol, max_outer, smallness_msg):
    """Picard iteration on the solution field; one_pass maps v to (u, extras)."""
    grid = scenario.grid
    v = Field.zeros(grid)
    outer_residuals: list[float] = []
    inner_iters: list[int] = []
    result = None
    for _ in range(max_outer):
        u, extras, inner_count = one_pass(v)
        inner_iters.append(inner_count)
        with np.errstate(over="ignore", invalid="ignore"):
            dist = x0_distance(u, v) / max(1.0, x0_norm(u))
        if not np.isfinite(dist):
            raise NoContraction(
                "outer Picard residual became non-finite; " + smallness_msg,
                residuals=outer_residuals,
            )
        outer_residuals.append(dist)
        v = u
        result = extras
        if dist < tol:
            return u, result, inner_iters, outer_residuals
        if len(outer_residuals) >= 4 and outer_residuals[-1] > 1e3 * (
            outer_residuals[0] + 1.0
        ):
            if outer_residuals[-1] > outer_residuals[-2] > outer_residuals[-3]:
                raise NoContraction(
                    "outer Picard residuals are blowing up; " + smallness_msg,
                    residuals=outer_residuals,
                )
    tail = outer_residuals[-3:]
    stalled = not all(a > b for a, b in zip(tail, tail[1:]))
    raise NoContraction(
        f"outer Picard iteration did not reach tol {tol:g} in {max_outer} "
        f"iterations (last residuals {tail}); "
        + (smallness_msg if stalled else "residuals still decreasing; raise max_outer"),
        residuals=outer_residuals,
    )


def solve_inverse1(
    scenario: Scenario,
    tol: float = 1e-8,
    max_outer: int = 50,
    inner_tol: float = 1e-10,
    max_inner: int = 200,
    gamma: float | None = None,
) -> InverseResult:
    """Recover the source amplitude and the boundary flux from two measurements."""
    if scenario.phi is None or len(scenario.phi) < 2:
        raise DomainError("problem 1 needs two measurement series")
    report = _gate_preconditions(scenario, 1)
    grid, k = scenario.grid, scenario.k
    gamma = scenario.solver.resolved_gamma(grid.T) if gamma is None else gamma
    w1, w2 = scenario.weights[0], scenario.weights[1]
    chain = phi_chain(scenario.u0, source_traces(scenario, k), scenario.g, scenario.b, k)
    star = nu_star(chain, k, grid)
    smallness_msg = (
        f"smallness constant {report.smallness_kind} = {report.smallness_value:.3g} "
        "is too large for this horizon; reduce data amplitudes or T"
    )

    def one_pass(v):
        f1_eff = _effective_f1(scenario, v)
        w, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0, star,
                f0=scenario.h0, f1=f1_eff,
            )
        )
        reduced1 = scenario.phi[0] - q_of(w, w1)
        reduced2 = scenario.phi[1] - q_of(w, w2)
        inner = gamma1(
            reduced1, reduced2, w1, w2, scenario.h, scenario.b,
            tol=inner_tol, max_iter=max_inner, gamma=gamma,
            delta_floor=scenario.delta_floor,
        )
        nu1 = inner.nu + star
        forced = Field(grid, scenario.h0.values + inner.F.values[:, None] * scenario.h.values)
        u, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0, nu1,
                f0=forced, f1=f1_eff,
            )
        )
        return u, (inner.F, nu1), inner.diagnostics.iterations

    u, (F, nu1), inner_iters, outer_residuals = _outer_loop(
        scenario, one_pass, tol, max_outer, smallness_msg
    )
    return InverseResult(1, u, F, nu1, inner_iters, outer_residuals, report, gamma)


def solve_inverse2(
    scenario: Scenario,
    tol: float = 1e-8,
    max_outer: int = 50,
    inner_tol: float = 1e-10,
    max_inner: int = 200,
    gamma: float | None = None,
) -> InverseResult:
    """Recover the source amplitude; the boundary flux is given data."""
    if scenario.phi is None or len(scenario.phi) < 1:
        raise DomainError("problem 2 needs a measurement series")
    if scenario.nu1 is None:
        raise DomainError("problem 2 needs boundary flux data nu1")
    report = _gate_preconditions(scenario, 2)
    grid = scenario.grid
    gamma = scenario.solver.resolved_gamma(grid.T) if gamma is None else gamma
    w0 = scenario.weights[0]
    smallness_msg = (
        f"smallness constant {report.smallness_kind} = {report.smallness_value:.3g} "
        "is too large for this horizon; reduce data amplitudes or T"
    )

    def one_pass(v):
        f1_eff = _effective_f1(scenario, v)
        w, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0,
                scenario.nu1, f0=scenario.h0, f1=f1_eff,
            )
        )
        reduced = scenario.phi[0] - q_of(w, w0)
        inner = gamma2(
            reduced, w0, scenario.h, scenario.b,
            tol=inner_tol, max_iter=max_inner, gamma=gamma,
            delta_floor=scenario.delta_floor,
        )
        forced = Field(grid, scenario.h0.values + inner.F.values[:, None] * scenario.h.values)
        u, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0,
                scenario.nu1, f0=forced, f1=f1_eff,
            )
        )
        return u, inner.F, inner.diagnostics.iterations

    u, F, inner_iters, outer_residuals = _outer_loop(
        scenario, one_pass, tol, max_outer, smallness_msg
    )
    return InverseResult(2, u, F, None, inner_iters, outer_residuals, report, gamma)


def solve_inverse3(
    scenario: Scenario,
    tol: float = 1e-8,
    max_outer: int = 50,
    inner_tol: float = 1e-10,
    max_inner: int = 200,
    gamma: float | None = None,
) -> InverseResult:
    """Recover the boundary flux; the source is given in full (h0 slot)."""
    if scenario.phi is None or len(scenario.phi) < 1:
        raise DomainError("problem 3 needs a measurement series")
    report = _gate_preconditions(scenario, 3)
    grid, k = scenario.grid, scenario.k
    gamma = scenario.solver.resolved_gamma(grid.T) if gamma is None else gamma
    w0 = scenario.weights[0]
    chain = phi_chain(scenario.u0, source_traces(scenario, k), scenario.g, scenario.b, k)
    star = nu_star(chain, k, grid)
    smallness_msg = (
        f"smallness constant {report.smallness_kind} = {report.smallness_value:.3g} "
        "is too large for this horizon; reduce data amplitudes or T"
    )

    def one_pass(v):
        f1_eff = _effective_f1(scenario, v)
        w, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0, star,
                f0=scenario.h0, f1=f1_eff,
            )
        )
        reduced = scenario.phi[0] - q_of(w, w0)
        inner = gamma3(
            reduced, w0, scenario.b,
            tol=inner_tol, max_iter=max_inner, gamma=gamma,
            delta_floor=scenario.delta_floor,
        )
        nu1 = inner.nu + star
        u, _ = solve_linear(
            LinearProblem(
                grid, scenario.b, scenario.u0, scenario.mu0, scenario.nu0, nu1,
                f0=scenario.h0, f1=f1_eff,
            )
        )
        return u, nu1, inner.diagnostics.iterations

    u, nu1, inner_iters, outer_residuals = _outer_loop(
        scenario, one_pass, tol, max_outer, smallness_msg
    )
    return InverseResult(3, u, None, nu1, inner_iters, outer_residuals, report, gamma)


def solve_inverse(scenario: Scenario, problem_id: int, **kwargs) -> InverseResult:
    solver = {1: solve_inverse1, 2: solve_inverse2, 3: solve_inverse3}
    if problem_id not in solver:
        raise DomainError(f"inverse problem id must be 1..3, got {problem_id}")
    return solver[problem_id](scenario, **kwargs)


# ---------------------------------------------------------------------------
# contraction probe

def contraction_probe(
    problem_id: int, scenario: Scenario, gammas: list[float]
) -> list[dict]:
    """Empirical contraction factor of the inner update per weight rate.

    Applies the update once to two perturbed starts and reports the weighted
    distance ratio after/before for each gamma.  The update is affine, so the
    constant part cancels and the factor measures its linear part.
    """
    grid = scenario.grid
    b = scenario.b
    zeros = TimeSeries.zeros(grid)
    zero_profile = SpaceProfile.zeros(grid)
    bump = TimeSeries(grid, grid.t / grid.T)  # vanishes at t=0

    if problem_id == 1:
        w1, w2 = scenario.weights[0], scenario.weights[1]
        psi1, psi2 = psi_of(scenario.h, w1), psi_of(scenario.h, w2)
        delta = delta_of(psi1, psi2, w1, w2).values

        def apply(pair):
            F, nu = pair
            forced = Field(grid, F.values[:, None] * scenario.h.values)
            u, _ = solve_linear(
                LinearProblem(grid, b, zero_profile, zeros, zeros, nu, f0=forced)
            )
            z1 = -r_tilde_of(u, w1).values
            z2 = -r_tilde_of(u, w2).values
            return (
                TimeSeries(grid, (z1 * w2.dprime_at_R - z2 * w1.dprime_at_R) / delta),
                TimeSeries(grid, (psi1.values * z2 - psi2.values * z1) / delta),
            )

        start_a = (zeros, zeros)
        start_b = (bump, bump)
    elif problem_id == 2:
        w0 = scenario.weights[0]
        psi0 = psi_of(scenario.h, w0).values

        def apply(pair):
            (F,) = pair
            forced = Field(grid, F.values[:, None] * scenario.h.values)
            u, _ = solve_linear(
                LinearProblem(grid, b, zero_profile, zeros, zeros, zeros, f0=forced)
            )
            return (TimeSeries(grid, -r_tilde_of(u, w0).values / psi0),)

        start_a = (zeros,)
        start_b = (bump,)
    elif problem_id == 3:
        w0 = scenario.weights[0]

        def apply(pair):
            (nu,) = pair
            u, _ = solve_linear(
                LinearProblem(grid, b, zero_profile, zeros, zeros, nu)
            )
            return (TimeSeries(grid, -r_tilde_of(u, w0).values / w0.dprime_at_R),)

        start_a = (zeros,)
        start_b = (bump,)
    else:
        raise DomainError(f"probe supports problems 1..3, got {problem_id}")

    image_a = apply(start_a)
    image_b = apply(start_b)
    rows = []
    for gamma in gammas:
        before = _weighted_distance(list(zip(start_a, start_b)), float(gamma))
        after = _weighted_distance(list(zip(image_a, image_b)), float(gamma))
        factor = 0.0 if before == 0.0 else after / before
        rows.append({"gamma": float(gamma), "factor": float(factor)})
    return rows
