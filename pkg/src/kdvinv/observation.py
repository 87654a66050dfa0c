"""Integral observation functionals, the derivative identity they satisfy on
solver output, weight validation, nondegeneracy minima, compatibility checks,
and the smallness constants gating the nonlinear theory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .calculus import hs_space_norm, hs_time_norm, l2_time, mk_norm
from .errors import DomainError
from .mesh import (
    Field,
    SpaceProfile,
    TimeSeries,
    _integrate_samples,
    diff_t,
    diff_x,
    field_dt,
    field_dx,
    integrate_space,
)
from .nonlinearity import phi_chain

if TYPE_CHECKING:  # pragma: no cover
    from .config import Scenario
    from .forward import LinearProblem

_OMEGA_TOL = 1e-8

# stable hypothesis names used in reports and errors
H_WEIGHT = "weight_endpoint_conditions"
H_DELTA = "nondegeneracy_determinant"
H_PSI0 = "nondegeneracy_psi0"
H_SLOPE = "nondegeneracy_weight_slope"
H_COMPAT_MEAS = "initial_compatibility_measurement"
H_COMPAT_BOUNDARY = "initial_compatibility_boundary"
H_COMPAT_FLUX = "initial_compatibility_flux"


@dataclass
class Weight:
    """An observation weight with the endpoint data the identity needs.

    ``combo`` caches b*w' + w'''.  Endpoint derivatives may come from the
    scenario (analytic) or from one-sided stencils; ``endpoint_from_stencil``
    records which, since the determinant is sensitive to w'(R) error.
    """

    profile: SpaceProfile
    dprime_at_R: float
    dsecond_at_0: float
    dsecond_at_R: float
    combo: SpaceProfile
    dprime: SpaceProfile
    endpoint_from_stencil: bool = False

    def endpoint_residuals(self) -> dict[str, float]:
        """Absolute residuals of the required endpoint conditions."""
        w = self.profile.values
        dw = self.dprime.values
        return {
            "omega_at_0": abs(float(w[0])),
            "omega_prime_at_0": abs(float(dw[0])),
            "omega_at_R": abs(float(w[-1])),
        }

    def conditions_ok(self, tol: float = _OMEGA_TOL) -> bool:
        scale = max(1.0, float(np.abs(self.profile.values).max()))
        return all(r <= tol * scale for r in self.endpoint_residuals().values())


def make_weight(
    profile: SpaceProfile,
    b: float,
    dprime_at_R: float | None = None,
    dsecond_at_0: float | None = None,
    dsecond_at_R: float | None = None,
) -> Weight:
    """Assemble a Weight, filling missing endpoint values from stencils."""
    d1 = diff_x(profile, 1)
    d2 = diff_x(profile, 2)
    d3 = diff_x(profile, 3)
    from_stencil = dprime_at_R is None or dsecond_at_0 is None or dsecond_at_R is None
    return Weight(
        profile=profile,
        dprime_at_R=float(d1.values[-1] if dprime_at_R is None else dprime_at_R),
        dsecond_at_0=float(d2.values[0] if dsecond_at_0 is None else dsecond_at_0),
        dsecond_at_R=float(d2.values[-1] if dsecond_at_R is None else dsecond_at_R),
        combo=b * d1 + d3,
        dprime=d1,
        endpoint_from_stencil=from_stencil,
    )


def q_of(u: Field, w: Weight) -> TimeSeries:
    """Observation series: integral of u(t,.) against the weight."""
    vals = _integrate_samples(u.values * w.profile.values[None, :], u.grid.dx, axis=1)
    return TimeSeries(u.grid, vals)


def psi_of(h: Field, w: Weight) -> TimeSeries:
    """Sensitivity series of the source carrier against the weight."""
    return q_of(h, w)


def delta_of(psi1: TimeSeries, psi2: TimeSeries, w1: Weight, w2: Weight) -> TimeSeries:
    """2x2 sensitivity determinant pairing each psi with the other's slope."""
    if not psi1.grid.compatible(psi2.grid):
        raise DomainError("psi series live on different grids")
    vals = psi1.values * w2.dprime_at_R - psi2.values * w1.dprime_at_R
    return TimeSeries(psi1.grid, vals)


def r_of(u: Field, w: Weight, m: int, data: "LinearProblem") -> TimeSeries:
    """Right side of the observation derivative identity at order m.

    On solver output this equals the (m+1)-st derivative of q_of(u, w) up to
    discretization error.
    """
    grid = u.grid
    dmu0 = diff_t(data.mu0, m).values
    dnu0 = diff_t(data.nu0, m).values
    dnu1 = diff_t(data.nu1, m).values
    um = field_dt(u, m).values
    bulk = um * w.combo.values[None, :]
    if data.f0 is not None:
        bulk = bulk + field_dt(data.f0, m).values * w.profile.values[None, :]
    if data.f1 is not None:
        bulk = bulk - field_dt(data.f1, m).values * w.dprime.values[None, :]
    vals = (
        dnu1 * w.dprime_at_R
        + dmu0 * w.dsecond_at_0
        - dnu0 * w.dsecond_at_R
        + _integrate_samples(bulk, grid.dx, axis=1)
    )
    return TimeSeries(grid, vals)


def r_tilde_of(u: Field, w: Weight) -> TimeSeries:
    """Interior part of the identity only: integral of u against combo."""
    vals = _integrate_samples(u.values * w.combo.values[None, :], u.grid.dx, axis=1)
    return TimeSeries(u.grid, vals)


# ---------------------------------------------------------------------------
# precondition checking

@dataclass
class CompatEntry:
    hypothesis: str
    kind: str
    m: int
    j: int | None
    lhs: float
    rhs: float
    residual: float
    tol: float
    ok: bool


@dataclass
class PreconditionReport:
    """Outcome of validating a scenario against the solvability hypotheses.

    Weight and nondegeneracy failures are hard (inversion refuses to run);
    compatibility failures are warnings carrying their residuals.
    """

    problem_id: int
    omega_ok: list[bool] = field(default_factory=list)
    omega_residuals: list[dict[str, float]] = field(default_factory=list)
    compat: list[CompatEntry] = field(default_factory=list)
    delta_min: float | None = None
    delta_kind: str = "none"
    smallness_value: float = 0.0
    smallness_kind: str = "none"
    hard_failures: list[dict] = field(default_factory=list)
    warnings: list[dict] = field(default_factory=list)

    @property
    def compat_ok(self) -> dict[str, bool]:
        table: dict[str, bool] = {}
        for e in self.compat:
            key = f"{e.kind}_m{e.m}" + (f"_j{e.j}" if e.j is not None else "")
            table[key] = e.ok
        return table

    def to_json_dict(self) -> dict:
        return {
            "problem_id": self.problem_id,
            "omega_ok": list(self.omega_ok),
            "omega_residuals": self.omega_residuals,
            "compat_ok": self.compat_ok,
            "compat_residuals": [
                {
                    "hypothesis": e.hypothesis,
                    "kind": e.kind,
                    "m": e.m,
                    "j": e.j,
                    "lhs": e.lhs,
                    "rhs": e.rhs,
                    "residual": e.residual,
                    "tol": e.tol,
                    "ok": e.ok,
                }
                for e in self.compat
            ],
            "delta_min": self.delta_min,
            "delta_kind": self.delta_kind,
            "smallness_value": self.smallness_value,
            "smallness_kind": self.smallness_kind,
            "hard_failures": self.hard_failures,
            "warnings": self.warnings,
        }


def _field_time_traces(f: Field, count: int) -> list[SpaceProfile]:
    """Initial traces of the time derivatives of a sampled field."""
    traces = []
    for m in range(count):
        traces.append(field_dt(f, m).row(0))
    return traces


def source_traces(scenario: "Scenario", count: int) -> list[SpaceProfile]:
    """Initial traces of d_t^m (f0 + d_x f1) for the compatibility chain."""
    total = scenario.h0
    if scenario.f1 is not None:
        total = total + field_dx(scenario.f1, 1)
    return _field_time_traces(total, count)


def check_preconditions(scenario: "Scenario", problem_id: int) -> PreconditionReport:
    """Validate weights, compatibility, nondegeneracy, and compute smallness.

    problem_id 1..3 are the inverse problems; 4 is the plain forward problem
    (no weights, no nondegeneracy).
    """
    if problem_id not in (1, 2, 3, 4):
        raise DomainError(f"problem_id must be 1..4, got {problem_id}")
    grid, k = scenario.grid, scenario.k
    report = PreconditionReport(problem_id=problem_id)

    weights = {1: scenario.weights[:2], 2: scenario.weights[:1], 3: scenario.weights[:1], 4: []}[
        problem_id
    ]
    if problem_id == 1 and len(scenario.weights) < 2:
        raise DomainError("problem 1 needs two observation weights")
    if problem_id in (2, 3) and len(scenario.weights) < 1:
        raise DomainError(f"problem {problem_id} needs an observation weight")

    for idx, w in enumerate(weights):
        residuals = w.endpoint_residuals()
        ok = w.conditions_ok()
        report.omega_ok.append(ok)
        report.omega_residuals.append(residuals)
        if not ok:
            report.hard_failures.append(
                {
                    "hypothesis": H_WEIGHT,
                    "detail": f"weight {idx}: {residuals}",
                }
            )

    # compatibility chain from the initial profile and the known source part
    chain = phi_chain(
        scenario.u0, source_traces(scenario, k), scenario.g, scenario.b, k
    )
    compat_tol = scenario.compat_tol
    if compat_tol is None:
        compat_tol = 10.0 * (grid.dx**2 + grid.dt**2)

    def add_entry(hypothesis, kind, m, j, lhs, rhs):
        scale = max(1.0, abs(lhs), abs(rhs))
        tol = compat_tol * scale
        residual = abs(lhs - rhs)
        ok = residual <= tol
        report.compat.append(
            CompatEntry(hypothesis, kind, m, j, lhs, rhs, residual, tol, ok)
        )
        if not ok:
            report.warnings.append(
                {
                    "hypothesis": hypothesis,
                    "detail": f"{kind} m={m}" + (f" j={j}" if j is not None else ""),
                    "residual": residual,
                    "tol": tol,
                }
            )

    for m in range(k):
        add_entry(
            H_COMPAT_BOUNDARY, "boundary_left", m, None,
            float(diff_t(scenario.mu0, m).values[0]),
            float(chain.profiles[m].values[0]),
        )
        add_entry(
            H_COMPAT_BOUNDARY, "boundary_right", m, None,
            float(diff_t(scenario.nu0, m).values[0]),
            float(chain.profiles[m].values[-1]),
        )
        if scenario.nu1 is not None and problem_id in (2, 4):
            add_entry(
                H_COMPAT_FLUX, "boundary_flux", m, None,
                float(diff_t(scenario.nu1, m).values[0]),
                float(diff_x(chain.profiles[m], 1).values[-1]),
            )

    if problem_id != 4 and scenario.phi is not None:
        for j, (phi, w) in enumerate(zip(scenario.phi, weights)):
            for m in range(k + 1):
                add_entry(
                    H_COMPAT_MEAS, "measurement", m, j,
                    float(diff_t(phi, m).values[0]),
                    integrate_space(chain.profiles[m] * w.profile),
                )

    # nondegeneracy
    floor = scenario.delta_floor
    if problem_id == 1:
        if scenario.h is None:
            raise DomainError("problem 1 needs the source carrier h")
        psi1 = psi_of(scenario.h, weights[0])
        psi2 = psi_of(scenario.h, weights[1])
        delta = delta_of(psi1, psi2, weights[0], weights[1])
        report.delta_min = float(np.abs(delta.values).min())
        report.delta_kind = "min_abs_delta"
        if report.delta_min < floor:
            report.hard_failures.append(
                {
                    "hypothesis": H_DELTA,
                    "detail": f"min |Delta(t)| = {report.delta_min:.3e} < {floor:.1e}",
                }
            )
    elif problem_id == 2:
        if scenario.h is None:
            raise DomainError("problem 2 needs the source carrier h")
        psi0 = psi_of(scenario.h, weights[0])
        report.delta_min = float(np.abs(psi0.values).min())
        report.delta_kind = "min_abs_psi0"
        if report.delta_min < floor:
            report.hard_failures.append(
                {
                    "hypothesis": H_PSI0,
                    "detail": f"min |psi0(t)| = {report.delta_min:.3e} < {floor:.1e}",
                }
            )
    elif problem_id == 3:
        report.delta_min = abs(weights[0].dprime_at_R)
        report.delta_kind = "abs_weight_slope_at_R"
        if report.delta_min < floor:
            report.hard_failures.append(
                {
                    "hypothesis": H_SLOPE,
                    "detail": f"|omega'(R)| = {report.delta_min:.3e} < {floor:.1e}",
                }
            )

    report.smallness_kind, report.smallness_value = _smallness(scenario, problem_id)
    return report


def _smallness(scenario: "Scenario", problem_id: int) -> tuple[str, float]:
    """The data-size constant whose smallness the contraction regime needs."""
    k = scenario.k
    total = hs_space_norm(scenario.u0, 3 * k)
    total += hs_time_norm(scenario.mu0, k, 1.0 / 3.0)
    total += hs_time_norm(scenario.nu0, k, 1.0 / 3.0)
    if problem_id in (2, 4) and scenario.nu1 is not None:
        total += hs_time_norm(scenario.nu1, k, 0.0)
    total += mk_norm(scenario.h0, k, _field_time_traces(scenario.h0, k)).value
    if problem_id != 4 and scenario.phi is not None:
        for phi in scenario.phi[: (2 if problem_id == 1 else 1)]:
            total += l2_time(diff_t(phi, k + 1))
    kind = {1: "c1", 2: "c2", 3: "c3", 4: "c4"}[problem_id]
    return kind, float(total)
