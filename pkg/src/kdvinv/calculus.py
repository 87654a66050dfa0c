"""Discrete norms: solution and source space norms, fractional and weighted
Sobolev norms on (0,T), and the interpolation-constant diagnostic.

Conventions: a Sobolev norm of integer order s is the square root of the sum
of squared L2 norms of the derivatives up to order s.  The composite norms
below add their summands plainly (no outer square root over summands), which
is what makes a NormReport's parts sum to its value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .mesh import (
    Field,
    Grid,
    SpaceProfile,
    TimeSeries,
    _deriv_samples,
    _integrate_samples,
    diff_t,
    field_dt,
    field_dx,
    integrate_space,
    integrate_time,
    space_derivative,
)


@dataclass
class NormReport:
    """A norm value with its labeled summands (parts sum to value)."""

    value: float
    parts: dict[str, float] = field(default_factory=dict)


def l2_space(p: SpaceProfile) -> float:
    return float(np.sqrt(max(integrate_space(p * p), 0.0)))


def l2_time(s: TimeSeries) -> float:
    v = _integrate_samples(s.values**2, s.grid.dt)
    return float(np.sqrt(max(v, 0.0)))


def l2_qt(u: Field) -> float:
    """L2 norm over the full rectangle (0,T) x (0,R)."""
    per_row = _integrate_samples(u.values**2, u.grid.dx, axis=1)
    return float(np.sqrt(max(integrate_time(per_row, u.grid), 0.0)))


def hs_space_norm(p: SpaceProfile, order: int) -> float:
    """Integer-order Sobolev norm on (0,R)."""
    total = 0.0
    for j in range(order + 1):
        total += l2_space(space_derivative(p, j)) ** 2
    return float(np.sqrt(total))


def xk_norm(u: Field, k: int, traces: list[SpaceProfile]) -> NormReport:
    """Solution-space norm of order k.

    Sums, for m = 0..k, the max-in-time L2 norm of the m-th time derivative
    and the L2(Q_T) norm of its x-derivative, plus the Sobolev norms of the
    supplied initial traces (trace m measured in order 3(k-m)).
    """
    if len(traces) != k:
        raise DomainError(f"xk_norm needs {k} traces, got {len(traces)}")
    parts: dict[str, float] = {}
    for m in range(k + 1):
        um = field_dt(u, m)
        row_l2 = np.sqrt(
            np.maximum(_integrate_samples(um.values**2, u.grid.dx, axis=1), 0.0)
        )
        parts[f"dt{m}_max_l2"] = float(row_l2.max())
        parts[f"dt{m}_dx_l2_qt"] = l2_qt(field_dx(um, 1))
    for m in range(k):
        parts[f"trace{m}_h{3 * (k - m)}"] = hs_space_norm(traces[m], 3 * (k - m))
    return NormReport(value=float(sum(parts.values())), parts=parts)


def mk_norm(f: Field, k: int, traces: list[SpaceProfile]) -> NormReport:
    """Source-space norm of order k (traces measured in order 3(k-m-1))."""
    if len(traces) != k:
        raise DomainError(f"mk_norm needs {k} traces, got {len(traces)}")
    parts: dict[str, float] = {}
    for m in range(k + 1):
        parts[f"dt{m}_l2_qt"] = l2_qt(field_dt(f, m))
    for m in range(k):
        parts[f"trace{m}_h{3 * (k - m - 1)}"] = hs_space_norm(traces[m], 3 * (k - m - 1))
    return NormReport(value=float(sum(parts.values())), parts=parts)


def hs_time_norm(s: TimeSeries, k: int, frac: float) -> float:
    """Fractional Sobolev norm of order k + frac on (0,T).

    The fractional part is the Slobodeckij double integral of the k-th
    derivative, evaluated by a trapezoid double sum over grid nodes with the
    diagonal skipped (the integrand is 0/0 there).  frac = 0 returns the plain
    integer-order norm.
    """
    if not 0.0 <= frac < 1.0:
        raise DomainError(f"fractional exponent must lie in [0,1), got {frac}")
    total = 0.0
    for m in range(k + 1):
        total += l2_time(diff_t(s, m)) ** 2
    if frac > 0.0:
        sk = diff_t(s, k).values
        t = s.grid.t
        w = np.full(t.size, s.grid.dt)
        w[0] = w[-1] = s.grid.dt / 2.0
        dv = sk[:, None] - sk[None, :]
        dt_ = np.abs(t[:, None] - t[None, :])
        np.fill_diagonal(dt_, 1.0)  # placeholder; diagonal excluded below
        integrand = dv**2 / dt_ ** (1.0 + 2.0 * frac)
        np.fill_diagonal(integrand, 0.0)
        total += float((w[:, None] * w[None, :] * integrand).sum())
    return float(np.sqrt(total))


def weighted_hk_norm(s: TimeSeries, k: int, gamma: float) -> float:
    """Sum over m <= k of the L2 norms of e^(-gamma t) times s^(m)."""
    if s.grid.M < 2 * k + 2:
        raise DomainError(f"time grid too coarse for order {k} (M={s.grid.M})")
    decay = np.exp(-gamma * s.grid.t)
    total = 0.0
    for m in range(k + 1):
        weighted = TimeSeries(s.grid, decay * diff_t(s, m).values)
        total += l2_time(weighted)
    return float(total)


def interp_bound_ratio(p: SpaceProfile) -> float:
    """sup |p| divided by (||p'|| + ||p||): probes the embedding constant."""
    den = l2_space(diff_x_first(p)) + l2_space(p)
    if den == 0.0:
        raise DomainError("interp_bound_ratio undefined for the zero profile")
    return float(np.abs(p.values).max() / den)


def diff_x_first(p: SpaceProfile) -> SpaceProfile:
    return SpaceProfile(p.grid, _deriv_samples(p.values, p.grid.dx, 1))


def x0_distance(a: Field, b: Field) -> float:
    """Order-zero solution-space distance: max-in-time L2 plus gradient L2(Q_T)."""
    d = Field(a.grid, a.values - b.values)
    row_l2 = np.sqrt(np.maximum(_integrate_samples(d.values**2, d.grid.dx, axis=1), 0.0))
    return float(row_l2.max()) + l2_qt(field_dx(d, 1))


def x0_norm(u: Field) -> float:
    return x0_distance(u, Field.zeros(u.grid))
