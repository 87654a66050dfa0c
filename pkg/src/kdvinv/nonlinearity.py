"""Flux nonlinearities and the machinery built on them: time-derivative
expansions of g(u), the compatibility chains, the data magnitudes kappa and
rho, and the boundary-flux Taylor polynomial.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError
from .calculus import hs_space_norm
from .mesh import Field, Grid, SpaceProfile, TimeSeries, diff_x

ArrayLike = np.ndarray


@dataclass
class Nonlinearity:
    """A flux function g with derivatives available up to ``arity``.

    ``eval(level, u)`` returns g^(level)(u) pointwise; level 0 is g itself.
    Registration enforces g(0) = 0 and g'(0) = 0, which is the normalization
    the transport term b*u_x already absorbs.
    """

    name: str
    arity: int
    _eval: Callable[[int, ArrayLike], ArrayLike]

    def __post_init__(self):
        z = np.zeros(1)
        if abs(float(self._eval(0, z)[0])) > 1e-12:
            raise DomainError(f"nonlinearity {self.name!r} must vanish at 0")
        if abs(float(self._eval(1, z)[0])) > 1e-12:
            raise DomainError(f"nonlinearity {self.name!r} must have zero slope at 0")

    def eval(self, level: int, u) -> np.ndarray:
        if not 0 <= level <= self.arity:
            raise DomainError(
                f"derivative level {level} outside 0..{self.arity} for {self.name!r}"
            )
        u = np.asarray(u, dtype=float)
        return np.asarray(self._eval(level, u), dtype=float) * np.ones_like(u)

    def of_field(self, u: Field) -> Field:
        return Field(u.grid, self.eval(0, u.values))


_BUILTIN_ARITY = 64


def _quadratic_eval(level: int, u):
    if level == 0:
        return 0.5 * u**2
    if level == 1:
        return u
    if level == 2:
        return np.ones_like(u)
    return np.zeros_like(u)


def _cubic_eval(level: int, u):
    if level == 0:
        return u**3 / 3.0
    if level == 1:
        return u**2
    if level == 2:
        return 2.0 * u
    if level == 3:
        return 2.0 * np.ones_like(u)
    return np.zeros_like(u)


def _cosh_eval(level: int, u):
    if level == 0:
        return np.cosh(u) - 1.0
    return np.cosh(u) if level % 2 == 0 else np.sinh(u)


def polynomial_nonlinearity(coeffs: Sequence[float]) -> Nonlinearity:
    """g(u) = sum(coeffs[i] * u**i); the two lowest coefficients must be 0."""
    c = np.asarray(list(coeffs), dtype=float)

    def ev(level, u):
        d = np.polynomial.polynomial.polyder(c, level) if level else c
        if d.size == 0:
            return np.zeros_like(u)
        return np.polynomial.polynomial.polyval(u, d)

    return Nonlinearity(name=f"poly{list(c)}", arity=_BUILTIN_ARITY, _eval=ev)


def builtin_nonlinearity(spec) -> Nonlinearity:
    """Resolve a config-level nonlinearity: a builtin name or coefficient list."""
    if isinstance(spec, Nonlinearity):
        return spec
    if isinstance(spec, str):
        table = {
            "kdv_quadratic": _quadratic_eval,
            "cubic": _cubic_eval,
            "cosh": _cosh_eval,
        }
        if spec not in table:
            raise DomainError(
                f"unknown nonlinearity {spec!r}; builtins: {sorted(table)}"
            )
        return Nonlinearity(name=spec, arity=_BUILTIN_ARITY, _eval=table[spec])
    if isinstance(spec, (list, tuple)):
        return polynomial_nonlinearity(spec)
    raise DomainError(f"cannot interpret nonlinearity spec {spec!r}")


ZERO_G = polynomial_nonlinearity([])


# ---------------------------------------------------------------------------
# time derivatives of g(u)
#
# The m-th time derivative of g(u(t)) expands into terms
# g^(l)(u) * prod_i d_t^{n_i} u with n_1 + ... + n_l = m.  The coefficient
# table is generated by differentiating the (m-1)-table once (product rule),
# which keeps it exactly aligned with how the compatibility recursion uses it.

@lru_cache(maxsize=None)
def _expansion_terms(m: int) -> tuple[tuple[int, tuple[int, ...], int], ...]:
    """Terms (level l, multiset of orders n_i, integer coefficient) for order m."""
    if m == 0:
        return ((0, (), 1),)
    terms: dict[tuple[int, tuple[int, ...]], int] = {}
    for level, orders, coeff in _expansion_terms(m - 1):
        key = (level + 1, tuple(sorted(orders + (1,))))
        terms[key] = terms.get(key, 0) + coeff
        for j in range(len(orders)):
            bumped = list(orders)
            bumped[j] += 1
            key = (level, tuple(sorted(bumped)))
            terms[key] = terms.get(key, 0) + coeff
    return tuple((l, ns, c) for (l, ns), c in sorted(terms.items()))


def dt_m_of_g(m: int, derivs: Sequence, g: Nonlinearity):
    """m-th time derivative of g(u), given u and its time derivatives.

    ``derivs[n]`` supplies d_t^n u for n = 0..m; all entries must be Fields or
    all SpaceProfiles, and the result has the same kind.
    """
    if len(derivs) < m + 1:
        raise DomainError(f"need derivatives up to order {m}, got {len(derivs)}")
    if g.arity < m:
        raise DomainError(f"nonlinearity {g.name!r} has arity {g.arity} < {m}")
    kind = type(derivs[0])
    grid = derivs[0].grid
    u = derivs[0].values
    out = np.zeros_like(u)
    for level, orders, coeff in _expansion_terms(m):
        term = g.eval(level, u)
        for n in orders:
            term = term * derivs[n].values
        out = out + coeff * term
    return kind(grid, out)


# ---------------------------------------------------------------------------
# compatibility chains

@dataclass
class CompatChain:
    """Formal initial traces of the time derivatives of a solution.

    ``profiles[m]`` is the m-th trace; profiles[0] is the initial condition.
    ``source_traces[m]`` is the m-th initial trace of the source term used to
    build the chain.
    """

    profiles: list[SpaceProfile]
    source_traces: list[SpaceProfile]


def phi_chain(
    u0: SpaceProfile,
    source_traces: Sequence[SpaceProfile],
    g: Nonlinearity,
    b: float,
    k: int,
) -> CompatChain:
    """Build the traces of d_t^m u at t=0 from the equation itself.

    Each step substitutes the equation: the next trace is the source trace
    minus the transport/dispersion terms minus the x-derivative of the
    expansion of d_t^(m-1) g(u) evaluated on the traces already built.
    """
    if len(source_traces) != k:
        raise DomainError(f"need {k} source traces, got {len(source_traces)}")
    profiles = [u0]
    for m in range(1, k + 1):
        linear = b * diff_x(profiles[m - 1], 1) + diff_x(profiles[m - 1], 3)
        nonlinear = diff_x(dt_m_of_g(m - 1, profiles[:m], g), 1)
        profiles.append(source_traces[m - 1] - linear - nonlinear)
    return CompatChain(profiles=profiles, source_traces=list(source_traces))


def phi_tilde_chain(
    u0: SpaceProfile,
    source_traces: Sequence[SpaceProfile],
    b: float,
    k: int,
) -> CompatChain:
    """The linear variant of the chain (no nonlinear term)."""
    if len(source_traces) != k:
        raise DomainError(f"need {k} source traces, got {len(source_traces)}")
    profiles = [u0]
    for m in range(1, k + 1):
        linear = b * diff_x(profiles[m - 1], 1) + diff_x(profiles[m - 1], 3)
        profiles.append(source_traces[m - 1] - linear)
    return CompatChain(profiles=profiles, source_traces=list(source_traces))


def kappa(u0: SpaceProfile, source_traces: Sequence[SpaceProfile], k: int) -> float:
    """Data magnitude: H^{3k} norm of u0 plus the source-trace norms."""
    total = hs_space_norm(u0, 3 * k)
    for m, trace in enumerate(source_traces):
        total += hs_space_norm(trace, 3 * (k - m - 1))
    return float(total)


def rho(traces: Sequence[SpaceProfile], k: int) -> float:
    """Trace magnitude: sum of H^{3(k-m)} norms of the first k traces."""
    total = 0.0
    for m in range(k):
        total += hs_space_norm(traces[m], 3 * (k - m))
    return float(total)


def nu_star(chain: CompatChain, k: int, grid: Grid) -> TimeSeries:
    """Degree k-1 Taylor polynomial matching the flux traces at the right end.

    Its m-th derivative at t=0 equals the x-derivative of chain profile m
    evaluated at x=R, which is exactly the trace the recovered boundary flux
    must carry.
    """
    vals = np.zeros(grid.M + 1)
    fact = 1.0
    for m in range(k):
        if m > 0:
            fact *= m
        slope_at_R = float(diff_x(chain.profiles[m], 1).values[-1])
        vals += slope_at_R * grid.t**m / fact
    return TimeSeries(grid, vals)
