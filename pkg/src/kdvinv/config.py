"""Scenario configuration: the JSON schema, its validation, and resolution
into sampled problem data on a concrete grid.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .expressions import compile_expression
from .mesh import Field, Grid, SpaceProfile, TimeSeries, make_grid
from .nonlinearity import Nonlinearity, builtin_nonlinearity
from .observation import Weight, make_weight

SCHEMA_VERSION = 1

_PROBLEMS = {1, 2, 3, "forward"}

_DATA_KEYS = ("u0", "mu0", "nu0", "nu1", "h0", "h", "f1", "omega", "phi")


@dataclass
class SolverOptions:
    inner_tol: float = 1e-10
    outer_tol: float = 1e-8
    max_inner: int = 200
    max_outer: int = 50
    gamma: float | None = None  # None -> 16/T
    delta_floor: float = 1e-8
    compat_tol: float | None = None  # None -> 10*(dx^2+dt^2) heuristic
    forward_tol: float = 1e-10
    max_picard: int = 60

    def resolved_gamma(self, T: float) -> float:
        return 16.0 / T if self.gamma is None else float(self.gamma)


@dataclass
class NoiseOptions:
    level: float = 0.0
    smoothing_window: int = 0


@dataclass
class Scenario:
    """Fully resolved problem data on a concrete grid."""

    problem: int | str
    grid: Grid
    b: float
    k: int
    g: Nonlinearity
    u0: SpaceProfile
    mu0: TimeSeries
    nu0: TimeSeries
    nu1: TimeSeries | None
    h0: Field
    h: Field | None
    f1: Field | None
    weights: list[Weight]
    phi: list[TimeSeries] | None
    truth_F: TimeSeries | None = None
    truth_nu1: TimeSeries | None = None
    solver: SolverOptions = field(default_factory=SolverOptions)
    noise: NoiseOptions = field(default_factory=NoiseOptions)

    @property
    def delta_floor(self) -> float:
        return self.solver.delta_floor

    @property
    def compat_tol(self) -> float | None:
        return self.solver.compat_tol


def load_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _require(cfg: dict, key: str, where: str = "config"):
    if key not in cfg:
        raise ConfigError(f"{where} is missing required field {key!r}")
    return cfg[key]


def _series_samples(entry, var: str, coords: np.ndarray, name: str, base: Path | None):
    """Resolve a data entry (expression string or file reference) to samples."""
    if entry is None:
        raise ConfigError(f"data field {name!r} is missing")
    if isinstance(entry, (int, float)):
        return float(entry) * np.ones_like(coords)
    if isinstance(entry, str):
        fn = compile_expression(entry, (var,))
        return np.asarray(fn(**{var: coords}), dtype=float) * np.ones_like(coords)
    if isinstance(entry, dict) and "file" in entry:
        path = Path(entry["file"])
        if base is not None and not path.is_absolute():
            path = base / path
        if not path.exists():
            raise ConfigError(f"data field {name!r} references missing file {path}")
        vals = np.loadtxt(path, dtype=float, ndmin=1)
        if vals.shape != coords.shape:
            raise ConfigError(
                f"file for {name!r} has {vals.shape[0]} samples, grid needs {coords.shape[0]}"
            )
        return vals
    raise ConfigError(f"cannot interpret data field {name!r}: {entry!r}")


def _field_samples(entry, grid: Grid, name: str):
    if entry is None:
        raise ConfigError(f"data field {name!r} is missing")
    if isinstance(entry, (int, float)):
        return float(entry) * np.ones((grid.M + 1, grid.N + 1))
    if isinstance(entry, str):
        fn = compile_expression(entry, ("t", "x"))
        tt, xx = np.meshgrid(grid.t, grid.x, indexing="ij")
        return np.asarray(fn(t=tt, x=xx), dtype=float) * np.ones(tt.shape)
    raise ConfigError(f"cannot interpret field data {name!r}: {entry!r}")


def _parse_solver(block: dict | None) -> SolverOptions:
    opts = SolverOptions()
    if block is None:
        return opts
    if not isinstance(block, dict):
        raise ConfigError("solver block must be an object")
    for key, value in block.items():
        if not hasattr(opts, key):
            raise ConfigError(f"unknown solver option {key!r}")
        setattr(opts, key, value)
    return opts


def _parse_noise(block: dict | None) -> NoiseOptions:
    opts = NoiseOptions()
    if block is None:
        return opts
    for key, value in block.items():
        if not hasattr(opts, key):
            raise ConfigError(f"unknown noise option {key!r}")
        setattr(opts, key, value)
    return opts


def build_scenario(
    cfg: dict,
    grid_override: tuple[int, int] | None = None,
    base_dir: str | Path | None = None,
) -> Scenario:
    """Resolve a config dict into a Scenario (optionally on another grid)."""
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(
            f"config schema must be {SCHEMA_VERSION}, got {cfg.get('schema')!r}"
        )
    problem = _require(cfg, "problem")
    if problem not in _PROBLEMS:
        raise ConfigError(f"problem must be one of {sorted(map(str, _PROBLEMS))}")

    physics = _require(cfg, "physics")
    for key in ("b", "R", "T", "k", "nonlinearity"):
        _require(physics, key, "physics block")
    gridblock = _require(cfg, "grid")
    N = int(_require(gridblock, "N", "grid block"))
    M = int(_require(gridblock, "M", "grid block"))
    if grid_override is not None:
        N, M = grid_override
    try:
        grid = make_grid(physics["R"], physics["T"], N, M)
    except Exception as exc:
        raise ConfigError(f"invalid grid/physics: {exc}") from None

    k = int(physics["k"])
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    g = builtin_nonlinearity(physics["nonlinearity"])
    b = float(physics["b"])

    data = _require(cfg, "data")
    unknown = set(data) - set(_DATA_KEYS)
    if unknown:
        raise ConfigError(f"unknown data fields {sorted(unknown)}")
    base = Path(base_dir) if base_dir is not None else None

    u0 = SpaceProfile(grid, _series_samples(data.get("u0"), "x", grid.x, "u0", base))
    mu0 = TimeSeries(grid, _series_samples(data.get("mu0"), "t", grid.t, "mu0", base))
    nu0 = TimeSeries(grid, _series_samples(data.get("nu0"), "t", grid.t, "nu0", base))

    nu1 = None
    if data.get("nu1") is not None:
        nu1 = TimeSeries(grid, _series_samples(data["nu1"], "t", grid.t, "nu1", base))

    h0 = Field(grid, _field_samples(data.get("h0", 0.0), grid, "h0"))
    h = None
    if data.get("h") is not None:
        h = Field(grid, _field_samples(data["h"], grid, "h"))
    f1 = None
    if data.get("f1") is not None:
        f1 = Field(grid, _field_samples(data["f1"], grid, "f1"))

    weights: list[Weight] = []
    for idx, entry in enumerate(data.get("omega") or []):
        if isinstance(entry, str):
            entry = {"expr": entry}
        if not isinstance(entry, dict) or "expr" not in entry:
            raise ConfigError(f"omega[{idx}] must be an expression or an object with 'expr'")
        prof = SpaceProfile(
            grid, _series_samples(entry["expr"], "x", grid.x, f"omega[{idx}]", base)
        )
        weights.append(
            make_weight(
                prof,
                b,
                dprime_at_R=entry.get("dprime_at_R"),
                dsecond_at_0=entry.get("dsecond_at_0"),
                dsecond_at_R=entry.get("dsecond_at_R"),
            )
        )

    phi = None
    if data.get("phi") is not None:
        phi = [
            TimeSeries(grid, _series_samples(entry, "t", grid.t, f"phi[{j}]", base))
            for j, entry in enumerate(data["phi"])
        ]

    truth_F = truth_nu1 = None
    truth = cfg.get("truth")
    if truth is not None:
        if truth.get("F") is not None:
            truth_F = TimeSeries(
                grid, _series_samples(truth["F"], "t", grid.t, "truth.F", base)
            )
        if truth.get("nu1") is not None:
            truth_nu1 = TimeSeries(
                grid, _series_samples(truth["nu1"], "t", grid.t, "truth.nu1", base)
            )

    scenario = Scenario(
        problem=problem,
        grid=grid,
        b=b,
        k=k,
        g=g,
        u0=u0,
        mu0=mu0,
        nu0=nu0,
        nu1=nu1,
        h0=h0,
        h=h,
        f1=f1,
        weights=weights,
        phi=phi,
        truth_F=truth_F,
        truth_nu1=truth_nu1,
        solver=_parse_solver(cfg.get("solver")),
        noise=_parse_noise(cfg.get("noise")),
    )
    _validate_problem_fields(scenario)
    return scenario


def _validate_problem_fields(s: Scenario) -> None:
    problem = s.problem
    if problem == "forward":
        if s.nu1 is None:
            raise ConfigError("forward problem needs boundary flux data nu1")
        return
    if problem in (1, 2) and s.h is None:
        raise ConfigError(f"problem {problem} needs the source carrier h")
    if problem == 1 and len(s.weights) < 2:
        raise ConfigError("problem 1 needs two omega weights")
    if problem in (2, 3) and len(s.weights) < 1:
        raise ConfigError(f"problem {problem} needs an omega weight")
    if problem == 2 and s.nu1 is None:
        raise ConfigError("problem 2 needs boundary flux data nu1")


def scaled_config(cfg: dict, amplitude: float) -> dict:
    """Scale all load-like data (and truth controls) by a common factor.

    Weights and the source carrier h stay fixed: they define the observation
    geometry, not the data size.
    """
    out = copy.deepcopy(cfg)
    data = out.get("data", {})
    for key in ("u0", "mu0", "nu0", "nu1", "h0", "f1"):
        if data.get(key) is not None:
            if isinstance(data[key], (int, float)):
                data[key] = float(data[key]) * amplitude
            elif isinstance(data[key], str):
                data[key] = f"({amplitude!r})*({data[key]})"
            else:
                raise ConfigError(f"cannot amplitude-scale file-based data {key!r}")
    if data.get("phi") is not None:
        data["phi"] = [f"({amplitude!r})*({p})" for p in data["phi"]]
    truth = out.get("truth")
    if truth:
        for key in ("F", "nu1"):
            if truth.get(key) is not None:
                truth[key] = f"({amplitude!r})*({truth[key]})"
    return out
