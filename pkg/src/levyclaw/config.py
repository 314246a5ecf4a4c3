"""Experiment configuration: a single JSON document validated before any computation."""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path
from typing import Callable, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field as PField, ValidationError, field_validator, model_validator

from .coefficients import _bump_raw, make_eta, make_flux
from .discretization import Grid
from .errors import ConfigError, LevyClawError
from .noise import LevyMeasureSpec
from .solver import SolverConfig

__all__ = [
    "ExperimentConfig",
    "load_config",
    "parse_config",
    "make_initial",
    "bundled_config_path",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GridBlock(_Strict):
    d: Literal[1, 2] = 1
    N: int = PField(256, ge=8)
    L: float = PField(4.0, gt=0)


class SolverBlock(_Strict):
    eps: float = PField(0.0, ge=0)
    eps_sweep: Optional[list[float]] = None
    refine_with_eps: bool = True
    cfl: float = PField(0.8, gt=0, le=1)
    T: float = PField(1.0, gt=0)
    scheme: Literal["engquist_osher", "lax_friedrichs"] = "engquist_osher"
    n_saves: int = PField(10, ge=1)
    save_times: Optional[list[float]] = None
    max_dt: Optional[float] = PField(None, gt=0)
    support_margin: float = PField(0.0, ge=0, lt=0.5)

    @field_validator("eps_sweep")
    @classmethod
    def _sweep(cls, v):
        if v is not None:
            if len(v) < 2:
                raise ValueError("a sweep needs at least two viscosities")
            if any(e <= 0 for e in v):
                raise ValueError("sweep viscosities must be positive")
            if any(b >= a for a, b in zip(v[:-1], v[1:])):
                raise ValueError("sweep viscosities must be strictly decreasing")
        return v

    @model_validator(mode="after")
    def _saves(self):
        if self.save_times is not None:
            if any(t < 0 or t > self.T for t in self.save_times):
                raise ValueError("save_times must lie in [0, T]")
        return self


class InitialBlock(_Strict):
    profile: Literal["bump", "gaussian", "sine", "riemann", "box", "constant"] = "bump"
    amplitude: float = 1.0
    offset: float = 0.0
    center: list[float] = [0.0]
    radius: float = PField(0.5, gt=0)
    variance: float = PField(0.04, gt=0)
    mode: int = 1
    left: float = 1.0
    right: float = 0.0
    position: float = 0.0


class FluxBlock(_Strict):
    name: Literal["zero", "linear", "burgers", "cubic"] = "burgers"
    direction: list[float] = [1.0]


class ProfileBlock(_Strict):
    profile: Literal["constant", "bump"] = "constant"
    value: float = 1.0
    center: list[float] = [0.0]
    radius: float = PField(1.0, gt=0)
    height: float = 1.0


class EtaBlock(_Strict):
    name: Literal["zero", "multiplicative", "additive"] = "zero"
    sigma: float = 0.5
    g: ProfileBlock = ProfileBlock()


class MeasureBlock(_Strict):
    kind: Literal["finite_atomic", "truncated_power_law"] = "finite_atomic"
    cutoff: float = 0.25
    atoms: list[tuple[float, float]] = [(0.5, 2.0)]
    alpha: float = 0.5
    c: float = 1.0
    z_min: float = 1e-4
    z_max: float = 1.0

    def build(self) -> LevyMeasureSpec:
        if self.kind == "finite_atomic":
            return LevyMeasureSpec.finite_atomic(self.atoms, self.cutoff)
        return LevyMeasureSpec.truncated_power_law(self.alpha, self.c, self.z_min, self.z_max, self.cutoff)


class EnsembleBlock(_Strict):
    size: int = PField(100, ge=1)
    seed0: int = PField(0, ge=0)
    chunk: int = PField(64, ge=1)


class PsiBlock(_Strict):
    t1_frac: float = PField(0.25, ge=0, lt=1)
    t2_frac: float = PField(0.75, gt=0, le=1)
    radius_frac: float = PField(0.3, gt=0, lt=0.5)
    center: list[float] = [0.0]

    @model_validator(mode="after")
    def _order(self):
        if self.t2_frac <= self.t1_frac:
            raise ValueError("t2_frac must exceed t1_frac")
        return self


class VerificationBlock(_Strict):
    theta: Optional[list[float]] = None
    theta_cells: float = PField(4.0, gt=0)
    k_policy: Literal["range", "quantile"] = "range"
    n_k: int = PField(9, ge=2)
    psi: PsiBlock = PsiBlock()
    tol_factor: float = PField(0.05, ge=0)
    checks: list[Literal["entropy", "martingale", "attainment"]] = ["entropy"]
    h_fracs: list[float] = [0.2, 0.1, 0.05, 0.025]
    h_catalog: dict[str, bool] = {"xi": True, "xi2": True, "pos_part": True, "bounded_smooth": True}
    pos_part_shift: float = 0.5
    n_random_measures: int = PField(1000, ge=1)
    dissipation_theta: float = PField(0.25, gt=0)
    moment_spread: float = PField(0.10, gt=0)
    dissipation_factor: float = PField(2.0, ge=1)

    @field_validator("h_fracs")
    @classmethod
    def _fracs(cls, v):
        if any(not (0 < h <= 1) for h in v):
            raise ValueError("h fractions must lie in (0, 1]")
        return v


class ExperimentConfig(_Strict):
    schema_version: int = SCHEMA_VERSION
    name: str = "experiment"
    grid: GridBlock = GridBlock()
    solver: SolverBlock = SolverBlock()
    initial: InitialBlock = InitialBlock()
    v_initial: Optional[InitialBlock] = None
    flux: FluxBlock = FluxBlock()
    eta: EtaBlock = EtaBlock()
    measure: MeasureBlock = MeasureBlock()
    ensemble: EnsembleBlock = EnsembleBlock()
    verification: VerificationBlock = VerificationBlock()
    output_dir: Optional[str] = None

    @model_validator(mode="after")
    def _cross(self):
        if len(self.flux.direction) != self.grid.d:
            raise ValueError("flux.direction must have one entry per dimension")
        if self.schema_version != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {self.schema_version}")
        return self

    # -- builders ---------------------------------------------------------

    def measure_spec(self) -> LevyMeasureSpec:
        return self.measure.build()

    def flux_model(self):
        return make_flux(self.flux.name, self.flux.direction)

    def eta_model(self):
        return make_eta(self.eta.name, self.eta.sigma, self.eta.g.model_dump(), self.grid.d)

    def base_grid(self) -> Grid:
        return Grid(self.grid.d, self.grid.N, self.grid.L)

    def save_times(self) -> tuple[float, ...]:
        s = self.solver
        if s.save_times is not None:
            return tuple(sorted(set(float(t) for t in s.save_times) | {s.T}))
        return tuple(float(t) for t in np.linspace(0.0, s.T, s.n_saves + 1))

    def solver_config(self, eps: float | None = None) -> SolverConfig:
        s = self.solver
        return SolverConfig(eps=s.eps if eps is None else eps, cfl=s.cfl, horizon=s.T, scheme=s.scheme,
                            save_times=self.save_times(), max_dt=s.max_dt,
                            support_margin=s.support_margin)

    def eps_levels(self) -> list[tuple[float, Grid]]:
        """(eps, grid) per sweep entry; with refine_with_eps, N scales so dx is proportional to eps."""
        s = self.solver
        sweep = s.eps_sweep or [s.eps]
        base = self.base_grid()
        levels = []
        for e in sweep:
            if s.refine_with_eps and s.eps_sweep:
                ratio = sweep[0] / e
                n = int(round(base.n * ratio))
                if abs(n - base.n * ratio) > 1e-9 * n:
                    raise ConfigError("solver.eps_sweep: ratios must give integer grid sizes")
                levels.append((e, Grid(base.d, n, base.length)))
            else:
                levels.append((e, base))
        return levels

    def initial_profile(self, which: str = "u") -> Callable:
        block = self.initial if which == "u" else (self.v_initial or self.initial)
        return make_initial(block, self.grid.L)


def make_initial(block: InitialBlock, length: float) -> Callable:
    """Callable coords -> values for the initial-profile catalog."""
    b = block

    def radial(coords):
        cen = list(b.center) + [0.0] * (len(coords) - len(b.center))
        return np.sqrt(sum((x - c) ** 2 for x, c in zip(coords, cen)))

    if b.profile == "bump":
        return lambda c: b.offset + b.amplitude * math.e * _bump_raw(radial(c) / b.radius)
    if b.profile == "gaussian":
        return lambda c: b.offset + b.amplitude * np.exp(-radial(c) ** 2 / (2 * b.variance))
    if b.profile == "sine":
        return lambda c: b.offset + b.amplitude * np.sin(2 * np.pi * b.mode * c[0] / length)
    if b.profile == "riemann":
        return lambda c: np.where(c[0] < b.position, b.left, b.right) + 0.0 * sum(c)
    if b.profile == "box":
        return lambda c: np.where(radial(c) < b.radius, b.left, b.right)
    return lambda c: b.offset + 0.0 * sum(c)


def _format_validation(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format_validation(err)) from None
    try:
        cfg.measure_spec()
    except LevyClawError as err:
        raise ConfigError(f"measure: {err}") from None
    return cfg


def bundled_config_path(name: str) -> Path:
    ref = resources.files("levyclaw") / "configs" / f"{name}.json"
    return Path(str(ref))


def load_config(path: str | Path) -> ExperimentConfig:
    """Load JSON from a path, or a bundled config given as ``bundled:NAME``."""
    p = str(path)
    if p.startswith("bundled:"):
        p = str(bundled_config_path(p.split(":", 1)[1]))
    try:
        text = Path(p).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read config {p}: {err.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(data)
