"""Lie-splitting solver for the viscous conservation law with jump noise.

Each step applies, in order: a monotone finite-volume flux update, an
explicit diffusion update, and the compensator drift. Jump events are exact
step boundaries: the state is advanced to the event time, then
u <- u + eta(x, u; z).

``solve_batch`` advances many paths at once. Every row owns its clock and
its step size, so the trajectory of a path does not depend on which other
paths share the batch. ``solve_path`` is the one-row case.

Observers receive the trajectory as it is produced (segments between step
boundaries, jumps with left/right states, diffusion sub-steps and saves).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .coefficients import FluxModel, NoiseAmplitude, z_weight
from .discretization import Field, Grid, divergence, forward_gradient, laplacian
from .errors import CFLViolation, SupportWrap
from .noise import NoisePath

__all__ = [
    "SolverConfig",
    "PathSolution",
    "BatchResult",
    "Observer",
    "TrajectoryRecorder",
    "DissipationLedger",
    "step_hyperbolic",
    "step_diffusion",
    "step_jump",
    "compensator_drift",
    "write_diagnostics_csv",
    "solve_batch",
    "solve_path",
    "replay",
]

SCHEMES = ("engquist_osher", "lax_friedrichs")


@dataclass(frozen=True)
class SolverConfig:
    eps: float = 0.0
    cfl: float = 0.8
    horizon: float = 1.0
    scheme: str = "engquist_osher"
    save_times: tuple[float, ...] = ()
    max_dt: float | None = None
    support_margin: float = 0.0
    support_tol: float = 1e-6

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("viscosity must be non-negative")
        if not (0 < self.cfl <= 1):
            raise ValueError("CFL number must lie in (0, 1]")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        st = tuple(sorted(float(s) for s in (self.save_times or (self.horizon,))))
        if st[0] < 0 or st[-1] > self.horizon:
            raise ValueError("save times must lie in [0, horizon]")
        if len(set(st)) != len(st):
            raise ValueError("save times must be distinct")
        object.__setattr__(self, "save_times", st)
        if self.max_dt is not None and not self.max_dt > 0:
            raise ValueError("max_dt must be positive")

    def dt_bounds(self, speed_sum: np.ndarray, grid: Grid) -> np.ndarray:
        """Per-row step: cfl * min(dx / sum_k max|F_k'|, dx^2 / (2 d eps)), capped by max_dt."""
        with np.errstate(divide="ignore"):
            hyp = np.where(speed_sum > 0, grid.dx / np.where(speed_sum > 0, speed_sum, 1.0), np.inf)
        par = grid.dx ** 2 / (2 * grid.d * self.eps) if self.eps > 0 else math.inf
        dt = self.cfl * np.minimum(hyp, par)
        cap = self.max_dt if self.max_dt is not None else (
            self.horizon / 100.0 if not np.all(np.isfinite(dt)) else math.inf)
        return np.minimum(dt, cap)

    def with_(self, **kw) -> "SolverConfig":
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        d.update(kw)
        return SolverConfig(**d)


# ---------------------------------------------------------------------------
# single operators (also used by the batch engine)

def _row_shape(dt, u, d):
    dt = np.asarray(dt, dtype=float)
    return dt.reshape(dt.shape + (1,) * d) if dt.ndim else dt


def _speeds(u: np.ndarray, flux: FluxModel, d: int) -> list[np.ndarray]:
    axes = tuple(range(-d, 0))
    return flux.max_speeds(u, axis=axes)


def step_hyperbolic(u: np.ndarray, flux: FluxModel, dt, grid: Grid,
                    scheme: str = "engquist_osher") -> np.ndarray:
    """Conservative monotone update u - dt * div h(u_i, u_{i+1}).

    ``dt`` may be a scalar or one value per leading row.
    """
    d = grid.d
    speeds = _speeds(u, flux, d)
    dt_arr = np.asarray(dt, dtype=float)
    courant = dt_arr * sum(speeds) / grid.dx
    if np.any(courant > 1.0 + 1e-12):
        raise CFLViolation(f"hyperbolic Courant number {float(np.max(courant)):.4f} exceeds 1")
    faces = []
    if scheme == "engquist_osher":
        fp, fm = flux.eo_split(u)
        for a, ax in zip(flux.direction, range(-d, 0)):
            if a >= 0:
                h = a * (fp + np.roll(fm, -1, axis=ax))
            else:
                h = a * (fm + np.roll(fp, -1, axis=ax))
            faces.append(h)
    elif scheme == "lax_friedrichs":
        fu = flux.f(u)
        for a, s, ax in zip(flux.direction, speeds, range(-d, 0)):
            ur = np.roll(u, -1, axis=ax)
            alpha = _row_shape(s, u, d)
            faces.append(0.5 * a * (fu + np.roll(fu, -1, axis=ax)) - 0.5 * alpha * (ur - u))
    else:
        raise ValueError(f"unknown scheme {scheme!r}")
    return u - _row_shape(dt_arr, u, d) * divergence(faces, grid.dx)


def step_diffusion(u: np.ndarray, eps: float, dt, grid: Grid) -> np.ndarray:
    """Explicit Euler for eps * Laplacian; requires eps dt 2d / dx^2 <= 1."""
    dt_arr = np.asarray(dt, dtype=float)
    if np.any(eps * dt_arr * 2 * grid.d / grid.dx ** 2 > 1.0 + 1e-12):
        raise CFLViolation("diffusive step exceeds dx^2 / (2 d eps)")
    return u + _row_shape(eps * dt_arr, u, grid.d) * laplacian(u, grid.dx, grid.d)


def step_jump(u: np.ndarray, z, amplitude) -> np.ndarray:
    """u(tau+) = u(tau-) + A(x, u(tau-)) (|z| ^ 1); ``amplitude`` is a bound A(u)."""
    w = np.asarray(z_weight(z), dtype=float)
    w = w.reshape(w.shape + (1,) * (u.ndim - w.ndim)) if w.ndim else w
    return u + amplitude(u) * w


def compensator_drift(u: np.ndarray, amplitude, m1, dt) -> np.ndarray:
    """u - dt * int_{|z| >= cutoff} eta(x, u; z) m(dz) = u - dt * m1 * A(x, u)."""
    c = np.asarray(m1, dtype=float) * np.asarray(dt, dtype=float)
    c = c.reshape(c.shape + (1,) * (u.ndim - c.ndim)) if c.ndim else c
    return u - c * amplitude(u)


# ---------------------------------------------------------------------------
# observers

class Observer:
    wants_diffusion = False

    def start(self, t, u):
        pass

    def segment(self, t0, u0, t1, u1):
        pass

    def diffusion(self, u_before, u_after, dt):
        pass

    def jump(self, mask, t, u_minus, u_plus, z):
        pass

    def save(self, mask, index, t, u):
        pass

    def result(self) -> dict:
        return {}


class TrajectoryRecorder(Observer):
    """Dense record: knots (t, left state, right state, z) per row."""

    def __init__(self, n_rows: int):
        self.knots: list[list] = [[] for _ in range(n_rows)]

    def start(self, t, u):
        for p in range(len(self.knots)):
            self.knots[p].append([float(t[p]), u[p].copy(), u[p].copy(), 0.0])

    def segment(self, t0, u0, t1, u1):
        moved = t1 > t0
        for p in np.nonzero(moved)[0]:
            self.knots[p].append([float(t1[p]), u1[p].copy(), u1[p].copy(), 0.0])

    def jump(self, mask, t, u_minus, u_plus, z):
        for p in np.nonzero(mask)[0]:
            k = self.knots[p][-1]
            if k[0] != float(t[p]) or k[3] != 0.0:
                # event at a time with no fresh knot (t = 0 or simultaneous events)
                self.knots[p].append([float(t[p]), u_minus[p].copy(), u_minus[p].copy(), 0.0])
                k = self.knots[p][-1]
            k[2] = u_plus[p].copy()
            k[3] = float(z[p])


class DissipationLedger(Observer):
    """Accumulates eps * sum dt * sum_faces beta''(u_face) |D+ u|^2 dx^d per row.

    Also keeps the exact L2 balance of the diffusion sub-steps,
    sum (u_b - u_a)(u_b + u_a) dx^d, and the explicit-Euler remainder
    sum (u_a - u_b)^2 dx^d, so that for beta = u^2

        l2_drop == ledger["square"] - remainder

    holds up to rounding.
    """

    wants_diffusion = True

    def __init__(self, n_rows: int, grid: Grid, eps: float, weights: dict | None = None):
        self.grid = grid
        self.eps = eps
        self.weights = weights or {"square": lambda u: 2.0 + 0.0 * u}
        self.ledger = {k: np.zeros(n_rows) for k in self.weights}
        self.l2_drop = np.zeros(n_rows)
        self.remainder = np.zeros(n_rows)

    def diffusion(self, u_before, u_after, dt):
        g = self.grid
        axes = tuple(range(-g.d, 0))
        grads = forward_gradient(u_before, g.dx, g.d)
        for name, w in self.weights.items():
            tot = 0.0
            for ax, gr in zip(axes, grads):
                uf = 0.5 * (u_before + np.roll(u_before, -1, axis=ax))
                tot = tot + np.sum(w(uf) * gr * gr, axis=axes)
            self.ledger[name] += self.eps * dt * tot * g.cell_volume
        self.l2_drop += np.sum((u_before - u_after) * (u_before + u_after), axis=axes) * g.cell_volume
        self.remainder += np.sum((u_after - u_before) ** 2, axis=axes) * g.cell_volume

    def result(self) -> dict:
        out = {f"ledger_{k}": v for k, v in self.ledger.items()}
        out["l2_drop"] = self.l2_drop
        out["remainder"] = self.remainder
        return out


# ---------------------------------------------------------------------------
# engine

@dataclass
class BatchResult:
    grid: Grid
    save_times: tuple[float, ...]
    saved: np.ndarray          # (P, S, *shape)
    steps: np.ndarray          # (P,)
    observers: list
    diagnostics: list | None = None


def _event_table(paths: Sequence[NoisePath]):
    P = len(paths)
    E = max((len(p) for p in paths), default=0)
    ev_t = np.full((P, E + 1), np.inf)
    ev_z = np.zeros((P, E + 1))
    for i, p in enumerate(paths):
        ev_t[i, : len(p)] = p.times
        ev_z[i, : len(p)] = p.marks
    return ev_t, ev_z


def _support_check(u, grid: Grid, cfg: SolverConfig) -> None:
    if cfg.support_margin <= 0:
        return
    m = max(1, int(math.ceil(cfg.support_margin * grid.n)))
    for ax in range(-grid.d, 0):
        edge = np.concatenate([np.take(u, np.arange(m), axis=ax),
                               np.take(u, np.arange(grid.n - m, grid.n), axis=ax)], axis=ax)
        if np.max(np.abs(edge)) > cfg.support_tol:
            warnings.warn("solution reached the torus boundary margin", SupportWrap, stacklevel=3)
            return


def solve_batch(u0: np.ndarray, paths: Sequence[NoisePath], cfg: SolverConfig, flux: FluxModel,
                eta: NoiseAmplitude, grid: Grid, observers: Sequence[Observer] = (),
                diagnostics: bool = False) -> BatchResult:
    u = np.array(u0, dtype=float)
    if u.shape == grid.shape:
        u = np.broadcast_to(u, (len(paths),) + grid.shape).copy()
    P = u.shape[0]
    if P != len(paths) or u.shape[1:] != grid.shape:
        raise ValueError("initial data must have shape (n_paths, *grid.shape)")
    if flux.d != grid.d:
        raise ValueError("flux dimension does not match grid")
    d = grid.d
    axes = tuple(range(-d, 0))
    T = cfg.horizon
    amp = eta.bind(grid.coords())
    m1 = np.array([p.compensator.get("min1", 0.0) for p in paths])
    drift_on = (not eta.is_zero) and np.any(m1 > 0)
    hyper_on = not flux.is_zero
    diff_on = cfg.eps > 0
    diff_obs = [o for o in observers if o.wants_diffusion]

    ev_t, ev_z = _event_table(paths)
    saves = np.asarray(cfg.save_times)
    S = len(saves)
    saved = np.empty((P, S) + grid.shape)
    rows = np.arange(P)
    ptr = np.zeros(P, dtype=np.int64)
    sptr = np.zeros(P, dtype=np.int64)
    t = np.zeros(P)
    steps = np.zeros(P, dtype=np.int64)
    diag = [] if diagnostics else None

    for o in observers:
        o.start(t, u)
    first = True
    while True:
        if first:
            # saves or events at t = 0 are handled before any step
            hit = np.ones(P, dtype=bool)
            first = False
        else:
            active = t < T
            if not active.any():
                break
            next_ev = ev_t[rows, ptr]
            next_sv = np.where(sptr < S, saves[np.minimum(sptr, S - 1)], np.inf)
            stop = np.minimum(np.minimum(next_ev, next_sv), T)
            if hyper_on:
                speed = sum(_speeds(u, flux, d))
            else:
                speed = np.zeros(P)
            dt_cfl = cfg.dt_bounds(speed, grid)
            gap = stop - t
            hit = active & (dt_cfl >= gap * (1.0 - 1e-12))
            dt = np.where(active, np.where(hit, gap, dt_cfl), 0.0)
            t_new = np.where(hit, stop, t + dt)
            u_start = u
            if hyper_on:
                u = step_hyperbolic(u, flux, dt, grid, cfg.scheme)
            if diff_on:
                u_b = u
                u = step_diffusion(u, cfg.eps, dt, grid)
                for o in diff_obs:
                    o.diffusion(u_b, u, dt)
            if drift_on:
                u = compensator_drift(u, amp, m1, dt)
            if u is u_start:
                u = u.copy()
            for o in observers:
                o.segment(t, u_start, t_new, u)
            steps += active
            t = t_new

        jumped = np.zeros(P, dtype=bool)
        while True:
            jm = hit & (ev_t[rows, ptr] == t)
            if not jm.any():
                break
            z = np.where(jm, ev_z[rows, ptr], 0.0)
            u_minus = u
            u = u.copy()
            u[jm] = step_jump(u_minus[jm], z[jm], amp)
            for o in observers:
                o.jump(jm, t, u_minus, u, z)
            ptr += jm
            jumped |= jm

        while True:
            sm = hit & (sptr < S) & (saves[np.minimum(sptr, S - 1)] == t)
            if not sm.any():
                break
            saved[rows[sm], sptr[sm]] = u[sm]
            for o in observers:
                o.save(sm, sptr.copy(), t, u)
            _support_check(u[sm], grid, cfg)
            sptr += sm

        if not np.all(np.isfinite(u)):
            raise FloatingPointError(f"non-finite state at t = {float(np.max(t)):.6g}")
        if diag is not None:
            diag.append({
                "t": t.copy(),
                "mass": np.sum(u, axis=axes) * grid.cell_volume,
                "l2": np.sqrt(np.sum(u * u, axis=axes) * grid.cell_volume),
                "max": np.max(np.abs(u), axis=axes),
                "event": jumped.copy(),
            })

    return BatchResult(grid, cfg.save_times, saved, steps, list(observers), diag)


@dataclass
class PathSolution:
    path: NoisePath
    grid: Grid
    cfg: SolverConfig
    save_times: tuple[float, ...]
    saved: np.ndarray                 # (S, *shape)
    diagnostics: dict = field(default_factory=dict)
    knots: list = field(default_factory=list)
    ledger: dict = field(default_factory=dict)
    flux: FluxModel | None = None
    eta: NoiseAmplitude | None = None

    def fields(self) -> list[Field]:
        return [Field(self.grid, v, t) for t, v in zip(self.save_times, self.saved)]

    @property
    def initial(self) -> np.ndarray:
        return self.knots[0][1] if self.knots else None


def solve_path(u0: Field | np.ndarray, path: NoisePath, cfg: SolverConfig, flux: FluxModel,
               eta: NoiseAmplitude, grid: Grid | None = None, record: bool = True) -> PathSolution:
    if isinstance(u0, Field):
        grid = u0.grid
        u0 = u0.values
    rec = TrajectoryRecorder(1) if record else None
    ledger = DissipationLedger(1, grid, cfg.eps) if cfg.eps > 0 else None
    obs = [o for o in (rec, ledger) if o is not None]
    res = solve_batch(u0[None], [path], cfg, flux, eta, grid, obs, diagnostics=True)
    rows_diag = {k: [] for k in ("t", "mass", "l2", "max", "event")}
    last_t = -1.0
    for rec_d in res.diagnostics:
        tt = float(rec_d["t"][0])
        if tt == last_t and not rec_d["event"][0] and tt != 0.0:
            continue
        last_t = tt
        for k in rows_diag:
            rows_diag[k].append(rec_d[k][0])
    diag = {k: np.asarray(v) for k, v in rows_diag.items()}
    led = {k: float(v[0]) for k, v in ledger.result().items()} if ledger else {}
    return PathSolution(path, grid, cfg, res.save_times, res.saved[0], diag,
                        rec.knots[0] if rec else [], led, flux, eta)


def write_diagnostics_csv(sol: PathSolution, dest: str | Path) -> None:
    """Per-step diagnostics with columns t, mass, L2, max, event_flag."""
    d = sol.diagnostics
    with open(dest, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "mass", "L2", "max", "event_flag"])
        for row in zip(d["t"], d["mass"], d["l2"], d["max"], d["event"]):
            w.writerow([repr(float(v)) for v in row[:4]] + [int(row[4])])


def replay(sol: PathSolution, observers: Sequence[Observer]) -> None:
    """Feed a recorded one-path trajectory to observers (rows = 1)."""
    knots = sol.knots
    if not knots:
        raise ValueError("solution was solved without a dense record")
    arr = lambda x: np.asarray([x], dtype=float)
    t0, left0, right0, z0 = knots[0]
    for o in observers:
        o.start(arr(t0), left0[None])
    prev = knots[0]
    if prev[3] != 0.0:
        for o in observers:
            o.jump(np.array([True]), arr(prev[0]), prev[1][None], prev[2][None], arr(prev[3]))
    for k in knots[1:]:
        for o in observers:
            o.segment(arr(prev[0]), prev[2][None], arr(k[0]), k[1][None])
        if k[3] != 0.0:
            for o in observers:
                o.jump(np.array([True]), arr(k[0]), k[1][None], k[2][None], arr(k[3]))
        prev = k
