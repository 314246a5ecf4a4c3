"""Ensemble moment curves, dissipation ledgers, L1 contraction and viscosity sweeps.

All ensemble runs draw path i from seed0 + i, so runs at different
viscosities (or with different initial data) are driven by the same noise
realizations. Statistics carry half-widths of three standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .coefficients import FluxModel, NoiseAmplitude, smooth_abs_second, z_weight
from .discretization import Grid, l1_norm, lp_norm_p
from .ensemble import DEFAULT_CHUNK, mean_stderr, run_chunked
from .errors import ConfigMismatch
from .noise import LevyMeasureSpec, NoisePath, sample_paths
from .solver import DissipationLedger, SolverConfig, solve_batch

__all__ = [
    "EnsembleReport",
    "ensemble_statistics",
    "moment_sweep",
    "energy_dissipation",
    "fit_gronwall",
    "pure_jump_moment_exact",
    "l1_contraction",
    "viscosity_convergence",
    "dissipation_weights",
    "initial_on",
]


def initial_on(u0, grid: Grid) -> np.ndarray:
    """Sample a callable initial profile on a grid, or check an array's shape."""
    if callable(u0):
        return np.asarray(u0(grid.coords()), dtype=float) * np.ones(grid.shape)
    arr = np.asarray(u0, dtype=float)
    if arr.shape != grid.shape:
        raise ValueError(f"initial data shape {arr.shape} does not match grid {grid.shape}")
    return arr


def dissipation_weights(names: Sequence[str] = ("square", "smooth_abs"), theta: float = 0.25) -> dict:
    """beta'' for ledger weights: square (u^2), quartic (u^4), smooth_abs (beta_theta(u))."""
    catalog = {
        "square": lambda u: 2.0 + 0.0 * u,
        "quartic": lambda u: 12.0 * u * u,
        "smooth_abs": lambda u: smooth_abs_second(u / theta) / theta,
    }
    return {n: catalog[n] for n in names}


@dataclass
class EnsembleReport:
    eps: float
    grid: Grid
    times: np.ndarray
    moments: dict = field(default_factory=dict)       # p -> (mean (S,), half (S,))
    dissipation: dict = field(default_factory=dict)   # name -> (mean, half)
    l2_balance: dict = field(default_factory=dict)
    n_paths: int = 0

    def max_moment(self, p: int) -> float:
        return float(np.max(self.moments[p][0]))

    def rows(self) -> list[tuple]:
        """(eps, time, statistic, value, half_width) rows for CSV output."""
        out = []
        for p, (m, h) in sorted(self.moments.items()):
            for t, mv, hv in zip(self.times, m, h):
                out.append((self.eps, float(t), f"moment_p{p}", float(mv), float(hv)))
        for name, (m, h) in sorted(self.dissipation.items()):
            out.append((self.eps, float(self.times[-1]), f"dissipation_{name}", float(m), float(h)))
        return out

    def to_dict(self) -> dict:
        return {
            "eps": self.eps,
            "N": self.grid.n,
            "times": self.times.tolist(),
            "moments": {str(p): {"mean": m.tolist(), "half_width": h.tolist()}
                        for p, (m, h) in sorted(self.moments.items())},
            "dissipation": {k: {"mean": float(m), "half_width": float(h)}
                            for k, (m, h) in sorted(self.dissipation.items())},
            "n_paths": self.n_paths,
        }


def ensemble_statistics(u0, spec: LevyMeasureSpec, cfg: SolverConfig, flux: FluxModel,
                        eta: NoiseAmplitude, grid: Grid, n_paths: int, seed0: int = 0,
                        ps: Sequence[int] = (2, 4), weights: dict | None = None,
                        workers: int = 1, chunk: int = DEFAULT_CHUNK) -> EnsembleReport:
    """E||u(t)||_p^p at the save times and the dissipation ledgers at the horizon."""
    for p in ps:
        if p <= 0 or p % 2:
            raise ValueError("moment orders must be positive and even")
    u0v = initial_on(u0, grid)
    weights = dissipation_weights() if weights is None else weights

    def task(idx):
        paths = sample_paths(spec, cfg.horizon, seed0, idx)
        obs = [DissipationLedger(len(idx), grid, cfg.eps, weights)] if cfg.eps > 0 else []
        res = solve_batch(u0v, paths, cfg, flux, eta, grid, obs)
        out = {f"p{p}": lp_norm_p(res.saved, grid, p) for p in ps}
        if obs:
            out.update(obs[0].result())
        return out

    raw = run_chunked(task, n_paths, workers, chunk)
    rep = EnsembleReport(cfg.eps, grid, np.asarray(cfg.save_times), n_paths=n_paths)
    for p in ps:
        st = mean_stderr(raw[f"p{p}"])
        rep.moments[p] = (st.mean, st.half_width)
    for name in weights:
        key = f"ledger_{name}"
        if key in raw:
            st = mean_stderr(raw[key])
            rep.dissipation[name] = (float(st.mean), float(st.half_width))
    if "l2_drop" in raw:
        rep.l2_balance = {k: raw[k] for k in ("ledger_square", "l2_drop", "remainder") if k in raw}
    return rep


def moment_sweep(u0, spec: LevyMeasureSpec, levels: Sequence[tuple[float, Grid]], cfg: SolverConfig,
                 flux: FluxModel, eta: NoiseAmplitude, n_paths: int, seed0: int = 0,
                 ps: Sequence[int] = (2, 4), weights: dict | None = None, workers: int = 1,
                 chunk: int = DEFAULT_CHUNK) -> list[EnsembleReport]:
    """One EnsembleReport per (eps, grid) level, all driven by the same paths."""
    return [ensemble_statistics(u0, spec, cfg.with_(eps=eps), flux, eta, grid, n_paths, seed0, ps,
                                weights, workers, chunk)
            for eps, grid in levels]


def energy_dissipation(reports: Sequence[EnsembleReport], name: str = "smooth_abs") -> dict:
    """Ledger statistics across a sweep and the max/min spread."""
    vals = np.array([r.dissipation[name][0] for r in reports])
    halves = np.array([r.dissipation[name][1] for r in reports])
    spread = float(vals.max() / vals.min()) if vals.min() > 0 else math.inf
    return {"eps": [r.eps for r in reports], "mean": vals, "half_width": halves, "spread": spread}


def fit_gronwall(times: np.ndarray, curve: np.ndarray, m0: float) -> tuple[float, float]:
    """Fit log E||u(t)|| = a + C t by least squares; return (C, A) with A = max m / (m0 e^{Ct}).

    The envelope A m0 e^{C t} is therefore tight on the fitted curve.
    """
    t = np.asarray(times, dtype=float)
    y = np.log(np.asarray(curve, dtype=float))
    C = float(np.polyfit(t, y, 1)[0]) if len(t) > 1 else 0.0
    A = float(np.max(curve / (m0 * np.exp(C * t))))
    return C, A


def pure_jump_moment_exact(u0: np.ndarray, grid: Grid, spec: LevyMeasureSpec, sigma: float, g: np.ndarray,
                           t, p: int) -> np.ndarray:
    """E||u(t)||_p^p for F = 0, eps = 0, eta = sigma g(x) u (|z| ^ 1), atomic jumps above the cutoff.

    Each cell evolves as u0 prod_i (1 + s w_i) e^{-s m1 t} with s = sigma g(x),
    so E u^p = u0^p exp(t [sum_j lam_j ((1 + s w_j)^p - 1) - p s m1]).
    """
    z, lam = spec.above_cutoff_rule()
    w = z_weight(z)
    m1 = float(np.sum(lam * w))
    s = sigma * np.asarray(g, dtype=float).ravel()
    rate = np.sum(lam[None, :] * ((1 + s[:, None] * w[None, :]) ** p - 1), axis=1) - p * s * m1
    t = np.atleast_1d(np.asarray(t, dtype=float))
    base = np.abs(np.asarray(u0, dtype=float).ravel()) ** p * grid.cell_volume
    return np.array([float(np.sum(base * np.exp(rate * tt))) for tt in t])


# ---------------------------------------------------------------------------
# coupled-noise comparisons

def _check_coupling(cfg, cfg_v, paths_u: Sequence[NoisePath], paths_v: Sequence[NoisePath] | None):
    if cfg_v is not None and cfg_v != cfg:
        raise ConfigMismatch("coupled runs must share the solver configuration")
    if paths_v is not None:
        if len(paths_v) != len(paths_u):
            raise ConfigMismatch("coupled runs must use the same number of paths")
        for a, b in zip(paths_u, paths_v):
            if a.digest() != b.digest() or a.spec != b.spec:
                raise ConfigMismatch("coupled runs consume different jump events")


def l1_contraction(u0, v0, spec: LevyMeasureSpec, cfg: SolverConfig, flux: FluxModel,
                   eta: NoiseAmplitude, grid: Grid, n_paths: int, seed0: int = 0,
                   cfg_v: SolverConfig | None = None, spec_v: LevyMeasureSpec | None = None,
                   workers: int = 1, chunk: int = DEFAULT_CHUNK) -> dict:
    """Curve t -> E||u(t) - v(t)||_1 with u and v driven by the same path per member.

    Both states of a pair advance in one batch; pairs are checked to consume
    identical event lists (by digest).
    """
    if spec_v is not None and spec_v != spec:
        raise ConfigMismatch("coupled runs must share the Levy measure")
    if cfg_v is not None and cfg_v != cfg:
        raise ConfigMismatch("coupled runs must share the solver configuration")
    u0v = initial_on(u0, grid)
    v0v = initial_on(v0, grid)

    def task(idx):
        paths_u = sample_paths(spec, cfg.horizon, seed0, idx)
        paths_v = sample_paths(spec_v or spec, cfg.horizon, seed0, idx)
        _check_coupling(cfg, cfg_v, paths_u, paths_v)
        init = np.concatenate([np.broadcast_to(u0v, (len(idx),) + grid.shape),
                               np.broadcast_to(v0v, (len(idx),) + grid.shape)])
        res = solve_batch(init, list(paths_u) + list(paths_v), cfg, flux, eta, grid)
        u, v = res.saved[: len(idx)], res.saved[len(idx):]
        return {"l1": l1_norm(u - v, grid),
                "digest_equal": np.array([a.digest() == b.digest() for a, b in zip(paths_u, paths_v)])}

    raw = run_chunked(task, n_paths, workers, chunk)
    st = mean_stderr(raw["l1"])
    return {"times": np.asarray(cfg.save_times), "mean": st.mean, "half_width": st.half_width,
            "per_path": raw["l1"], "coupled": bool(np.all(raw["digest_equal"]))}


def contraction_increments(curve: np.ndarray) -> np.ndarray:
    """Successive increments of a contraction curve (positive = growth)."""
    return np.diff(np.asarray(curve, dtype=float))


def viscosity_convergence(u0, spec: LevyMeasureSpec, levels: Sequence[tuple[float, Grid]],
                          cfg: SolverConfig, flux: FluxModel, eta: NoiseAmplitude, n_paths: int,
                          seed0: int = 0, workers: int = 1, chunk: int = DEFAULT_CHUNK) -> dict:
    """L1-Cauchy table E||u_{eps_i}(T) - u_{eps_{i+1}}(T)||_1 on the coarsest grid.

    Finer solutions are block-averaged onto the coarsest grid; every level
    uses paths seed0 + i, so differences are between coupled solutions.
    """
    coarse = min((g for _, g in levels), key=lambda g: g.n)
    finals = []
    for eps, grid in levels:
        if grid.length != coarse.length or grid.d != coarse.d:
            raise ConfigMismatch("all levels must share the torus")
        u0v = initial_on(u0, grid)
        lev_cfg = cfg.with_(eps=eps, save_times=(cfg.horizon,))

        def task(idx, grid=grid, u0v=u0v, lev_cfg=lev_cfg):
            paths = sample_paths(spec, cfg.horizon, seed0, idx)
            res = solve_batch(u0v, paths, lev_cfg, flux, eta, grid)
            return {"final": grid.restrict(res.saved[:, -1], coarse)}

        finals.append(run_chunked(task, n_paths, workers, chunk)["final"])
    diffs, halves = [], []
    for a, b in zip(finals[:-1], finals[1:]):
        st = mean_stderr(l1_norm(a - b, coarse))
        diffs.append(float(st.mean))
        halves.append(float(st.half_width))
    diffs = np.array(diffs)
    ratios = diffs[:-1] / diffs[1:] if len(diffs) > 1 else np.zeros(0)
    return {"eps": [e for e, _ in levels], "cauchy": diffs, "half_width": np.array(halves),
            "ratios": ratios, "finals": finals, "coarse": coarse}
