"""Entropy-inequality residuals, initial attainment and the zero-mean martingale check.

For a non-negative test function psi(t, x) = chi(t) phi(x) and an entropy pair
(beta, zeta) with beta = beta_theta(. - k), the residual of a trajectory is
R = T0 + T1 + T2 + T3 + T4 with

    T0 = <psi(0), beta(u(0))>
    T1 = int <d_t psi, beta(u)> dt
    T2 = int <zeta(u), grad psi> dt
    T3 = sum_events <beta(u- + eta) - beta(u-), psi(tau)>
         - int int <beta(u + eta) - beta(u), psi> m(dz) dt
    T4 = int int <beta(u + eta) - beta(u) - eta beta'(u), psi> m(dz) dt

An entropy solution has R >= 0 and T3 is a martingale increment with zero
mean. Spatial sums use the cell midpoint rule restricted to the support of
psi; time integrals use the trapezoid rule on the solver's own step
boundaries, with the left limit at each jump; z-integrals run over the
sampled band |z| >= cutoff with the measure's quadrature rule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .coefficients import EntropyPair, FluxModel, NoiseAmplitude, _smoothstep, _smoothstep_prime, z_weight
from .discretization import Field, Grid
from .ensemble import mean_stderr, run_chunked, DEFAULT_CHUNK
from .errors import UnboundedEntropy
from .noise import LevyMeasureSpec, NoisePath, sample_paths
from .solver import Observer, PathSolution, SolverConfig, replay, solve_batch

__all__ = [
    "TestFunction",
    "EntropyResidualAccumulator",
    "AttainmentAccumulator",
    "EntropyResidualReport",
    "MartingaleStats",
    "entropy_residual",
    "generalized_entropy_residual",
    "ensemble_entropy_residual",
    "initial_attainment",
    "martingale_zero_mean",
    "k_grid",
    "stationary_solution",
    "TERM_NAMES",
]

TERM_NAMES = ("T0", "T1", "T2", "T3", "T4")


@dataclass(frozen=True)
class TestFunction:
    """psi(t, x) = chi(t) phi(x).

    chi is 1 on [0, t1], 0 after t2, smooth and non-increasing in between.
    phi is a C^inf bump of the given radius around ``center``, measured with
    the periodic minimal-image distance so that it is a smooth function on
    the torus when radius < length / 2.
    """

    __test__ = False  # not a pytest class

    t1: float
    t2: float
    center: tuple[float, ...]
    radius: float
    length: float

    def __post_init__(self):
        if not (0 <= self.t1 < self.t2):
            raise ValueError("need 0 <= t1 < t2")
        if not (0 < self.radius < 0.5 * self.length):
            raise ValueError("bump radius must lie in (0, L/2)")
        object.__setattr__(self, "center", tuple(float(c) for c in np.atleast_1d(self.center)))

    def chi(self, t):
        return 1.0 - _smoothstep((np.asarray(t, dtype=float) - self.t1) / (self.t2 - self.t1))

    def dchi(self, t):
        return -_smoothstep_prime((np.asarray(t, dtype=float) - self.t1) / (self.t2 - self.t1)) \
            / (self.t2 - self.t1)

    def _offsets(self, coords):
        L = self.length
        return [((np.asarray(x) - c + 0.5 * L) % L) - 0.5 * L for x, c in zip(coords, self.center)]

    def phi(self, coords):
        off = self._offsets(coords)
        q = sum(o * o for o in off) / self.radius ** 2
        inside = q < 1.0
        qs = np.where(inside, q, 0.0)
        return np.where(inside, np.exp(1.0 - 1.0 / (1.0 - qs)), 0.0)

    def grad_phi(self, coords):
        off = self._offsets(coords)
        q = sum(o * o for o in off) / self.radius ** 2
        inside = q < 1.0
        qs = np.where(inside, q, 0.0)
        ph = np.where(inside, np.exp(1.0 - 1.0 / (1.0 - qs)), 0.0)
        fac = np.where(inside, -2.0 * ph / (self.radius ** 2 * (1.0 - qs) ** 2), 0.0)
        return [fac * o for o in off]

    def psi(self, t, coords):
        return self.chi(t) * self.phi(coords)

    @property
    def sup(self) -> float:
        return 1.0

    @classmethod
    def default(cls, grid: Grid, horizon: float, radius_frac: float = 0.3) -> "TestFunction":
        return cls(0.25 * horizon, 0.75 * horizon, (0.0,) * grid.d, radius_frac * grid.length,
                   grid.length)


def _z_rule(spec: LevyMeasureSpec | None):
    if spec is None:
        return np.zeros(0), np.zeros(0)
    return spec.above_cutoff_rule()


class _SupportMixin:
    def _init_support(self, grid: Grid, weight_arrays: Sequence[np.ndarray]):
        mask = np.zeros(grid.shape, dtype=bool)
        for w in weight_arrays:
            mask |= w != 0
        self._idx = np.flatnonzero(mask)
        self._coords_s = tuple(c.ravel()[self._idx] for c in grid.coords())

    def _gather(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(u.shape[0], -1)[:, self._idx]


class EntropyResidualAccumulator(_SupportMixin, Observer):
    """Online accumulation of the five residual terms for K shifts and P rows."""

    def __init__(self, grid: Grid, pairs: Sequence[EntropyPair], psi: TestFunction,
                 eta: NoiseAmplitude, spec: LevyMeasureSpec | None, n_rows: int):
        self.grid = grid
        self.pairs = list(pairs)
        self.psi = psi
        coords = grid.coords()
        phi = psi.phi(coords)
        flux = self.pairs[0].flux
        adv = sum(a * g for a, g in zip(flux.direction, psi.grad_phi(coords)))
        self._init_support(grid, [phi, adv])
        dv = grid.cell_volume
        self.phi_s = phi.ravel()[self._idx] * dv
        self.adv_s = adv.ravel()[self._idx] * dv
        self.noise_on = not eta.is_zero and spec is not None
        self.amp = eta.bind(self._coords_s)
        z, w = _z_rule(spec) if self.noise_on else (np.zeros(0), np.zeros(0))
        self.zw = z_weight(z)
        self.mw = w
        K = len(self.pairs)
        self.terms = np.zeros((5, K, n_rows))
        self._cache = np.zeros((4, K, n_rows))

    # spatial sums: beta, flux, compensator, convexity
    def _sums(self, u_s: np.ndarray) -> np.ndarray:
        K = len(self.pairs)
        out = np.zeros((4, K, u_s.shape[0]))
        A = self.amp(u_s) if self.noise_on else None
        for i, pair in enumerate(self.pairs):
            r = u_s - pair.k
            b = pair.beta(r)
            out[0, i] = _dot(b, self.phi_s)
            out[1, i] = _dot(pair.entropy_flux(u_s), self.adv_s)
            if self.noise_on and len(self.mw):
                db = pair.dbeta(r)
                if np.max(np.abs(db), initial=0.0) > pair.dbeta_bound * (1 + 1e-12):
                    raise UnboundedEntropy("entropy derivative exceeds its declared bound")
                comp = np.zeros(u_s.shape[0])
                conv = np.zeros(u_s.shape[0])
                for zw, mw in zip(self.zw, self.mw):
                    eta = A * zw
                    jump = pair.beta(r + eta) - b
                    comp += mw * _dot(jump, self.phi_s)
                    conv += mw * _dot(jump - eta * db, self.phi_s)
                out[2, i] = comp
                out[3, i] = conv
        return out

    def start(self, t, u):
        s = self._sums(self._gather(u))
        self._cache = s
        self.terms[0] += self.psi.chi(t) * s[0]

    def segment(self, t0, u0, t1, u1):
        moved = np.nonzero(t1 > t0)[0]
        if not len(moved):
            return
        end = self._sums(self._gather(u1[moved]))
        start = self._cache[:, :, moved]
        h = (t1 - t0)[moved]
        c0, c1 = self.psi.chi(t0[moved]), self.psi.chi(t1[moved])
        d0, d1 = self.psi.dchi(t0[moved]), self.psi.dchi(t1[moved])
        half = 0.5 * h
        self.terms[1][:, moved] += half * (d0 * start[0] + d1 * end[0])
        self.terms[2][:, moved] += half * (c0 * start[1] + c1 * end[1])
        self.terms[3][:, moved] -= half * (c0 * start[2] + c1 * end[2])
        self.terms[4][:, moved] += half * (c0 * start[3] + c1 * end[3])
        self._cache[:, :, moved] = end

    def jump(self, mask, t, u_minus, u_plus, z):
        rows = np.nonzero(mask)[0]
        new = self._sums(self._gather(u_plus[rows]))
        self.terms[3][:, rows] += self.psi.chi(t[rows]) * (new[0] - self._cache[0][:, rows])
        self._cache[:, :, rows] = new

    def result(self) -> dict:
        return {"terms": np.moveaxis(self.terms, 2, 0)}  # (P, 5, K)


def _dot(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # row-wise reduction; a matmul would round differently depending on how many rows are batched
    return np.sum(x * w, axis=-1)


def residual_sum(terms: np.ndarray) -> np.ndarray:
    """R = (((T0 + T1) + T2) + T3) + T4 along the term axis (axis -2 of (..., 5, K))."""
    t = np.moveaxis(terms, -2, 0)
    return (((t[0] + t[1]) + t[2]) + t[3]) + t[4]


class AttainmentAccumulator(_SupportMixin, Observer):
    """int_0^h sum_i |u - u0| phi dx^d dt for each h, per row."""

    def __init__(self, grid: Grid, u0: np.ndarray, phi: np.ndarray, hs: Sequence[float], n_rows: int):
        self._init_support(grid, [phi])
        self.u0_s = np.asarray(u0).ravel()[self._idx]
        self.phi_s = phi.ravel()[self._idx] * grid.cell_volume
        self.hs = np.asarray(hs, dtype=float)
        self.acc = np.zeros((n_rows, len(self.hs)))
        self._g = np.zeros(n_rows)

    def _g_of(self, u):
        return _dot(np.abs(self._gather(u) - self.u0_s), self.phi_s)

    def start(self, t, u):
        self._g = self._g_of(u)

    def segment(self, t0, u0, t1, u1):
        moved = np.nonzero((t1 > t0) & (t0 < self.hs.max()))[0]
        if not len(moved):
            return
        g0 = self._g[moved]
        g1 = self._g_of(u1[moved])
        a, b = t0[moved, None], t1[moved, None]
        hi = np.minimum(b, self.hs[None, :])
        frac = np.clip((hi - a) / (b - a), 0.0, 1.0)
        g_hi = g0[:, None] + (g1 - g0)[:, None] * frac
        self.acc[moved] += 0.5 * np.maximum(hi - a, 0.0) * (g0[:, None] + g_hi)
        self._g[moved] = g1

    def jump(self, mask, t, u_minus, u_plus, z):
        rows = np.nonzero(mask)[0]
        self._g[rows] = self._g_of(u_plus[rows])

    def result(self) -> dict:
        return {"attainment": self.acc}


# ---------------------------------------------------------------------------

def k_grid(values: np.ndarray, n: int = 9, policy: str = "range") -> np.ndarray:
    """n Kruzkov shifts covering the visited values, endpoints (min, max) included.

    ``range`` spaces them evenly over [min, max]; ``quantile`` takes the
    empirical quantiles at levels 0, 1/(n-1), ..., 1.
    """
    v = np.asarray(values, dtype=float).ravel()
    if policy == "range":
        return np.linspace(float(v.min()), float(v.max()), n)
    if policy == "quantile":
        return np.quantile(v, np.linspace(0.0, 1.0, n))
    raise ValueError(f"unknown k policy {policy!r}")


def _breakdown(terms: np.ndarray) -> dict:
    out = {name: terms[i] for i, name in enumerate(TERM_NAMES)}
    out["R"] = residual_sum(terms)
    return out


def entropy_residual(sol: PathSolution, pairs: EntropyPair | Sequence[EntropyPair],
                     psi: TestFunction, eta: NoiseAmplitude | None = None) -> dict:
    """Five-term breakdown and R for one recorded trajectory.

    With a single pair the values are floats; with a list they are arrays over
    the pairs.
    """
    single = isinstance(pairs, EntropyPair)
    plist = [pairs] if single else list(pairs)
    eta = sol.eta if eta is None else eta
    acc = EntropyResidualAccumulator(sol.grid, plist, psi, eta, sol.path.spec, 1)
    replay(sol, [acc])
    terms = acc.terms[:, :, 0]
    out = _breakdown(terms)
    if single:
        out = {k: float(v[0]) for k, v in out.items()}
    return out


def generalized_entropy_residual(family: Sequence[tuple[float, PathSolution]],
                                 pairs: EntropyPair | Sequence[EntropyPair], psi: TestFunction) -> dict:
    """Residual of an alpha-parametrized family {(weight, trajectory)}, averaged in alpha.

    Weights must sum to one. A single trajectory with weight 1 (a Dirac
    parametrization) reproduces ``entropy_residual`` exactly.
    """
    weights = np.array([w for w, _ in family], dtype=float)
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValueError("alpha weights must be non-negative and sum to one")
    total = None
    for w, sol in family:
        part = entropy_residual(sol, pairs, psi)
        terms = np.array([part[n] for n in TERM_NAMES])
        total = w * terms if total is None else total + w * terms
    out = {name: total[i] for i, name in enumerate(TERM_NAMES)}
    out["R"] = residual_sum(total)
    if isinstance(pairs, EntropyPair):
        out = {k: float(v) for k, v in out.items()}
    return out


def stationary_solution(u: Field, horizon: float, flux: FluxModel, eta: NoiseAmplitude,
                        spec: LevyMeasureSpec, n_steps: int = 400) -> PathSolution:
    """Wrap a fixed field as a noise-free trajectory constant on [0, horizon].

    Knots are laid on a uniform grid of ``n_steps`` intervals so that the
    time quadrature resolves the test function.
    """
    path = NoisePath(np.zeros(0), np.zeros(0), float(horizon), 0, spec, {"rate": 0.0, "min1": 0.0})
    cfg = SolverConfig(horizon=horizon)
    v = u.values
    knots = [[float(t), v.copy(), v.copy(), 0.0] for t in np.linspace(0.0, horizon, n_steps + 1)]
    return PathSolution(path, u.grid, cfg, (float(horizon),), v[None].copy(), {}, knots, {},
                        flux, eta)


@dataclass
class EntropyResidualReport:
    theta: float
    ks: np.ndarray                   # (K,)
    terms: np.ndarray                # (P, 5, K)
    psi: TestFunction
    tolerance: float = 0.0

    @property
    def R(self) -> np.ndarray:       # (P, K)
        return residual_sum(self.terms)

    @property
    def mean(self) -> np.ndarray:
        return mean_stderr(self.R).mean

    @property
    def stderr(self) -> np.ndarray:
        return mean_stderr(self.R).stderr

    @property
    def term_means(self) -> np.ndarray:   # (5, K)
        return np.mean(self.terms, axis=0)

    @property
    def path_minima(self) -> np.ndarray:  # (P,)
        return np.min(self.R, axis=1)

    def flagged_paths(self) -> np.ndarray:
        return np.nonzero(self.path_minima < -self.tolerance)[0]

    def violation(self) -> float:
        """max over k of max(0, -mean R)."""
        return float(np.max(np.maximum(0.0, -self.mean)))

    def passes(self, tol: float | None = None) -> np.ndarray:
        tol = self.tolerance if tol is None else tol
        return self.mean >= -(tol + 3.0 * self.stderr)

    def to_dict(self) -> dict:
        return {
            "theta": self.theta,
            "k": self.ks.tolist(),
            "mean_R": self.mean.tolist(),
            "stderr_R": self.stderr.tolist(),
            "term_means": {n: self.term_means[i].tolist() for i, n in enumerate(TERM_NAMES)},
            "tolerance": self.tolerance,
            "n_paths": int(self.terms.shape[0]),
            "flagged_paths": self.flagged_paths().tolist(),
            "path_min_R": float(np.min(self.path_minima)),
            "pass": bool(np.all(self.passes())),
        }


def _pilot_values(u0, spec, cfg, flux, eta, grid, seed0, n_paths, n_pilot=8, n_saves=16):
    idx = np.arange(min(n_pilot, n_paths))
    paths = sample_paths(spec, cfg.horizon, seed0, idx)
    saves = tuple(np.linspace(0.0, cfg.horizon, n_saves + 1))
    res = solve_batch(u0, paths, cfg.with_(save_times=saves, support_margin=0.0), flux, eta, grid)
    return res.saved


def ensemble_entropy_residual(u0: np.ndarray, spec: LevyMeasureSpec, cfg: SolverConfig,
                              flux: FluxModel, eta: NoiseAmplitude, grid: Grid, n_paths: int,
                              seed0: int = 0, psi: TestFunction | None = None,
                              theta: float | None = None, ks: Sequence[float] | None = None,
                              n_k: int = 9, k_policy: str = "range", tol_factor: float = 0.05,
                              workers: int = 1,
                              chunk: int = DEFAULT_CHUNK) -> EntropyResidualReport:
    """Residual statistics over paths seeded seed0 + i, i < n_paths.

    Defaults: theta = 4 dx; k = n_k shifts (see ``k_grid``) over the values
    visited by a pilot of the first eight paths; the tolerance is
    tol_factor * sup psi * ||u0||_1.
    """
    psi = TestFunction.default(grid, cfg.horizon) if psi is None else psi
    theta = 4.0 * grid.dx if theta is None else float(theta)
    if ks is None:
        ks = k_grid(_pilot_values(u0, spec, cfg, flux, eta, grid, seed0, n_paths), n_k, k_policy)
    ks = np.asarray(ks, dtype=float)

    def task(idx):
        paths = sample_paths(spec, cfg.horizon, seed0, idx)
        pairs = [EntropyPair(theta, k, flux) for k in ks]
        acc = EntropyResidualAccumulator(grid, pairs, psi, eta, spec, len(idx))
        solve_batch(u0, paths, cfg, flux, eta, grid, [acc])
        return acc.result()

    out = run_chunked(task, n_paths, workers, chunk)
    l1 = float(np.sum(np.abs(u0)) * grid.cell_volume)
    return EntropyResidualReport(theta, ks, out["terms"], psi, tol_factor * psi.sup * l1)


@dataclass(frozen=True)
class MartingaleStats:
    mean: float
    stderr: float
    z: float
    n: int

    @property
    def passes(self) -> bool:
        return abs(self.z) <= 3.0


def martingale_zero_mean(values: np.ndarray) -> MartingaleStats:
    """Mean, standard error and z-score of per-path martingale terms."""
    v = np.asarray(values, dtype=float).ravel()
    s = mean_stderr(v)
    mean, se = float(s.mean), float(s.stderr)
    if se == 0.0:
        z = 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    else:
        z = mean / se
    return MartingaleStats(mean, se, z, v.size)


def initial_attainment(u0: np.ndarray, spec: LevyMeasureSpec, cfg: SolverConfig, flux: FluxModel,
                       eta: NoiseAmplitude, grid: Grid, hs: Sequence[float], n_paths: int,
                       seed0: int = 0, phi: np.ndarray | None = None, workers: int = 1,
                       chunk: int = DEFAULT_CHUNK) -> dict:
    """Curve h -> (1/h) int_0^h E sum |u - u0| phi dx^d dt with 3-stderr half-widths."""
    hs = np.asarray(sorted(float(h) for h in hs))
    if hs[0] <= 0 or hs[-1] > cfg.horizon:
        raise ValueError("h values must lie in (0, horizon]")
    if phi is None:
        phi = TestFunction.default(grid, cfg.horizon).phi(grid.coords())
    saves = tuple(sorted(set(cfg.save_times) | set(hs.tolist())))
    run_cfg = cfg.with_(save_times=saves)

    def task(idx):
        paths = sample_paths(spec, cfg.horizon, seed0, idx)
        acc = AttainmentAccumulator(grid, u0, phi, hs, len(idx))
        solve_batch(u0, paths, run_cfg, flux, eta, grid, [acc])
        return acc.result()

    out = run_chunked(task, n_paths, workers, chunk)["attainment"] / hs[None, :]
    st = mean_stderr(out)
    return {"h": hs, "value": st.mean, "half_width": st.half_width}
