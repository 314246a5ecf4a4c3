"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py``; the verdicts are repeated in an
"acceptance criteria" section of the terminal summary.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from levyclaw import cli
from levyclaw.coefficients import make_eta, make_flux
from levyclaw.discretization import Field, Grid, total_variation
from levyclaw.estimates import (contraction_increments, dissipation_weights, energy_dissipation,
                                ensemble_statistics, fit_gronwall, l1_contraction, pure_jump_moment_exact)
from levyclaw.mild import advection_diffusion_exact, periodic_gaussian, picard_mild_iterate
from levyclaw.noise import LevyMeasureSpec, sample_path
from levyclaw.reports import hash_outputs
from levyclaw.solver import SolverConfig, solve_path
from levyclaw.verifier import ensemble_entropy_residual, initial_attainment, martingale_zero_mean
from levyclaw.young_measure import DiscreteYoungMeasure, h_catalog, pushforward_identity

pytestmark = pytest.mark.slow

ATOM = LevyMeasureSpec.finite_atomic([(0.5, 2.0)], 0.25)
QUIET = LevyMeasureSpec.finite_atomic([(1.0, 1e-12)], 0.5)
BURGERS = make_flux("burgers")
MULT = make_eta("multiplicative", 0.5)


def bump(grid, width=0.5, amplitude=1.0):
    x = grid.axis
    inside = np.abs(x) < width
    out = np.zeros_like(x)
    out[inside] = amplitude * math.e * np.exp(-1 / (1 - (x[inside] / width) ** 2))
    return out


# -- 1 -----------------------------------------------------------------------

def entropy_chain(n0, eps0, ks, n_paths=200, T=0.5, L=4.0):
    """Reports along (N, eps, theta) -> (2N, eps/2, theta/2) -> (4N, eps/4, theta/4)."""
    reps = []
    for j in range(3):
        g = Grid(1, n0 * 2 ** j, L)
        cfg = SolverConfig(eps=eps0 / 2 ** j, horizon=T)
        reps.append(ensemble_entropy_residual(bump(g), ATOM, cfg, BURGERS, MULT, g, n_paths, ks=ks))
    return reps


def test_criterion_01_entropy_inequality(criterion):
    g = Grid(1, 256, 4.0)
    details, ok = [], True
    for eps0 in (0.02, 0.01):
        pilot = ensemble_entropy_residual(bump(g), ATOM, SolverConfig(eps=eps0, horizon=0.5), BURGERS, MULT,
                                          g, 8)
        reps = entropy_chain(256, eps0, pilot.ks)
        holds = bool(np.all(reps[0].passes()))
        viol = [r.violation() for r in reps]
        mono = bool(np.all(np.diff(viol) <= 0))
        ok &= holds and mono
        worst = float(np.min(reps[0].mean + reps[0].tolerance + 3 * reps[0].stderr))
        details.append(f"eps={eps0}: min margin {worst:.3g}, violations {[f'{v:.2g}' for v in viol]}")
    criterion(1, "entropy inequality", ok, "; ".join(details))
    assert ok


# -- 2 -----------------------------------------------------------------------

def test_criterion_02_l1_contraction(criterion):
    g = Grid(1, 256, 4.0)
    u0, v0 = bump(g), bump(g, 0.6, 0.8)
    cfg = SolverConfig(eps=0.01, horizon=0.5, save_times=tuple(np.linspace(0, 0.5, 11)))
    res = l1_contraction(u0, v0, ATOM, cfg, BURGERS, MULT, g, 400)
    tol = 2 * g.dx * total_variation(u0 - v0, g) + res["half_width"][1:]
    inc = contraction_increments(res["mean"])
    noisy = bool(res["coupled"] and np.all(inc <= tol))

    x = g.axis
    a = np.where(np.abs(x) < 1.0, 1.0, 0.0)
    b = np.where(np.abs(x) < 0.5, -0.5, 0.5)
    det = l1_contraction(a, b, QUIET, cfg.with_(eps=0.0, horizon=1.0, save_times=tuple(np.linspace(0, 1, 21))),
                         BURGERS, make_eta("zero"), g, 1)
    det_inc = contraction_increments(det["mean"])
    deterministic = bool(np.all(det_inc <= 1e-12))

    same = l1_contraction(u0, u0, ATOM, cfg, BURGERS, MULT, g, 64)
    zero = bool(np.all(same["per_path"] == 0.0))
    ok = noisy and deterministic and zero
    criterion(2, "L1 contraction", ok,
              f"max increment {inc.max():.3g} (tol >= {tol.min():.3g}); eta=0 max increment {det_inc.max():.3g}; "
              f"equal data zero: {zero}")
    assert ok


# -- 3 and 4 -----------------------------------------------------------------

@pytest.fixture(scope="module")
def sweep():
    L = 8.0
    levels = [(0.02, Grid(1, 256, L)), (0.01, Grid(1, 512, L)), (0.005, Grid(1, 1024, L))]
    cfg = SolverConfig(horizon=2.0, save_times=tuple(np.linspace(0, 2.0, 11)))
    weights = dissipation_weights(("square", "smooth_abs"), 0.25)
    reps = [ensemble_statistics(lambda c: np.sin(2 * np.pi * c[0] / L), ATOM, cfg.with_(eps=eps), BURGERS, MULT,
                                g, 100, weights=weights)
            for eps, g in levels]
    return reps


def test_criterion_03_uniform_moments(criterion, sweep):
    reps = sweep
    parts, ok = [], True
    for p in (2, 4):
        maxes = np.array([r.max_moment(p) for r in reps])
        spread = float(np.ptp(maxes) / maxes.min())
        base = reps[0]
        m0 = float(base.moments[p][0][0])
        C, A = fit_gronwall(base.times, base.moments[p][0], m0)
        env = A * m0 * np.exp(C * base.times)
        below = all(np.all(r.moments[p][0] <= env + r.moments[p][1]) for r in reps)
        ok &= spread < 0.10 and below
        parts.append(f"p={p} spread {spread:.3%} envelope C={C:.3g} A={A:.3g} below={below}")

    g = Grid(1, 16, 2.0)
    times = tuple(np.linspace(0, 1.0, 6))
    u0 = 1.0 + 0.5 * np.cos(np.pi * g.axis)
    rep = ensemble_statistics(u0, ATOM, SolverConfig(eps=0.0, horizon=1.0, max_dt=5e-4, save_times=times),
                              make_flux("zero"), MULT, g, 4000, ps=(2,))
    exact = pure_jump_moment_exact(u0, g, ATOM, 0.5, np.ones(g.shape), times, 2)
    mean, half = rep.moments[2]
    oracle = bool(np.all(np.abs(mean - exact) <= half))
    ok &= oracle
    parts.append(f"ODE oracle max |dev|/halfwidth {np.max(np.abs(mean - exact)[1:] / half[1:]):.3g}")
    criterion(3, "uniform moments", ok, "; ".join(parts))
    assert ok


def test_criterion_04_energy_dissipation(criterion, sweep):
    reps = sweep
    spreads = {name: energy_dissipation(reps, name)["spread"] for name in ("smooth_abs", "square")}
    bounded = all(s <= 2.0 for s in spreads.values())
    worst = 0.0
    for r in reps:
        b = r.l2_balance
        rel = np.abs(b["l2_drop"] - (b["ledger_square"] - b["remainder"])) / np.abs(b["l2_drop"])
        worst = max(worst, float(np.max(rel)))
    ok = bounded and worst <= 1e-12
    criterion(4, "energy dissipation", ok,
              f"spreads {', '.join(f'{k} {v:.3f}' for k, v in spreads.items())}; L2 bookkeeping rel err {worst:.2g}")
    assert ok


# -- 5 -----------------------------------------------------------------------

def riemann_exact(x, t):
    """Box data 1 on (-1, 0): rarefaction from x=-1, shock from x=0 at speed 1/2 (valid for t < 2)."""
    fan = (x >= -1) & (x < -1 + t)
    plateau = (x >= -1 + t) & (x < 0.5 * t)
    out = np.zeros_like(x)
    out[fan] = (x[fan] + 1) / t
    out[plateau] = 1.0
    return out


def test_criterion_05_riemann_convergence(criterion):
    T = 0.5
    ns = [200, 400, 800, 1600]
    err_shock, err_fan, front_err, dxs = [], [], [], []
    for n in ns:
        g = Grid(1, n, 4.0)
        x = g.axis
        u0 = np.where((x > -1) & (x < 0), 1.0, 0.0)
        sol = solve_path(Field(g, u0), sample_path(QUIET, T, 0), SolverConfig(eps=0.0, horizon=T),
                         BURGERS, make_eta("zero"), record=False)
        u = np.asarray(sol.saved[-1])
        e = np.abs(u - riemann_exact(x, T))
        shock_win = (x > -0.2) & (x < 1.0)
        fan_win = (x > -1.5) & (x < -0.2)
        err_shock.append(np.sum(e[shock_win]) * g.dx)
        err_fan.append(np.sum(e[fan_win]) * g.dx)
        i = np.nonzero(shock_win & (u >= 0.5))[0].max()
        # linear interpolation of the u = 1/2 crossing between cells i and i+1
        xf = x[i] + (u[i] - 0.5) / (u[i] - u[i + 1]) * g.dx
        front_err.append(abs(xf - 0.5 * T) / g.dx)
        dxs.append(g.dx)
    orders_shock = np.log2(np.array(err_shock[:-1]) / np.array(err_shock[1:]))
    orders_fan = np.log2(np.array(err_fan[:-1]) / np.array(err_fan[1:]))
    ok = bool(np.all(orders_shock >= 0.7) and np.all(orders_fan >= 0.7) and max(front_err) <= 2.0)
    criterion(5, "deterministic Riemann convergence", ok,
              f"shock orders {np.round(orders_shock, 2).tolist()}, rarefaction orders "
              f"{np.round(orders_fan, 2).tolist()}, front error {max(front_err):.2f} dx")
    assert ok


# -- 6 -----------------------------------------------------------------------

def test_criterion_06_mild_picard_oracle(criterion):
    g = Grid(1, 256, 2.0)
    c, eps, var0, T = 0.5, 0.05, 0.04, 0.25
    u0 = Field(g, periodic_gaussian(g.axis, 0.0, var0, g.length))
    its = picard_mild_iterate(u0, sample_path(QUIET, T, 0), eps, make_flux("linear", (c,)), make_eta("zero"), 12)
    diffs = np.array([np.max(np.abs(its[k + 1].left - its[k].left)) for k in range(12)])
    live = diffs[diffs > 1e-13]
    ratios = live[1:] / live[:-1]
    alpha = float(ratios.max()) if len(ratios) else 0.0
    exact = advection_diffusion_exact(g.axis, T, c, eps, 0.0, var0, g.length)
    closed = float(np.max(np.abs(its[12].final - exact)))

    cs = 0.25
    path = next(p for p in (sample_path(ATOM, T, s) for s in range(50)) if len(p) >= 1)
    v0 = Field(g, periodic_gaussian(g.axis, 0.0, 0.09, g.length, 0.5))
    F = make_flux("linear", (cs,))
    pic = picard_mild_iterate(v0, path, eps, F, MULT, 12)
    sol = solve_path(v0, path, SolverConfig(eps=eps, horizon=T), F, MULT, record=False)
    split = float(np.max(np.abs(sol.saved[-1] - pic[-1].final)))
    ok = alpha < 1.0 and closed < 1e-3 and split <= 5e-3
    criterion(6, "mild/Picard oracle", ok,
              f"contraction ratio {alpha:.3g}, closed-form sup error {closed:.2g}, splitting vs Picard {split:.2g} "
              f"({len(path)} jumps)")
    assert ok


# -- 7 -----------------------------------------------------------------------

def test_criterion_07_young_measure_identities(criterion):
    rng = np.random.default_rng(7)
    measures = []
    for _ in range(1000):
        k = int(rng.integers(1, 9))
        atoms = np.round(rng.normal(size=k), 1)
        w = rng.dirichlet(np.ones(k))
        measures.append(DiscreteYoungMeasure(atoms[None], (w / w.sum())[None]))
    disc = pushforward_identity(measures, h_catalog())
    lam = np.linspace(0.0005, 0.9995, 1999)
    monotone = right = True
    for nu in measures:
        monotone &= bool(np.all(np.diff(nu.quantile(lam)[0]) >= 0))
        C = nu.cumulative()[0][:-1]
        C = C[(C > 0) & (C < 1 - 1e-9)]
        if len(C):
            right &= bool(np.array_equal(nu.quantile(C)[0], nu.quantile(C + 1e-10)[0]))
    half = DiscreteYoungMeasure([[0.0, 1.0]], [[0.5, 0.5]]).quantile(np.array([0.25, 0.5, 0.75]))[0]
    strict = list(half) == [0.0, 1.0, 1.0]
    ok = disc < 1e-10 and monotone and right and strict
    criterion(7, "Young-measure identities", ok,
              f"pushforward max discrepancy {disc:.2g}; monotone {monotone}; right-continuous {right}; "
              f"half/half quantiles {half.tolist()}")
    assert ok


# -- 8 -----------------------------------------------------------------------

def test_criterion_08_martingale_zero_mean(criterion):
    g = Grid(1, 16, 2.0)
    cfg = SolverConfig(eps=0.0, horizon=1.0, max_dt=0.05)
    zs = []
    for meta in range(10):
        rep = ensemble_entropy_residual(bump(g), ATOM, cfg, make_flux("zero"), MULT, g, 10_000,
                                        seed0=1_000_000 * meta, ks=[0.2], theta=0.25)
        zs.append(martingale_zero_mean(rep.terms[:, 3, 0]).z)
    passes = sum(abs(z) <= 3.0 for z in zs)
    ok = passes >= 9
    criterion(8, "martingale zero mean", ok, f"{passes}/10 meta-seeds with |z| <= 3; z = {np.round(zs, 2).tolist()}")
    assert ok


# -- 9 -----------------------------------------------------------------------

def test_criterion_09_initial_attainment(criterion):
    g = Grid(1, 128, 4.0)
    T = 0.5
    hs = [f * T for f in (0.2, 0.1, 0.05, 0.025)]
    att = initial_attainment(bump(g), ATOM, SolverConfig(eps=0.01, horizon=T), BURGERS, MULT, g, hs, 200)
    val = att["value"]  # ascending h
    monotone = bool(np.all(np.diff(val) > 0))
    ratio = float(val[0] / val[-1])
    ok = monotone and ratio < 0.25
    criterion(9, "initial attainment", ok,
              f"curve over h={att['h'].tolist()}: {[f'{v:.3g}' for v in val]}; smallest/largest {ratio:.3f}")
    assert ok


# -- 10 ----------------------------------------------------------------------

def test_criterion_10_determinism(criterion, tmp_path):
    runs = [("simulate", "simulate"), ("verify-entropy", "verify_entropy"), ("contract", "contract"),
            ("moments", "moments"), ("converge", "converge"), ("young-diag", "young_diag")]
    mismatched = []
    for command, name in runs:
        hashes = []
        for workers in (1, 2, 8):
            out = tmp_path / f"{name}_{workers}"
            cli.main([command, "--config", f"bundled:{name}", "--out", str(out), "--workers", str(workers)])
            hashes.append(hash_outputs(out))
        again = tmp_path / f"{name}_again"
        cli.main([command, "--config", f"bundled:{name}", "--out", str(again)])
        hashes.append(hash_outputs(again))
        if not (hashes[0] and all(h == hashes[0] for h in hashes)):
            mismatched.append(command)
    ok = not mismatched
    criterion(10, "determinism", ok,
              "byte-identical artifacts across reruns and 1/2/8 workers for all six subcommands" if ok
              else f"mismatch in {mismatched}")
    assert ok
