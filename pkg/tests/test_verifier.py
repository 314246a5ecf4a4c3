from __future__ import annotations

import math

import numpy as np
import pytest

from levyclaw.coefficients import EntropyPair, make_eta, make_flux
from levyclaw.discretization import Field, Grid
from levyclaw.errors import UnboundedEntropy
from levyclaw.mild import periodic_gaussian
from levyclaw.noise import LevyMeasureSpec, sample_path
from levyclaw.solver import SolverConfig, solve_path
from levyclaw.verifier import (TERM_NAMES, EntropyResidualAccumulator, TestFunction, entropy_residual,
                               ensemble_entropy_residual, generalized_entropy_residual, initial_attainment,
                               k_grid, martingale_zero_mean, residual_sum, stationary_solution)

ATOM = LevyMeasureSpec.finite_atomic([(0.5, 2.0)], 0.25)
QUIET = LevyMeasureSpec.finite_atomic([(1.0, 1e-12)], 0.5)


def bump(grid, width=0.5):
    x = grid.axis
    return np.where(np.abs(x) < width, np.exp(-1 / np.maximum(1 - (x / width) ** 2, 1e-300)) * math.e, 0.0)


def test_test_function_shape():
    psi = TestFunction(0.25, 0.75, (0.0,), 0.6, 4.0)
    t = np.linspace(0, 1, 101)
    chi = psi.chi(t)
    assert np.all(chi[t <= 0.25] == 1.0) and np.all(chi[t >= 0.75] == 0.0)
    assert np.all(np.diff(chi) <= 0)
    g = Grid(1, 400, 4.0)
    phi = psi.phi(g.coords())
    assert np.all(phi >= 0) and np.max(phi) <= 1.0
    fd = (psi.phi((g.axis + 1e-6,)) - psi.phi((g.axis - 1e-6,))) / 2e-6
    assert np.max(np.abs(fd - psi.grad_phi(g.coords())[0])) < 1e-6
    h = 1e-7
    fd_t = (psi.chi(t + h) - psi.chi(t - h)) / (2 * h)
    assert np.max(np.abs(fd_t - psi.dchi(t))) < 1e-5
    with pytest.raises(ValueError):
        TestFunction(0.5, 0.5, (0.0,), 0.5, 4.0)


def test_periodic_bump_is_smooth_across_the_seam():
    psi = TestFunction(0.1, 0.2, (1.9,), 0.5, 4.0)
    a = psi.phi((np.array([-1.95]),))
    b = psi.phi((np.array([1.75]),))
    assert a[0] == pytest.approx(b[0])


def test_k_grid_policies():
    v = np.array([0.0, 0.0, 0.0, 1.0, 2.0])
    assert np.allclose(k_grid(v, 5), [0, 0.5, 1, 1.5, 2])
    assert np.allclose(k_grid(v, 3, "quantile"), [0, 0, 2])
    with pytest.raises(ValueError):
        k_grid(v, 3, "median")


def linear_residual(n):
    g = Grid(1, n, 4.0)
    c = 0.5
    u0 = periodic_gaussian(g.axis, -0.3, 0.05, g.length)
    cfg = SolverConfig(eps=0.0, horizon=1.0, cfl=0.5)
    sol = solve_path(Field(g, u0), sample_path(QUIET, 1.0, 0), cfg, make_flux("linear", (c,)), make_eta("zero"))
    psi = TestFunction.default(g, 1.0)
    pairs = [EntropyPair(4 * g.dx, k, make_flux("linear", (c,))) for k in (0.1, 0.3, 0.6)]
    return entropy_residual(sol, pairs, psi)


def test_linear_advection_near_equality():
    r1 = linear_residual(256)
    r2 = linear_residual(512)
    assert np.max(np.abs(r1["R"])) < 0.01
    assert np.max(np.abs(r2["R"])) < np.max(np.abs(r1["R"]))


def test_breakdown_sums_exactly():
    r = linear_residual(128)
    terms = np.array([r[n] for n in TERM_NAMES])
    assert np.array_equal(residual_sum(terms), r["R"])
    assert np.array_equal((((terms[0] + terms[1]) + terms[2]) + terms[3]) + terms[4], r["R"])


def test_deterministic_burgers_satisfies_inequality():
    g = Grid(1, 256, 4.0)
    u0 = bump(g)
    cfg = SolverConfig(eps=0.01, horizon=0.5)
    sol = solve_path(Field(g, u0), sample_path(QUIET, 0.5, 0), cfg, make_flux("burgers"), make_eta("zero"))
    psi = TestFunction.default(g, 0.5)
    ks = np.linspace(0, 1, 9)
    r = entropy_residual(sol, [EntropyPair(4 * g.dx, k, make_flux("burgers")) for k in ks], psi)
    tol = 0.05 * np.sum(np.abs(u0)) * g.dx
    assert np.all(r["R"] >= -tol)


def test_expansion_shock_is_flagged():
    g = Grid(1, 256, 4.0)
    F = make_flux("burgers")
    # stationary u = sign(x): left state -1, right state +1, an entropy-violating jump at 0
    u = np.sign(g.axis)
    sol = stationary_solution(Field(g, u), 1.0, F, make_eta("zero"), QUIET)
    psi = TestFunction(0.25, 0.75, (0.0,), 1.2, 4.0)
    r = entropy_residual(sol, EntropyPair(4 * g.dx, 0.0, F), psi)
    assert r["R"] < -0.3
    tol = 0.05 * np.sum(np.abs(u) * psi.phi(g.coords())) * g.dx
    assert r["R"] < -tol
    # the admissible orientation passes
    sol2 = stationary_solution(Field(g, -u), 1.0, F, make_eta("zero"), QUIET)
    assert entropy_residual(sol2, EntropyPair(4 * g.dx, 0.0, F), psi)["R"] > 0


def test_dirac_family_reproduces_residual():
    g = Grid(1, 128, 4.0)
    path = sample_path(ATOM, 0.5, 4)
    cfg = SolverConfig(eps=0.02, horizon=0.5)
    F, eta = make_flux("burgers"), make_eta("multiplicative", 0.5)
    sol = solve_path(Field(g, bump(g)), path, cfg, F, eta)
    psi = TestFunction.default(g, 0.5)
    pairs = [EntropyPair(4 * g.dx, k, F) for k in (0.0, 0.4)]
    plain = entropy_residual(sol, pairs, psi)
    gen = generalized_entropy_residual([(1.0, sol)], pairs, psi)
    for key in TERM_NAMES + ("R",):
        assert np.array_equal(plain[key], gen[key])
    sol_b = solve_path(Field(g, 0.5 * bump(g)), path, cfg, F, eta)
    mix = generalized_entropy_residual([(0.25, sol), (0.75, sol_b)], pairs, psi)
    other = entropy_residual(sol_b, pairs, psi)
    assert np.allclose(mix["R"], 0.25 * plain["R"] + 0.75 * other["R"], rtol=1e-12, atol=1e-15)
    with pytest.raises(ValueError):
        generalized_entropy_residual([(0.5, sol)], pairs, psi)


def test_unbounded_entropy_detected():
    g = Grid(1, 64, 4.0)
    path = sample_path(ATOM, 0.5, 1)
    sol = solve_path(Field(g, bump(g)), path, SolverConfig(eps=0.02, horizon=0.5), make_flux("burgers"),
                     make_eta("multiplicative", 0.5))
    pair = EntropyPair(0.05, 0.0, make_flux("burgers"))
    pair.dbeta_bound = 0.5
    with pytest.raises(UnboundedEntropy):
        entropy_residual(sol, pair, TestFunction.default(g, 0.5))


def test_accumulator_rows_match_single_path():
    g = Grid(1, 64, 4.0)
    F, eta = make_flux("burgers"), make_eta("multiplicative", 0.5)
    cfg = SolverConfig(eps=0.02, horizon=0.5)
    u0 = bump(g)
    psi = TestFunction.default(g, 0.5)
    rep = ensemble_entropy_residual(u0, ATOM, cfg, F, eta, g, 5, seed0=3, psi=psi, ks=[0.0, 0.5])
    for i in range(5):
        sol = solve_path(Field(g, u0), sample_path(ATOM, 0.5, 3 + i), cfg, F, eta)
        r = entropy_residual(sol, [EntropyPair(4 * g.dx, k, F) for k in (0.0, 0.5)], psi)
        assert np.allclose(rep.R[i], r["R"], rtol=1e-10, atol=1e-13)


def test_report_fields():
    g = Grid(1, 64, 4.0)
    rep = ensemble_entropy_residual(bump(g), ATOM, SolverConfig(eps=0.02, horizon=0.5), make_flux("burgers"),
                                    make_eta("multiplicative", 0.5), g, 12)
    assert rep.ks.shape == (9,)
    assert rep.theta == pytest.approx(4 * g.dx)
    d = rep.to_dict()
    assert set(d["term_means"]) == set(TERM_NAMES)
    assert len(d["mean_R"]) == 9
    assert rep.R.shape == (12, 9)
    assert np.array_equal(rep.R, residual_sum(rep.terms))


def test_martingale_zero_without_noise():
    g = Grid(1, 32, 2.0)
    rep = ensemble_entropy_residual(bump(g), ATOM, SolverConfig(eps=0.0, horizon=1.0, max_dt=0.05),
                                    make_flux("zero"), make_eta("zero"), g, 100, ks=[0.3])
    m = martingale_zero_mean(rep.terms[:, 3, 0])
    assert m.mean == 0.0 and m.z == 0.0 and m.passes


@pytest.mark.parametrize("name", ["additive", "multiplicative"])
def test_martingale_zero_mean_with_noise(name):
    g = Grid(1, 16, 2.0)
    eta = make_eta(name, 0.5)
    u0 = bump(g)
    rep = ensemble_entropy_residual(u0, ATOM, SolverConfig(eps=0.0, horizon=1.0, max_dt=0.05),
                                    make_flux("zero"), eta, g, 10_000, seed0=17, ks=[0.2], theta=0.25)
    m = martingale_zero_mean(rep.terms[:, 3, 0])
    assert m.n == 10_000
    assert abs(m.z) <= 3.0


def test_attainment_zero_for_stationary():
    g = Grid(1, 64, 4.0)
    att = initial_attainment(bump(g), ATOM, SolverConfig(eps=0.0, horizon=1.0), make_flux("zero"),
                             make_eta("zero"), g, [0.2, 0.1], 4)
    assert np.all(att["value"] == 0.0)


def test_attainment_linear_in_h_for_additive_noise():
    g = Grid(1, 32, 4.0)
    hs = [0.2, 0.1, 0.05, 0.025]
    att = initial_attainment(bump(g), ATOM, SolverConfig(eps=0.0, horizon=0.2, max_dt=0.005),
                             make_flux("zero"), make_eta("additive", 0.5), g, hs, 2000)
    assert np.array_equal(att["h"], sorted(hs))
    slope = att["value"] / att["h"]
    assert np.all(np.diff(att["value"]) > 0)
    assert np.max(slope) <= 1.5 * np.min(slope)
