"""Command-line experiment runner.

    levyclaw SUBCOMMAND --config PATH [--workers N] [--out DIR] [--seed S]

Subcommands: simulate, verify-entropy, contract, moments, converge,
young-diag. Exit code 0 means every acceptance rule of the run passed, 1
means a rule failed (or a numerical error stopped the run), 2 means the
configuration was rejected. LEVYCLAW_SEED overrides the configured seed;
--seed overrides both.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Callable

import numpy as np

from .config import ExperimentConfig, load_config
from .discretization import Field, total_variation, write_field_binary, write_field_csv
from .ensemble import run_chunked
from .errors import ConfigError, LevyClawError
from .estimates import (energy_dissipation, fit_gronwall, initial_on, l1_contraction, moment_sweep,
                        pure_jump_moment_exact, viscosity_convergence, dissipation_weights)
from .noise import sample_path, sample_paths, write_path_csv
from .reports import field_figure, line_figure, write_csv, write_json, write_metadata
from .solver import solve_batch, solve_path, write_diagnostics_csv
from .verifier import (TERM_NAMES, TestFunction, ensemble_entropy_residual, initial_attainment,
                       martingale_zero_mean)
from .young_measure import (DiscreteYoungMeasure, from_ensemble, h_catalog, narrow_convergence_test,
                            pushforward_identity)

__all__ = ["main", "run", "SUBCOMMANDS"]


class Rules:
    """Named pass/fail outcomes of one run."""

    def __init__(self):
        self.items: dict[str, bool] = {}

    def add(self, name: str, ok) -> None:
        self.items[name] = bool(ok)

    @property
    def passed(self) -> bool:
        return all(self.items.values())


def _psi(cfg: ExperimentConfig, grid) -> TestFunction:
    p = cfg.verification.psi
    T = cfg.solver.T
    center = tuple(p.center) + (0.0,) * (grid.d - len(p.center))
    return TestFunction(p.t1_frac * T, p.t2_frac * T, center[: grid.d], p.radius_frac * grid.length,
                        grid.length)


# ---------------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    grid = cfg.base_grid()
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    scfg = cfg.solver_config()
    u0 = initial_on(cfg.initial_profile(), grid)
    seed0 = cfg.ensemble.seed0
    path = sample_path(spec, scfg.horizon, seed0)
    sol = solve_path(Field(grid, u0), path, scfg, flux, eta)
    write_field_csv(out / "fields.csv", sol.save_times, sol.saved)
    write_field_binary(out / "field_final.bin", Field(grid, sol.saved[-1], sol.save_times[-1]))
    write_path_csv(path, out / "noise_path.csv")
    write_diagnostics_csv(sol, out / "diagnostics.csv")
    field_figure(out / "snapshots.png", grid.axis, sol.saved, sol.save_times, "path 0")

    def task(idx):
        paths = sample_paths(spec, scfg.horizon, seed0, idx)
        res = solve_batch(u0, paths, scfg.with_(save_times=(scfg.horizon,)), flux, eta, grid)
        fin = res.saved[:, -1]
        axes = tuple(range(1, fin.ndim))
        return {"n_events": np.array([len(p) for p in paths]),
                "mass": np.sum(fin, axis=axes) * grid.cell_volume,
                "l2": np.sqrt(np.sum(fin * fin, axis=axes) * grid.cell_volume),
                "max": np.max(np.abs(fin), axis=axes),
                "finite": np.all(np.isfinite(fin), axis=axes)}

    ens = run_chunked(task, cfg.ensemble.size, workers, cfg.ensemble.chunk)
    write_csv(out / "ensemble.csv", ["path", "seed", "n_events", "mass_T", "L2_T", "max_T"],
              ((i, seed0 + i, int(ens["n_events"][i]), ens["mass"][i], ens["l2"][i], ens["max"][i])
               for i in range(cfg.ensemble.size)))
    rules.add("fields_finite", np.all(ens["finite"]) and np.all(np.isfinite(sol.saved)))
    return {"n_paths": cfg.ensemble.size, "path0_events": len(path),
            "mean_L2_T": float(np.mean(ens["l2"])), "mean_mass_T": float(np.mean(ens["mass"]))}


def cmd_verify_entropy(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    ver = cfg.verification
    levels = cfg.eps_levels()
    base_dx = levels[0][1].dx
    rows, levels_out, violations = [], [], []
    series = {}
    for eps, grid in levels:
        scfg = cfg.solver_config(eps)
        u0 = initial_on(cfg.initial_profile(), grid)
        psi = _psi(cfg, grid)
        thetas = ([t * grid.dx / base_dx for t in ver.theta] if ver.theta
                  else [ver.theta_cells * grid.dx])
        level_viol = []
        for theta in thetas:
            rep = ensemble_entropy_residual(u0, spec, scfg, flux, eta, grid, cfg.ensemble.size,
                                            cfg.ensemble.seed0, psi, theta, None, ver.n_k, ver.k_policy,
                                            ver.tol_factor, workers, cfg.ensemble.chunk)
            ok = rep.passes()
            tm = rep.term_means
            for j, k in enumerate(rep.ks):
                rows.append([eps, grid.n, theta, k, rep.mean[j], rep.stderr[j],
                             *[tm[i, j] for i in range(5)], rep.tolerance, int(ok[j])])
            rules.add(f"entropy_eps{eps:g}_theta{theta:.4g}", np.all(ok))
            level_viol.append(rep.violation())
            entry = {"eps": eps, "N": grid.n, **rep.to_dict()}
            if "martingale" in ver.checks:
                mid = len(rep.ks) // 2
                ms = martingale_zero_mean(rep.terms[:, 3, mid])
                entry["martingale"] = {"k": float(rep.ks[mid]), "mean": ms.mean, "stderr": ms.stderr,
                                       "z": ms.z}
                rules.add(f"martingale_eps{eps:g}_theta{theta:.4g}", ms.passes)
            levels_out.append(entry)
            series[f"eps={eps:g}, theta={theta:.3g}"] = (rep.ks, rep.mean)
        violations.append(level_viol)
    if len(levels) > 1:
        v = np.array(violations)
        rules.add("violation_nonincreasing", np.all(np.diff(v, axis=0) <= 1e-15))
    write_csv(out / "residual.csv",
              ["eps", "N", "theta", "k", "mean_R", "stderr_R", *[f"mean_{n}" for n in TERM_NAMES],
               "tolerance", "pass"], rows)
    summary = {"levels": levels_out, "violations": violations}
    if "attainment" in ver.checks:
        eps, grid = levels[0]
        scfg = cfg.solver_config(eps)
        u0 = initial_on(cfg.initial_profile(), grid)
        hs = [f * cfg.solver.T for f in ver.h_fracs]
        att = initial_attainment(u0, spec, scfg, flux, eta, grid, hs, cfg.ensemble.size, cfg.ensemble.seed0,
                                 _psi(cfg, grid).phi(grid.coords()), workers, cfg.ensemble.chunk)
        write_csv(out / "attainment.csv", ["h", "value", "half_width"],
                  zip(att["h"], att["value"], att["half_width"]))
        val = att["value"]
        rules.add("attainment_monotone", np.all(np.diff(val) > 0))
        rules.add("attainment_ratio", val[0] < 0.25 * val[-1])
        summary["attainment"] = att
        line_figure(out / "attainment.png", att["h"], {"curve": val}, "h", "(1/h) int E|u-u0|phi",
                    bands={"curve": att["half_width"]})
    fig, ax_series = out / "residual.png", {}
    first = next(iter(series.values()))
    for name, (ks, m) in series.items():
        ax_series[name] = np.interp(first[0], ks, m) if len(series) > 1 else m
    line_figure(fig, first[0], {n: s[1] for n, s in series.items()} if len(series) == 1 else ax_series,
                "k (first level grid)", "mean R")
    return summary


def cmd_contract(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    grid = cfg.base_grid()
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    scfg = cfg.solver_config()
    u0 = initial_on(cfg.initial_profile("u"), grid)
    v0 = initial_on(cfg.initial_profile("v"), grid)
    res = l1_contraction(u0, v0, spec, scfg, flux, eta, grid, cfg.ensemble.size, cfg.ensemble.seed0,
                         workers=workers, chunk=cfg.ensemble.chunk)
    mean, hw = res["mean"], res["half_width"]
    write_csv(out / "contraction.csv", ["t", "mean_L1", "half_width"], zip(res["times"], mean, hw))
    equal = bool(np.array_equal(u0, v0))
    rules.add("coupled_events", res["coupled"])
    if equal:
        rules.add("equal_data_zero", np.all(res["per_path"] == 0.0))
        tol = np.zeros_like(mean)
    elif eta.is_zero:
        tol = np.full_like(mean, 1e-12)
    else:
        tv = total_variation(u0 - v0, grid)
        tol = 2 * grid.dx * tv + hw
    inc = np.diff(mean)
    rules.add("contraction_nonincreasing", np.all(inc <= tol[1:]))
    line_figure(out / "contraction.png", res["times"], {"E||u-v||_1": mean}, "t", "L1 distance",
                bands={"E||u-v||_1": hw})
    return {"times": res["times"], "mean": mean, "half_width": hw, "tolerance": tol,
            "max_increment": float(np.max(inc)) if len(inc) else 0.0, "equal_data": equal}


def cmd_moments(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    ver = cfg.verification
    levels = cfg.eps_levels()
    weights = dissipation_weights(("square", "smooth_abs"), ver.dissipation_theta)
    reps = moment_sweep(cfg.initial_profile(), spec, levels, cfg.solver_config(), flux, eta,
                        cfg.ensemble.size, cfg.ensemble.seed0, (2, 4), weights, workers, cfg.ensemble.chunk)
    rows = []
    for r in reps:
        for p, (m, h) in sorted(r.moments.items()):
            for t, mv, hv in zip(r.times, m, h):
                rows.append([r.eps, r.grid.n, t, p, mv, hv])
    write_csv(out / "moments.csv", ["eps", "N", "t", "p", "mean", "half_width"], rows)
    summary = {"levels": [r.to_dict() for r in reps], "gronwall": {}}
    for p in (2, 4):
        maxes = np.array([r.max_moment(p) for r in reps])
        spread = float(np.ptp(maxes) / np.min(maxes))
        summary[f"spread_p{p}"] = spread
        if len(reps) > 1:
            rules.add(f"moment_spread_p{p}", spread < ver.moment_spread)
        base = reps[0]
        m0 = float(base.moments[p][0][0])
        C, A = fit_gronwall(base.times, base.moments[p][0], m0)
        env = A * m0 * np.exp(C * base.times)
        below = all(np.all(r.moments[p][0] <= env + r.moments[p][1]) for r in reps)
        rules.add(f"gronwall_envelope_p{p}", below)
        summary["gronwall"][str(p)] = {"C": C, "A": A}
    if all(r.dissipation for r in reps):
        drows = []
        for name in weights:
            st = energy_dissipation(reps, name)
            for r, m, h in zip(reps, st["mean"], st["half_width"]):
                drows.append([r.eps, r.grid.n, name, m, h])
            summary[f"dissipation_spread_{name}"] = st["spread"]
            if len(reps) > 1:
                rules.add(f"dissipation_bounded_{name}", st["spread"] <= ver.dissipation_factor)
        write_csv(out / "dissipation.csv", ["eps", "N", "weight", "mean", "half_width"], drows)
        worst = 0.0
        for r in reps:
            b = r.l2_balance
            rel = np.abs(b["l2_drop"] - (b["ledger_square"] - b["remainder"])) / np.maximum(np.abs(b["l2_drop"]), 1e-300)
            worst = max(worst, float(np.max(rel)))
        summary["l2_bookkeeping_rel_error"] = worst
        rules.add("l2_bookkeeping", worst <= 1e-12)
    oracle_ok = (flux.is_zero and eta.name == "multiplicative" and spec.kind == "finite_atomic"
                 and all(e == 0 for e, _ in levels) and cfg.eta.g.profile == "constant")
    if oracle_ok:
        r = reps[0]
        g = np.full(r.grid.shape, cfg.eta.g.value)
        exact = pure_jump_moment_exact(initial_on(cfg.initial_profile(), r.grid), r.grid, spec,
                                       cfg.eta.sigma, g, r.times, 2)
        dev = np.abs(r.moments[2][0] - exact)
        rules.add("moment_ode_oracle", np.all(dev <= r.moments[2][1] + 1e-12))
        summary["moment_ode_exact"] = exact
    line_figure(out / "moments.png", reps[0].times,
                {f"p=2, eps={r.eps:g}": r.moments[2][0] for r in reps}
                | {f"p=4, eps={r.eps:g}": r.moments[4][0] for r in reps},
                "t", "E||u||_p^p", bands={f"p=2, eps={r.eps:g}": r.moments[2][1] for r in reps})
    return summary


def cmd_converge(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    levels = cfg.eps_levels()
    if len(levels) < 2:
        raise ConfigError("solver.eps_sweep: converge needs at least two viscosities")
    res = viscosity_convergence(cfg.initial_profile(), spec, levels, cfg.solver_config(), flux, eta,
                                cfg.ensemble.size, cfg.ensemble.seed0, workers, cfg.ensemble.chunk)
    eps = res["eps"]
    ratios = list(res["ratios"]) + [float("nan")]
    write_csv(out / "cauchy.csv", ["eps_i", "eps_next", "mean_L1", "half_width", "ratio_to_next"],
              [[eps[i], eps[i + 1], res["cauchy"][i], res["half_width"][i], ratios[i]]
               for i in range(len(res["cauchy"]))])
    rules.add("cauchy_decreasing", np.all(np.diff(res["cauchy"]) < 0))
    line_figure(out / "cauchy.png", eps[:-1], {"E||u_i - u_i+1||_1": res["cauchy"]}, "eps_i",
                "L1 difference", logx=True, logy=True)
    return {"eps": eps, "cauchy": res["cauchy"], "half_width": res["half_width"], "ratios": res["ratios"]}


def _random_measures(n: int, seed: int) -> list[DiscreteYoungMeasure]:
    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(n):
        k = int(rng.integers(1, 9))
        atoms = np.round(rng.normal(size=k), 1)  # rounding produces ties on purpose
        w = rng.dirichlet(np.ones(k))
        w[-1] = 1.0 - np.sum(w[:-1])
        if w[-1] < 0:
            w = np.abs(w) / np.sum(np.abs(w))
        out.append(DiscreteYoungMeasure(atoms[None], w[None]))
    return out


def _quantile_checks(measures: list[DiscreteYoungMeasure]) -> bool:
    lam = np.linspace(0.001, 0.999, 999)
    for nu in measures:
        q = nu.quantile(lam)[0]
        if np.any(np.diff(q) < 0):
            return False
        C = nu.cumulative()[0][:-1]
        C = C[(C > 0) & (C < 1)]
        if len(C):
            # right-continuity: the value at a jump point equals the limit from the right
            at = nu.quantile(C)[0]
            right = nu.quantile(np.minimum(C + 1e-9, 1 - 1e-12))[0]
            if np.any(at != right):
                return False
    return True


def cmd_young_diag(cfg: ExperimentConfig, out: Path, workers: int, rules: Rules) -> dict:
    ver = cfg.verification
    catalog = {k: v for k, v in h_catalog(ver.pos_part_shift).items() if ver.h_catalog.get(k, False)}
    ms = _random_measures(ver.n_random_measures, cfg.ensemble.seed0)
    disc = pushforward_identity(ms, catalog)
    rules.add("pushforward_identity", disc < 1e-10)
    rules.add("quantile_monotone_right_continuous", _quantile_checks(ms))
    half = DiscreteYoungMeasure([[0.0, 1.0]], [[0.5, 0.5]]).quantile(np.array([0.25, 0.5, 0.75]))[0]
    rules.add("quantile_strict_convention", list(half) == [0.0, 1.0, 1.0])
    summary = {"pushforward_max_discrepancy": disc, "half_half_quantiles": half,
               "n_random_measures": len(ms)}
    spec, flux, eta = cfg.measure_spec(), cfg.flux_model(), cfg.eta_model()
    levels = cfg.eps_levels()
    if len(levels) >= 2:
        res = viscosity_convergence(cfg.initial_profile(), spec, levels, cfg.solver_config(), flux, eta,
                                    cfg.ensemble.size, cfg.ensemble.seed0, workers, cfg.ensemble.chunk)
        coarse = res["coarse"]
        psi = _psi(cfg, coarse)
        cells = np.flatnonzero(psi.phi(coarse.coords()).ravel() > 0)
        table = narrow_convergence_test(res["finals"], catalog, cells)
        rows = []
        for name, vals in table["table"].items():
            for e, v in zip(res["eps"], vals):
                rows.append([e, name, v])
            d = table["differences"][name]
            rules.add(f"narrow_cauchy_{name}", np.all(np.diff(d) <= 0))
        write_csv(out / "narrow.csv", ["eps", "h", "value"], rows)
        ym = from_ensemble(res["finals"][-1][:, None], None, cells)
        ym.to_csv(out / "young_measure_final.csv")
        emp = pushforward_identity(ym, catalog)
        rules.add("pushforward_identity_empirical", emp < 1e-10)
        summary["narrow"] = table
        summary["pushforward_empirical"] = emp
        line_figure(out / "narrow.png", res["eps"], dict(table["table"]), "eps", "int h(u) dmu", logx=True)
    return summary


SUBCOMMANDS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "verify-entropy": cmd_verify_entropy,
    "contract": cmd_contract,
    "moments": cmd_moments,
    "converge": cmd_converge,
    "young-diag": cmd_young_diag,
}

_MODULE_OF = {
    "InvalidMeasure": "noise",
    "KernelUnderresolved": "discretization",
    "CFLViolation": "solver",
    "UnboundedEntropy": "verifier",
    "ConfigMismatch": "estimates",
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="levyclaw", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config path or bundled:NAME")
        sp.add_argument("--workers", type=int, default=1)
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override ensemble.seed0")
    return ap


def run(command: str, cfg: ExperimentConfig, out: Path, workers: int = 1, argv=()) -> tuple[int, dict]:
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "resolved_config.json", {"config": cfg.model_dump(mode="json")})
    rules = Rules()
    summary = SUBCOMMANDS[command](cfg, out, workers, rules)
    write_json(out / "report.json", {"command": command, "rules": rules.items, "pass": rules.passed,
                                     "summary": summary})
    write_metadata(out, command, list(argv))
    return (0 if rules.passed else 1), rules.items


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = _parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be at least 1")
        cfg = load_config(args.config)
        seed = args.seed
        if seed is None and os.environ.get("LEVYCLAW_SEED"):
            try:
                seed = int(os.environ["LEVYCLAW_SEED"])
            except ValueError:
                raise ConfigError("LEVYCLAW_SEED must be an integer") from None
        if seed is not None:
            if seed < 0:
                raise ConfigError("ensemble.seed0: seed must be non-negative")
            cfg = cfg.model_copy(update={"ensemble": cfg.ensemble.model_copy(update={"seed0": seed})})
        out = Path(args.out or cfg.output_dir or f"levyclaw_out/{args.command}")
        code, items = run(args.command, cfg, out, args.workers, argv)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except LevyClawError as err:
        name = type(err).__name__
        print(f"{_MODULE_OF.get(name, 'levyclaw')}: {name}: {err}", file=sys.stderr)
        return 1
    except FloatingPointError as err:
        print(f"solver: {err}", file=sys.stderr)
        return 1
    for name, ok in items.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    print(f"{args.command}: {'pass' if code == 0 else 'fail'} ({out})")
    return code


if __name__ == "__main__":
    sys.exit(main())
