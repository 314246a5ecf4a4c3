from __future__ import annotations

import json

import numpy as np
import pytest

from levyclaw import cli
from levyclaw.config import load_config, parse_config
from levyclaw.errors import CFLViolation, ConfigError
from levyclaw.reports import hash_outputs

SMALL = {
    "name": "small",
    "grid": {"d": 1, "N": 64, "L": 4.0},
    "solver": {"eps": 0.02, "T": 0.3, "n_saves": 4},
    "initial": {"profile": "bump"},
    "flux": {"name": "burgers"},
    "eta": {"name": "multiplicative", "sigma": 0.5},
    "measure": {"kind": "finite_atomic", "cutoff": 0.25, "atoms": [[0.5, 2.0]]},
    "ensemble": {"size": 8, "seed0": 3},
}


def write_cfg(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def with_(base, **blocks):
    out = json.loads(json.dumps(base))
    for k, v in blocks.items():
        out[k] = v if not isinstance(v, dict) else {**out.get(k, {}), **v}
    return out


def test_bundled_deterministic_burgers_passes(tmp_path, capsys):
    code = cli.main(["verify-entropy", "--config", "bundled:burgers_deterministic", "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "residual.csv").exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["pass"] and report["schema_version"] == 1
    assert "PASS" in capsys.readouterr().out


def test_contract_equal_data_gives_zero_curve(tmp_path):
    cfg = write_cfg(tmp_path, with_(SMALL, v_initial={"profile": "bump"}))
    out = tmp_path / "run"
    assert cli.main(["contract", "--config", cfg, "--out", str(out)]) == 0
    rows = np.loadtxt(out / "contraction.csv", delimiter=",", skiprows=1)
    assert np.all(rows[:, 1:] == 0.0)


def test_malformed_measure_exits_2(tmp_path, capsys):
    cfg = write_cfg(tmp_path, with_(SMALL, measure={"kind": "truncated_power_law", "alpha": 2.5}))
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "measure" in err and "2.5" in err
    assert not (tmp_path / "x").exists()


def test_schema_errors_name_the_field(tmp_path, capsys):
    cfg = write_cfg(tmp_path, with_(SMALL, grid={"N": -3}))
    assert cli.main(["simulate", "--config", cfg]) == 2
    assert "grid.N" in capsys.readouterr().err
    cfg = write_cfg(tmp_path, with_(SMALL, solver={"bogus": 1}))
    assert cli.main(["simulate", "--config", cfg]) == 2
    assert "solver.bogus" in capsys.readouterr().err
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.main(["simulate", "--config", str(tmp_path / "bad.json")]) == 2


def test_converge_needs_two_levels(tmp_path, capsys):
    cfg = write_cfg(tmp_path, SMALL)
    assert cli.main(["converge", "--config", cfg, "--out", str(tmp_path / "c")]) == 2
    assert "eps_sweep" in capsys.readouterr().err


def test_inner_errors_carry_module_context(tmp_path, capsys, monkeypatch):
    def boom(*args):
        raise CFLViolation("step exceeds the stability bound")

    monkeypatch.setitem(cli.SUBCOMMANDS, "simulate", boom)
    cfg = write_cfg(tmp_path, SMALL)
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert capsys.readouterr().err.startswith("solver: CFLViolation:")


def seed_of(out):
    return json.loads((out / "resolved_config.json").read_text())["config"]["ensemble"]["seed0"]


def test_seed_precedence(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, SMALL)
    monkeypatch.delenv("LEVYCLAW_SEED", raising=False)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    assert seed_of(tmp_path / "a") == 3
    monkeypatch.setenv("LEVYCLAW_SEED", "11")
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b")])
    assert seed_of(tmp_path / "b") == 11
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "5"])
    assert seed_of(tmp_path / "c") == 5
    monkeypatch.setenv("LEVYCLAW_SEED", "abc")
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "d")]) == 2


def test_resolved_config_materializes_defaults(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")])
    resolved = json.loads((tmp_path / "o" / "resolved_config.json").read_text())
    assert resolved["schema_version"] == 1
    body = resolved["config"]
    assert body["solver"]["cfl"] == 0.8
    assert body["verification"]["n_k"] == 9
    assert body["ensemble"]["chunk"] == 64
    assert parse_config(body).grid.N == 64


def test_simulate_artifacts_and_csv_dialect(tmp_path):
    cfg = write_cfg(tmp_path, SMALL)
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    for name in ("fields.csv", "field_final.bin", "noise_path.csv", "diagnostics.csv", "snapshots.png",
                 "ensemble.csv", "report.json", "metadata.json"):
        assert (out / name).exists(), name
    raw = (out / "diagnostics.csv").read_bytes()
    assert b"\r" not in raw
    assert raw.splitlines()[0] == b"t,mass,L2,max,event_flag"


@pytest.mark.parametrize("command", ["simulate", "contract", "young-diag"])
def test_byte_reproducible_and_worker_invariant(tmp_path, command):
    data = with_(SMALL, v_initial={"profile": "bump", "amplitude": 0.8, "radius": 0.6},
                 solver={"eps_sweep": [0.04, 0.02]}, ensemble={"size": 12, "chunk": 4},
                 verification={"n_random_measures": 50})
    cfg = write_cfg(tmp_path, data)
    hashes = []
    for i, workers in enumerate((1, 1, 2)):
        out = tmp_path / f"run{i}"
        cli.main([command, "--config", cfg, "--out", str(out), "--workers", str(workers)])
        hashes.append(hash_outputs(out))
    assert hashes[0] == hashes[1] == hashes[2]
    assert "metadata.json" not in hashes[0]


def test_config_cross_checks():
    with pytest.raises(ConfigError):
        parse_config(with_(SMALL, flux={"name": "linear", "direction": [1.0, 0.0]}))
    with pytest.raises(ConfigError):
        parse_config(with_(SMALL, verification={"psi": {"t1_frac": 0.8, "t2_frac": 0.5}}))
    with pytest.raises(ConfigError):
        parse_config(with_(SMALL, verification={"h_fracs": [0.0, 0.5]}))
    with pytest.raises(ConfigError):
        parse_config(with_(SMALL, schema_version=7))
    with pytest.raises(ConfigError):
        load_config("bundled:no_such_config")
