import csv
import json
import subprocess
import sys

import pytest

from softlanding.cli import main
from softlanding.config import DEFAULTS, apply_overrides, load_config


def run(*args):
    return main(list(args))


def write_cfg(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def test_feedforward(tmp_path):
    assert run("feedforward", "--out-dir", str(tmp_path / "a")) == 0
    rows = list(csv.DictReader((tmp_path / "a" / "signal.csv").open()))
    phases = [r["phase"] for r in rows]
    assert set(phases) == {"pre", "track", "hold"}
    assert run("feedforward", "--out-dir", str(tmp_path / "b"), "--dt", "1e-6") == 0
    assert run("feedforward", "--out-dir", str(tmp_path / "c"), "--dt", "2e-6") == 0
    n_b = sum(r["phase"] == "track" for r in csv.DictReader((tmp_path / "b" / "signal.csv").open()))
    n_c = sum(r["phase"] == "track" for r in csv.DictReader((tmp_path / "c" / "signal.csv").open()))
    assert (n_b, n_c) == (3500, 1750)
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "feedforward"
    assert {"config", "version", "seed", "outputs", "wall_clock_s"} <= set(manifest)


def test_feedforward_infeasible(tmp_path, capsys):
    cfg = write_cfg(tmp_path, {"operation": "opening", "trajectory": {"duration": 5e-4}})
    assert run("feedforward", "--config", cfg, "--out-dir", str(tmp_path)) == 3
    assert "t=" in capsys.readouterr().err


def test_simulate_and_replay(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "--out-dir", str(out)) == 0
    res = json.loads((out / "result.json").read_text())
    assert res["contact"] and abs(res["impact_velocity_mps"]) < 0.1
    assert (out / "trace.csv").read_text().startswith("t_s,z_m,v_mps,lambda_Wb,u_V,phase")
    run("feedforward", "--out-dir", str(tmp_path))
    out2 = tmp_path / "replay"
    assert run("simulate", "--signal", str(tmp_path / "signal.csv"), "--out-dir", str(out2)) == 0
    assert json.loads((out2 / "result.json").read_text()) == res


def test_simulate_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("simulate", "--config", str(bad), "--out-dir", str(tmp_path)) == 2
    cfg = write_cfg(tmp_path, {"simulation": {"dtt": 1}}, "unknown.json")
    assert run("simulate", "--config", cfg, "--out-dir", str(tmp_path)) == 2
    cfg = write_cfg(tmp_path, {"signal": {"kind": "constant", "voltage": 1e6}}, "sat.json")
    capsys.readouterr()
    assert run("simulate", "--config", cfg, "--out-dir", str(tmp_path)) == 3
    assert "t=5e-07" in capsys.readouterr().err
    cfg = write_cfg(tmp_path, {"parameter_file": "nowhere.json"}, "pf.json")
    assert run("simulate", "--config", cfg, "--out-dir", str(tmp_path)) == 2


def test_baseline(tmp_path, capsys):
    assert run("baseline", "--out-dir", str(tmp_path)) == 0
    doc = json.loads((tmp_path / "baseline.json").read_text())
    assert doc["J_unc_mps"] > 0 and doc["voltage_V"] == pytest.approx(254.5368548086817)
    cfg = write_cfg(tmp_path, {"parameter_file": "paper_table1"})
    # the verbatim table cannot close the device at its nominal 30 V
    capsys.readouterr()
    assert run("baseline", "--config", cfg, "--out-dir", str(tmp_path / "t1")) == 3
    assert "does not close" in capsys.readouterr().err


def test_montecarlo_deterministic(tmp_path):
    args = ["montecarlo", "--experiments", "2", "--operations", "6", "--seed", "11", "--workers", "1"]
    assert run(*args, "--out-dir", str(tmp_path / "a")) == 0
    assert run(*args, "--out-dir", str(tmp_path / "b")) == 0
    a = (tmp_path / "a" / "percentiles.csv").read_bytes()
    assert a == (tmp_path / "b" / "percentiles.csv").read_bytes()
    assert a.splitlines()[0].split(b",")[:5] == [b"n", b"p10", b"p50", b"p90", b"J_unc"]
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["seed"] == 11 and len(manifest["curves"]["p50"]) == 6


def test_montecarlo_single_experiment_and_histories(tmp_path):
    cfg = write_cfg(tmp_path, {"experiment": {"write_histories": True}})
    assert run("montecarlo", "--config", cfg, "--experiments", "1", "--operations", "4",
               "--out-dir", str(tmp_path)) == 0
    rows = list(csv.DictReader((tmp_path / "percentiles.csv").open()))
    assert all(r["p10"] == r["p50"] == r["p90"] for r in rows)
    assert (tmp_path / "history_0.csv").exists()


def test_precedence(tmp_path):
    cfg = load_config(write_cfg(tmp_path, {"experiment": {"workers": 3, "rng_seed": 5}}))
    assert apply_overrides(cfg, env={})["experiment"]["workers"] == 3
    assert apply_overrides(cfg, env={"SOFTLANDING_WORKERS": "2"})["experiment"]["workers"] == 2
    assert apply_overrides(cfg, workers=4, env={"SOFTLANDING_WORKERS": "2"})["experiment"]["workers"] == 4
    assert apply_overrides(cfg, seed=9, env={})["experiment"]["rng_seed"] == 9
    assert load_config(None) == DEFAULTS


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "softlanding", "baseline", "--out-dir", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "baseline" in r.stdout
