"""Command-line entry point.

Subcommands write their outputs plus a ``manifest.json`` into ``--out-dir``.
Exit codes: 0 success, 2 configuration error, 3 simulation fault.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Any

from . import __version__
from .adapt import write_history_csv
from .config import apply_overrides, experiment_config, load_config, signal_section
from .errors import PLANT_FAULTS, ConfigError, DomainError
from .experiment import (
    monte_carlo,
    start_state,
    uncontrolled_baseline,
)
from .flatness import ControlSignal, constant_signal, synthesize_signal
from .model import baseline_voltage
from .plant import simulate_operation

EXIT_CONFIG = 2
EXIT_FAULT = 3


def write_json_atomic(path: Path, doc: Any) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _manifest(command: str, cfg: dict, outputs: dict[str, Path], started: float, **extra) -> dict:
    doc = {
        "command": command,
        "tool": "softlanding",
        "version": __version__,
        "seed": cfg["experiment"]["rng_seed"],
        "config": cfg,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_clock_s": time.perf_counter() - started,
    }
    doc.update(extra)
    return doc


def _feedforward_signal(ecfg, p) -> ControlSignal:
    ff = ecfg.feedforward
    return synthesize_signal(ecfg.trajectory(p), p, ff.dt, ff.pre, ff.hold)


def cmd_feedforward(cfg: dict, out: Path) -> dict:
    ecfg = experiment_config(cfg)
    p = ecfg.nominal()
    sig = _feedforward_signal(ecfg, p)
    path = out / "signal.csv"
    sig.to_csv(path)
    return {"signal": path}


def cmd_simulate(cfg: dict, out: Path, signal_path: str | None) -> dict:
    ecfg = experiment_config(cfg)
    p = ecfg.nominal()
    s = signal_section(cfg)
    kind = "csv" if signal_path else s["kind"]
    if kind == "feedforward":
        sig = _feedforward_signal(ecfg, p)
    elif kind == "constant":
        v = s["voltage"] if s["voltage"] is not None else baseline_voltage(ecfg.parameter_file)
        sig = constant_signal(float(v), float(s["duration"]), ecfg.sim.dt)
    else:
        sig = ControlSignal.from_csv(signal_path or s["path"])
    result = simulate_operation(p, sig, ecfg.sim, start_state(ecfg, p, p))
    outputs = {"result": out / "result.json"}
    if result.trace is not None:
        outputs["trace"] = out / "trace.csv"
        result.trace.to_csv(outputs["trace"])
    fs = result.final_state
    write_json_atomic(outputs["result"], {
        "contact": result.contact,
        "impact_velocity_mps": result.impact_velocity,
        "impact_time_s": result.impact_time,
        "cost": result.cost,
        "final_state": {"z_m": fs.z, "v_mps": fs.z_dot, "lambda_Wb": fs.lam, "contact": fs.contact.name},
    })
    return outputs


def cmd_baseline(cfg: dict, out: Path) -> dict:
    ecfg = experiment_config(cfg)
    volts = baseline_voltage(ecfg.parameter_file)
    J = uncontrolled_baseline(ecfg)
    path = out / "baseline.json"
    write_json_atomic(path, {"voltage_V": volts, "J_unc_mps": J, "parameter_file": ecfg.parameter_file})
    return {"baseline": path}


def cmd_montecarlo(cfg: dict, out: Path) -> tuple[dict, dict]:
    ecfg = experiment_config(cfg)
    ecfg = dataclasses.replace(ecfg, sim=dataclasses.replace(ecfg.sim, trace_decimation=0))
    res = monte_carlo(ecfg, workers=int(cfg["experiment"]["workers"]))
    outputs = {"percentiles": out / "percentiles.csv"}
    res.table.to_csv(outputs["percentiles"])
    if cfg["experiment"]["write_histories"]:
        for e in res.experiments:
            path = out / f"history_{e.index}.csv"
            write_history_csv(e.state, path)
            outputs[f"history_{e.index}"] = path
    t = res.table
    curves = {
        "J_unc": t.J_unc,
        "p50": [float(x) for x in t.p50],
        "inc_p50": [float(x) for x in t.inc_p50],
    }
    return outputs, {"curves": curves}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="softlanding", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out-dir", default=".", help="directory for outputs (default: cwd)")
    common.add_argument("--dt", type=float, help="sample and integration step, s")
    common.add_argument("--seed", type=int, help="Monte-Carlo seed")
    common.add_argument("--workers", type=int, help="parallel worker processes (0: one per CPU)")
    common.add_argument("--experiments", type=int, help="number of experiments")
    common.add_argument("--operations", type=int, help="operations per experiment")
    p_sim = sub.add_parser("simulate", parents=[common], help="simulate one operation")
    p_sim.add_argument("--signal", help="replay a signal CSV instead of the configured source")
    sub.add_parser("feedforward", parents=[common], help="write the feedforward signal CSV")
    sub.add_parser("baseline", parents=[common], help="uncontrolled constant-voltage baseline")
    sub.add_parser("montecarlo", parents=[common], help="Monte-Carlo adaptation study")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = apply_overrides(load_config(args.config), dt=args.dt, seed=args.seed,
                              experiments=args.experiments, operations=args.operations,
                              workers=args.workers)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        extra: dict = {}
        if args.command == "simulate":
            outputs = cmd_simulate(cfg, out, args.signal)
        elif args.command == "feedforward":
            outputs = cmd_feedforward(cfg, out)
        elif args.command == "baseline":
            outputs = cmd_baseline(cfg, out)
        else:
            outputs, extra = cmd_montecarlo(cfg, out)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PLANT_FAULTS as exc:
        print(f"simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    manifest = out / "manifest.json"
    outputs["manifest"] = manifest
    write_json_atomic(manifest, _manifest(args.command, cfg, outputs, started, **extra))
    for name, path in outputs.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
