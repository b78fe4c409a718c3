"""Run configuration: one JSON document with a section per stage.

Schema (every key optional; defaults shown)::

    {
      "parameter_file": "desk_default",      # builtin name or path
      "operation": "closing",                # or "opening"
      "trajectory":  {"duration": 0.0035},
      "feedforward": {"dt": 5e-7, "pre_duration": 0.002,
                      "hold_gamma": 1.2, "hold_duration": 0.002},
      "simulation":  {"dt": 5e-7, "t_end": null, "event_tol": 1e-12,
                      "trace_decimation": 1},
      "experiment":  {"n_experiments": 200, "n_operations": 250,
                      "perturbation_fraction": 0.05, "rng_seed": 20240101,
                      "cost": "impact", "custom_cost": "impact_squared",
                      "no_contact_penalty": 1.0, "baseline_duration": 0.01,
                      "workers": 0, "write_histories": false},
      "signal":      {"kind": "feedforward", "voltage": null,
                      "duration": 0.01, "path": null}
    }

Precedence, highest first: command-line flags, the ``SOFTLANDING_WORKERS``
environment variable (worker count only), the config file, the defaults.
A relative ``parameter_file`` or ``signal.path`` resolves against the
directory holding the config file.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .experiment import ExperimentConfig, FeedforwardConfig
from .model import BUILTIN_PARAMS
from .plant import SimConfig

DEFAULTS: dict[str, Any] = {
    "parameter_file": "desk_default",
    "operation": "closing",
    "trajectory": {"duration": 3.5e-3},
    "feedforward": {"dt": 5e-7, "pre_duration": 2e-3, "hold_gamma": 1.2, "hold_duration": 2e-3},
    "simulation": {"dt": 5e-7, "t_end": None, "event_tol": 1e-12, "trace_decimation": 1},
    "experiment": {
        "n_experiments": 200,
        "n_operations": 250,
        "perturbation_fraction": 0.05,
        "rng_seed": 20240101,
        "cost": "impact",
        "custom_cost": "impact_squared",
        "no_contact_penalty": 1.0,
        "baseline_duration": 10e-3,
        "workers": 0,
        "write_histories": False,
    },
    "signal": {"kind": "feedforward", "voltage": None, "duration": 10e-3, "path": None},
}

SIGNAL_KINDS = ("feedforward", "constant", "csv")


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key.startswith("_"):
            continue  # comment fields
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None) -> dict[str, Any]:
    """Read and validate a config file merged over the defaults."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    cfg = _merge(DEFAULTS, doc)
    base = path.resolve().parent
    pf = cfg["parameter_file"]
    if pf not in BUILTIN_PARAMS and not Path(pf).is_absolute():
        cfg["parameter_file"] = str(base / pf)
    sp = cfg["signal"]["path"]
    if sp is not None and not Path(sp).is_absolute():
        cfg["signal"]["path"] = str(base / sp)
    return cfg


def apply_overrides(cfg: dict[str, Any], *, dt=None, seed=None, experiments=None,
                    operations=None, workers=None, env=None) -> dict[str, Any]:
    cfg = copy.deepcopy(cfg)
    env = os.environ if env is None else env
    if env.get("SOFTLANDING_WORKERS"):
        try:
            cfg["experiment"]["workers"] = int(env["SOFTLANDING_WORKERS"])
        except ValueError as exc:
            raise ConfigError("SOFTLANDING_WORKERS must be an integer") from exc
    if dt is not None:
        cfg["feedforward"]["dt"] = dt
        cfg["simulation"]["dt"] = dt
    if seed is not None:
        cfg["experiment"]["rng_seed"] = seed
    if experiments is not None:
        cfg["experiment"]["n_experiments"] = experiments
    if operations is not None:
        cfg["experiment"]["n_operations"] = operations
    if workers is not None:
        cfg["experiment"]["workers"] = workers
    return cfg


def sim_config(cfg: dict[str, Any]) -> SimConfig:
    s = cfg["simulation"]
    try:
        return SimConfig(float(s["dt"]), None if s["t_end"] is None else float(s["t_end"]),
                         float(s["event_tol"]), int(s["trace_decimation"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad simulation section: {exc}") from exc


def experiment_config(cfg: dict[str, Any]) -> ExperimentConfig:
    e = cfg["experiment"]
    f = cfg["feedforward"]
    try:
        ff = FeedforwardConfig(float(f["dt"]), float(f["pre_duration"]), float(f["hold_gamma"]),
                               float(f["hold_duration"]))
        if not (ff.dt > 0 and ff.pre_duration > 0 and ff.hold_gamma > 0 and ff.hold_duration >= 0):
            raise ConfigError("feedforward dt, pre_duration and hold_gamma must be positive")
        return ExperimentConfig(
            n_experiments=int(e["n_experiments"]),
            n_operations=int(e["n_operations"]),
            perturbation_fraction=float(e["perturbation_fraction"]),
            rng_seed=int(e["rng_seed"]),
            operation=str(cfg["operation"]),
            trajectory_duration=float(cfg["trajectory"]["duration"]),
            parameter_file=str(cfg["parameter_file"]),
            cost=str(e["cost"]),
            custom_cost=str(e["custom_cost"]),
            no_contact_penalty=float(e["no_contact_penalty"]),
            baseline_duration=float(e["baseline_duration"]),
            feedforward=ff,
            sim=sim_config(cfg),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc


def signal_section(cfg: dict[str, Any]) -> dict[str, Any]:
    s = cfg["signal"]
    if s["kind"] not in SIGNAL_KINDS:
        raise ConfigError(f"signal.kind must be one of {SIGNAL_KINDS}")
    if s["kind"] == "csv" and not s["path"]:
        raise ConfigError("signal.kind 'csv' needs signal.path")
    return s
