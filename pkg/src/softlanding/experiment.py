"""Monte-Carlo study of run-to-run adaptation from perturbed initial models.

Each experiment draws a controller model whose six magnetic parameters are
scaled by independent uniform factors in ``[1 - f, 1 + f]``, then runs the
adaptation loop for ``n_operations`` switching operations against the
nominal plant.  Operation 0 evaluates the perturbed model as drawn.

Per-experiment random streams come from
``numpy.random.SeedSequence(rng_seed, spawn_key=(k,))``, so experiment ``k``
is reproducible on its own and adding experiments never reshuffles earlier
ones.

Percentiles use linear interpolation between order statistics
(``numpy.percentile(..., method="linear")``): for sorted costs
``x_0 <= ... <= x_{m-1}`` the q-th percentile is
``x_j + (h - j) (x_{j+1} - x_j)`` with ``h = (m - 1) q / 100`` and
``j = floor(h)``.
"""

from __future__ import annotations

import csv
import dataclasses
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from . import adapt
from .errors import ConfigError, NoContactError
from .flatness import (
    ControlSignal,
    HoldConfig,
    PreChargeConfig,
    constant_signal,
    hold_flux,
    static_voltage,
    synthesize_signal,
)
from .model import ActuatorParams, Contact, State, baseline_voltage, load_params, rc_kernel, rg_kernel
from .plant import CUSTOM_COSTS, OperationResult, SimConfig, cost_impact, simulate_operation
from .trajectory import Trajectory, design_quintic

OPERATIONS = ("closing", "opening")
COSTS = ("impact", "custom")


@dataclass(frozen=True)
class FeedforwardConfig:
    dt: float = 5e-7
    pre_duration: float = 2e-3
    hold_gamma: float = 1.2
    hold_duration: float = 2e-3

    @property
    def pre(self) -> PreChargeConfig:
        return PreChargeConfig(self.pre_duration)

    @property
    def hold(self) -> HoldConfig:
        return HoldConfig(self.hold_gamma, self.hold_duration)


@dataclass(frozen=True)
class ExperimentConfig:
    n_experiments: int = 200
    n_operations: int = 250
    perturbation_fraction: float = 0.05
    rng_seed: int = 20240101
    operation: str = "closing"
    trajectory_duration: float = 3.5e-3
    parameter_file: str = "desk_default"
    cost: str = "impact"
    custom_cost: str = "impact_squared"
    no_contact_penalty: float = 1.0  # failed operations cost this multiple of J_unc
    baseline_duration: float = 10e-3
    feedforward: FeedforwardConfig = field(default_factory=FeedforwardConfig)
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if self.n_experiments < 1:
            raise ConfigError("n_experiments must be >= 1")
        if self.n_operations < 0:
            raise ConfigError("n_operations must be >= 0")
        if not 0 <= self.perturbation_fraction < 1:
            raise ConfigError("perturbation_fraction must lie in [0, 1)")
        if not self.trajectory_duration > 0:
            raise ConfigError("trajectory_duration must be positive")
        if self.operation not in OPERATIONS:
            raise ConfigError(f"operation must be one of {OPERATIONS}")
        if self.cost not in COSTS:
            raise ConfigError(f"cost must be one of {COSTS}")
        if self.cost == "custom" and self.custom_cost not in CUSTOM_COSTS:
            raise ConfigError(f"custom_cost must be one of {sorted(CUSTOM_COSTS)}")
        if not self.no_contact_penalty > 0:
            raise ConfigError("no_contact_penalty must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")

    def nominal(self) -> ActuatorParams:
        return load_params(self.parameter_file)

    def trajectory(self, p: ActuatorParams) -> Trajectory:
        z0, zf = (p.z_max, p.z_min) if self.operation == "closing" else (p.z_min, p.z_max)
        return design_quintic(z0, zf, 0.0, self.trajectory_duration)

    def cost_function(self) -> Callable[[OperationResult], float]:
        return cost_impact if self.cost == "impact" else CUSTOM_COSTS[self.custom_cost]

    def sim_config(self) -> SimConfig:
        if self.cost == "custom" and self.custom_cost == "hold_energy" and self.sim.trace_decimation == 0:
            return dataclasses.replace(self.sim, trace_decimation=1)
        return self.sim


def perturb_parameters(p_nominal: ActuatorParams, fraction: float, rng: np.random.Generator) -> ActuatorParams:
    """Scale each of kappa1..kappa6 by an independent U[1-f, 1+f] factor."""
    if not 0 <= fraction < 1:
        raise ValueError("fraction must lie in [0, 1)")
    factors = rng.uniform(1.0 - fraction, 1.0 + fraction, size=6)
    return p_nominal.with_magnetic(p_nominal.magnetic * factors)


def experiment_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def plant_steady_flux(p: ActuatorParams, z: float, u: float) -> float:
    """Flux at which a constant voltage ``u`` balances the resistive drop at fixed ``z``."""
    P = p.as_array()
    top = p.kappa2 * (1.0 - 1e-15)
    return brentq(lambda lam: p.resistance * (rc_kernel(lam, P) + rg_kernel(z, P)) * lam - u,
                  0.0, top, xtol=1e-18, rtol=4 * np.finfo(float).eps)


def start_state(cfg: ExperimentConfig, p_true: ActuatorParams, p_ctrl: ActuatorParams) -> State:
    """Plant state at the start of an operation.

    Closing starts de-energised on the upper stop.  Opening starts on the
    lower stop carrying the flux the plant settled to under the hold
    voltage of the preceding closing operation.
    """
    if cfg.operation == "closing":
        return State.at_upper_stop(p_true, 0.0)
    z = p_true.z_min
    lam_h = hold_flux(z, p_ctrl, cfg.feedforward.hold_gamma)
    u = static_voltage(z, lam_h, p_ctrl)
    return State.at_lower_stop(p_true, plant_steady_flux(p_true, z, u))


def operation_result(cfg: ExperimentConfig, p_true: ActuatorParams, p_ctrl: ActuatorParams) -> OperationResult:
    """Synthesise the feedforward from ``p_ctrl`` and run it on ``p_true``."""
    ff = cfg.feedforward
    sig = synthesize_signal(cfg.trajectory(p_ctrl), p_ctrl, ff.dt, ff.pre, ff.hold)
    return simulate_operation(p_true, sig, cfg.sim_config(), start_state(cfg, p_true, p_ctrl))


def baseline_signal(cfg: ExperimentConfig) -> ControlSignal:
    return constant_signal(baseline_voltage(cfg.parameter_file), cfg.baseline_duration, cfg.sim.dt)


def uncontrolled_baseline(cfg: ExperimentConfig, voltage: float | None = None) -> float:
    """|impact velocity| of a constant-voltage closing on the nominal plant."""
    p = cfg.nominal()
    if voltage is None:
        voltage = baseline_voltage(cfg.parameter_file)
    sig = constant_signal(voltage, cfg.baseline_duration, cfg.sim.dt)
    r = simulate_operation(p, sig, dataclasses.replace(cfg.sim, t_end=None, trace_decimation=0),
                           State.at_upper_stop(p, 0.0), Contact.AT_LOWER_STOP)
    if r.impact_velocity is None:
        raise NoContactError(f"{voltage} V constant activation does not close the device")
    return abs(r.impact_velocity)


@dataclass(frozen=True, eq=False)
class ExperimentResult:
    index: int
    initial: np.ndarray  # perturbed controller magnetics / nominal
    costs: np.ndarray
    best: np.ndarray
    final: np.ndarray  # adapted incumbent magnetics / nominal
    state: adapt.AdaptationState


def run_experiment(cfg: ExperimentConfig, experiment_index: int, J_unc: float | None = None) -> ExperimentResult:
    if J_unc is None:
        J_unc = uncontrolled_baseline(cfg)
    p_true = cfg.nominal()
    p_init = perturb_parameters(p_true, cfg.perturbation_fraction, experiment_rng(cfg.rng_seed, experiment_index))
    cost_fn = cfg.cost_function()

    def plant(kappa: np.ndarray) -> float:
        return cost_fn(operation_result(cfg, p_true, p_true.with_magnetic(kappa)))

    s = adapt.run_loop(p_init.magnetic, plant, cfg.n_operations, fault_cost=cfg.no_contact_penalty * J_unc)
    nom = p_true.magnetic
    return ExperimentResult(
        experiment_index,
        p_init.magnetic / nom,
        adapt.costs(s),
        adapt.best_so_far(s),
        s.physical(s.p_inc) / nom,
        s,
    )


@dataclass(frozen=True, eq=False)
class PercentileTable:
    """Per-operation cost percentiles across experiments.

    ``p*`` columns summarise the cost of the operation actually performed at
    index n; ``inc_p*`` columns summarise the incumbent (best-so-far) cost.
    """

    n: np.ndarray
    p10: np.ndarray
    p50: np.ndarray
    p90: np.ndarray
    inc_p10: np.ndarray
    inc_p50: np.ndarray
    inc_p90: np.ndarray
    J_unc: float

    @classmethod
    def from_costs(cls, costs: np.ndarray, best: np.ndarray, J_unc: float) -> PercentileTable:
        costs = np.atleast_2d(costs)
        best = np.atleast_2d(best)
        q = [10, 50, 90]
        raw = np.percentile(costs, q, axis=0, method="linear")
        inc = np.percentile(best, q, axis=0, method="linear")
        return cls(np.arange(costs.shape[1]), *raw, *inc, float(J_unc))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "p10", "p50", "p90", "J_unc", "inc_p10", "inc_p50", "inc_p90"])
            for i in range(self.n.size):
                w.writerow([int(self.n[i])] + [repr(float(c[i])) for c in
                           (self.p10, self.p50, self.p90)] + [repr(self.J_unc)]
                           + [repr(float(c[i])) for c in (self.inc_p10, self.inc_p50, self.inc_p90)])


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    table: PercentileTable
    experiments: list[ExperimentResult]

    @property
    def costs(self) -> np.ndarray:
        return np.array([e.costs for e in self.experiments])

    @property
    def best(self) -> np.ndarray:
        return np.array([e.best for e in self.experiments])

    @property
    def final_params(self) -> np.ndarray:
        return np.array([e.final for e in self.experiments])


def _run_indexed(args):
    cfg, k, J_unc = args
    return run_experiment(cfg, k, J_unc)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("SOFTLANDING_WORKERS", "0") or 0)
    if workers <= 0:
        workers = os.cpu_count() or 1
    return workers


def monte_carlo(cfg: ExperimentConfig, workers: int | None = 1,
                indices: list[int] | None = None) -> MonteCarloResult:
    """Run all experiments and aggregate percentiles.

    ``workers`` caps the process pool (``None`` reads ``SOFTLANDING_WORKERS``,
    ``0`` means one per CPU).  Results are independent of scheduling.
    """
    J_unc = uncontrolled_baseline(cfg)
    if indices is None:
        indices = list(range(cfg.n_experiments))
    jobs = [(cfg, k, J_unc) for k in indices]
    workers = min(resolve_workers(workers), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_run_indexed(j) for j in jobs]
    results.sort(key=lambda r: r.index)
    if cfg.n_operations == 0:
        empty = np.zeros((len(results), 0))
        table = PercentileTable.from_costs(empty, empty, J_unc)
    else:
        table = PercentileTable.from_costs(np.array([r.costs for r in results]),
                                           np.array([r.best for r in results]), J_unc)
    return MonteCarloResult(table, results)


def max_pairwise_distance(x: np.ndarray) -> float:
    """Largest Chebyshev distance between any two rows."""
    x = np.asarray(x)
    if len(x) < 2:
        return 0.0
    return float(np.max(np.abs(x[:, None, :] - x[None, :, :])))


__all__ = [
    "ExperimentConfig",
    "FeedforwardConfig",
    "MonteCarloResult",
    "PercentileTable",
    "monte_carlo",
    "perturb_parameters",
    "run_experiment",
    "uncontrolled_baseline",
]
