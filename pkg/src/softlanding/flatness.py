"""Flatness-based feedforward: flux, flux rate and coil voltage from a position
reference, and synthesis of the complete sampled drive signal.

Position is a flat output.  Solving Newton's law for the flux,

    lam = sqrt(2 (F_pas - m z'') / R_g'(z))

(positive branch; the force is even in flux), differentiating it once more
in time,

    lam' = (dF/dz z' + dF/dz' z'' - m z''' - R_g''(z) z' lam^2 / 2) / (lam R_g'(z))

and substituting both into the flux equation gives the voltage

    u = R (R_g(z) + R_c(lam)) lam + lam'.

A synthesised :class:`ControlSignal` has three phases.  During pre-charge
the armature rests on its starting stop while the flux follows a 10-15-6
ramp to the value the reference needs at ``t0``.  Tracking then applies the
inverted voltage along the reference.  In the hold phase a closing operation
gets the constant voltage that keeps ``gamma`` times the resting flux at the
closed stop; an opening operation gets zero volts.

Every sample is zero-order held and carries the voltage at the midpoint of
its interval, which keeps the hold error second order in ``dt``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .errors import (
    ConfigError,
    FluxSingularityError,
    InfeasibleTrajectoryError,
    NumericalFault,
    SaturationError,
)
from .model import (
    KSP,
    LSAT,
    MASS,
    RES,
    ActuatorParams,
    passive_force_kernel,
    rc_kernel,
    rg_d1_kernel,
    rg_d2_kernel,
    rg_kernel,
)
from .trajectory import UNIT_QUINTIC, Trajectory, eval_kernel

EPS_RAD = 1e-12  # Wb^2, smallest accepted flux radicand
EPS_LAM = 1e-9  # Wb, smallest flux accepted by the flux-rate inversion
HOLD_FLUX_CAP = 0.95  # hold flux never exceeds this fraction of lambda_sat

PHASE_NAMES = ("pre", "track", "hold")

# kernel status codes
OK, INFEASIBLE, SATURATED, SINGULAR, NONFINITE = range(5)


@dataclass(frozen=True)
class PreChargeConfig:
    duration: float = 2e-3
    start_flux: float | None = None  # None: 0 for closing, hold flux for opening


@dataclass(frozen=True)
class HoldConfig:
    gamma: float = 1.2
    duration: float = 2e-3


@dataclass(frozen=True, eq=False)
class ControlSignal:
    t_start: float
    dt: float
    samples: np.ndarray
    phase_marks: tuple[int, int]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        a, b = self.phase_marks
        if not 0 <= a <= b <= samples.size:
            raise ValueError(f"phase marks {self.phase_marks} out of range")

    def __len__(self) -> int:
        return self.samples.size

    @property
    def t_end(self) -> float:
        return self.t_start + self.samples.size * self.dt

    @property
    def times(self) -> np.ndarray:
        """Start time of every sample interval."""
        return self.t_start + np.arange(self.samples.size) * self.dt

    @property
    def phases(self) -> np.ndarray:
        """Phase index per sample: 0 pre-charge, 1 tracking, 2 hold."""
        ph = np.full(self.samples.size, 2, dtype=np.int8)
        a, b = self.phase_marks
        ph[:a] = 0
        ph[a:b] = 1
        return ph

    def phase_slice(self, name: str) -> slice:
        a, b = self.phase_marks
        return {"pre": slice(0, a), "track": slice(a, b), "hold": slice(b, self.samples.size)}[name]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_s", "voltage_V", "phase"])
            for t, u, ph in zip(self.times, self.samples, self.phases):
                w.writerow([repr(float(t)), repr(float(u)), PHASE_NAMES[ph]])

    @classmethod
    def from_csv(cls, path: str | Path) -> ControlSignal:
        try:
            with open(path, newline="") as fh:
                rows = list(csv.DictReader(fh))
            times = np.array([float(r["time_s"]) for r in rows])
            volts = np.array([float(r["voltage_V"]) for r in rows])
            phases = [PHASE_NAMES.index(r["phase"]) for r in rows]
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read signal CSV {path}: {exc}") from exc
        if len(rows) == 0:
            raise ConfigError(f"signal CSV {path} is empty")
        if any(b < a for a, b in zip(phases, phases[1:])):
            raise ConfigError("signal phases must appear in pre, track, hold order")
        dt = float(times[1] - times[0]) if len(times) > 1 else 1e-6
        if len(times) > 2 and not np.allclose(np.diff(times), dt, rtol=1e-6, atol=0):
            raise ConfigError("signal CSV must be uniformly sampled")
        a = phases.count(0)
        b = a + phases.count(1)
        return cls(float(times[0]), dt, volts, (a, b))


def constant_signal(voltage: float, duration: float, dt: float, t_start: float = 0.0) -> ControlSignal:
    """Constant activation, labelled as a single hold phase."""
    n = max(1, int(round(duration / dt)))
    return ControlSignal(t_start, dt, np.full(n, float(voltage)), (0, 0))


# ---------------------------------------------------------------------------
# compiled inversion


@njit(cache=True)
def _flux_radicand(z, z_d, z_dd, P):
    return 2.0 * (passive_force_kernel(z, z_d, P) - P[MASS] * z_dd) / rg_d1_kernel(z, P)


@njit(cache=True)
def _flux_rate(z, z_d, z_dd, z_ddd, lam, P):
    # ideal spring: dF/dz = -k_sp, dF/dz_dot = 0
    d1 = rg_d1_kernel(z, P)
    num = -P[KSP] * z_d - P[MASS] * z_ddd
    if z_d != 0.0:
        num -= 0.5 * rg_d2_kernel(z, P) * z_d * lam * lam
    return num / (lam * d1)


@njit(cache=True)
def _voltage_along(z, lam, lam_dot, P):
    return P[RES] * (rg_kernel(z, P) + rc_kernel(lam, P)) * lam + lam_dot


@njit(cache=True)
def synth_kernel(P, coeffs, z0, zf, t0, tf, dt, n_pre, n_track, n_hold, lam_start, gamma, closing):
    """Fill the sample array; returns (samples, status, first_bad_index)."""
    n = n_pre + n_track + n_hold
    out = np.zeros(n)
    lsat = P[LSAT]

    rad0 = _flux_radicand(z0, 0.0, 0.0, P)
    if rad0 < EPS_RAD:
        return out, INFEASIBLE, n_pre
    lam0 = math.sqrt(rad0)
    if lam0 >= lsat:
        return out, SATURATED, n_pre

    # pre-charge ramp on the starting stop
    t_pre = n_pre * dt
    rg0 = rg_kernel(z0, P)
    for i in range(n_pre):
        s = (i + 0.5) / n_pre
        shape = s * s * s * (10.0 + s * (-15.0 + 6.0 * s))
        dshape = 30.0 * s * s * (1.0 - s) * (1.0 - s)
        lam = lam_start + (lam0 - lam_start) * shape
        lam_dot = (lam0 - lam_start) * dshape / t_pre
        if abs(lam) >= lsat:
            return out, SATURATED, i
        out[i] = P[RES] * (rc_kernel(lam, P) + rg0) * lam + lam_dot

    # tracking
    for j in range(n_track):
        t = t0 + (j + 0.5) * dt
        z = eval_kernel(coeffs, t0, tf, t, 0)
        z_d = eval_kernel(coeffs, t0, tf, t, 1)
        z_dd = eval_kernel(coeffs, t0, tf, t, 2)
        z_ddd = eval_kernel(coeffs, t0, tf, t, 3)
        rad = _flux_radicand(z, z_d, z_dd, P)
        k = n_pre + j
        if not rad >= EPS_RAD:
            return out, INFEASIBLE, k
        lam = math.sqrt(rad)
        if lam >= lsat:
            return out, SATURATED, k
        if lam < EPS_LAM:
            return out, SINGULAR, k
        u = _voltage_along(z, lam, _flux_rate(z, z_d, z_dd, z_ddd, lam, P), P)
        if not math.isfinite(u):
            return out, NONFINITE, k
        out[k] = u

    # hold
    u_hold = 0.0
    if closing:
        rad_f = _flux_radicand(zf, 0.0, 0.0, P)
        if rad_f < 0.0:
            return out, INFEASIBLE, n_pre + n_track
        lam_h = min(gamma * math.sqrt(rad_f), HOLD_FLUX_CAP * lsat)
        u_hold = P[RES] * (rc_kernel(lam_h, P) + rg_kernel(zf, P)) * lam_h
    for i in range(n_pre + n_track, n):
        out[i] = u_hold
    return out, OK, -1


# ---------------------------------------------------------------------------
# public scalar API


def _arr(p: ActuatorParams) -> np.ndarray:
    return p.as_array()


def flux_radicand(z: float, z_dd: float, p: ActuatorParams, z_d: float = 0.0) -> float:
    """``2 (F_pas - m z'') / R_g'(z)``, the square of the required flux."""
    return _flux_radicand(float(z), float(z_d), float(z_dd), _arr(p))


def flat_flux(z: float, z_dd: float, p: ActuatorParams, z_d: float = 0.0) -> float:
    """Flux that makes the model follow ``z`` with acceleration ``z_dd``.

    Raises InfeasibleTrajectoryError for a negative radicand (the reference
    would need a repelling force) and SaturationError at or above
    ``lambda_sat``.  A zero radicand yields zero flux.
    """
    P = _arr(p)
    rad = _flux_radicand(float(z), float(z_d), float(z_dd), P)
    if not rad >= 0.0:
        raise InfeasibleTrajectoryError(
            f"reference needs a repelling force at z={z} (radicand {rad:.3e})"
        )
    lam = math.sqrt(rad)
    if lam >= p.lambda_sat:
        raise SaturationError(f"required flux {lam:.4g} Wb reaches lambda_sat {p.lambda_sat:.4g} Wb")
    return lam


def _checked_flux(z, z_d, z_dd, p) -> float:
    P = _arr(p)
    rad = _flux_radicand(float(z), float(z_d), float(z_dd), P)
    if not rad >= EPS_RAD:
        raise InfeasibleTrajectoryError(f"flux radicand {rad:.3e} below {EPS_RAD:g} at z={z}")
    lam = flat_flux(z, z_dd, p, z_d)
    if lam < EPS_LAM:
        raise FluxSingularityError(f"flux {lam:.3e} Wb too small to invert")
    return lam


def flat_flux_rate(z: float, z_d: float, z_dd: float, z_ddd: float, p: ActuatorParams) -> float:
    lam = _checked_flux(z, z_d, z_dd, p)
    return _flux_rate(float(z), float(z_d), float(z_dd), float(z_ddd), lam, _arr(p))


def flat_voltage(z: float, z_d: float, z_dd: float, z_ddd: float, p: ActuatorParams) -> float:
    lam = _checked_flux(z, z_d, z_dd, p)
    P = _arr(p)
    lam_dot = _flux_rate(float(z), float(z_d), float(z_dd), float(z_ddd), lam, P)
    return _voltage_along(float(z), lam, lam_dot, P)


def hold_flux(z: float, p: ActuatorParams, gamma: float = 1.2) -> float:
    """Margin-scaled resting flux at ``z``, capped below ``lambda_sat``."""
    return min(gamma * flat_flux(z, 0.0, p), HOLD_FLUX_CAP * p.lambda_sat)


def static_voltage(z: float, lam: float, p: ActuatorParams) -> float:
    """Constant voltage whose steady state at fixed ``z`` is flux ``lam``."""
    P = _arr(p)
    return P[RES] * (rc_kernel(lam, P) + rg_kernel(z, P)) * lam


def synthesize_signal(
    traj: Trajectory,
    p: ActuatorParams,
    dt: float = 5e-7,
    pre_cfg: PreChargeConfig | None = None,
    hold_cfg: HoldConfig | None = None,
) -> ControlSignal:
    """Sampled drive signal: pre-charge, tracking of ``traj``, hold."""
    pre_cfg = pre_cfg or PreChargeConfig()
    hold_cfg = hold_cfg or HoldConfig()
    if not dt > 0:
        raise ValueError("dt must be positive")
    closing = traj.zf < traj.z0
    n_pre = max(1, int(round(pre_cfg.duration / dt)))
    n_track = int(round(traj.duration / dt))
    n_hold = max(0, int(round(hold_cfg.duration / dt)))
    if n_track < 1:
        raise ValueError("trajectory shorter than one sample")
    lam_start = pre_cfg.start_flux
    if lam_start is None:
        lam_start = 0.0 if closing else hold_flux(traj.z0, p, hold_cfg.gamma)
    samples, status, bad = synth_kernel(
        _arr(p), traj.coeff_array, traj.z0, traj.zf, traj.t0, traj.tf, float(dt),
        n_pre, n_track, n_hold, float(lam_start), float(hold_cfg.gamma), closing,
    )
    t_start = traj.t0 - n_pre * dt
    if status != OK:
        t_bad = t_start + (bad + 0.5) * dt
        msg = f"at t={t_bad:.9g} s (sample {bad})"
        if status == INFEASIBLE:
            raise InfeasibleTrajectoryError(f"infeasible reference {msg}", t_bad)
        if status == SATURATED:
            raise SaturationError(f"required flux reaches lambda_sat {msg}", t_bad)
        if status == SINGULAR:
            raise FluxSingularityError(f"flux below {EPS_LAM:g} Wb {msg}", t_bad)
        raise NumericalFault(f"non-finite voltage {msg}", t_bad)
    return ControlSignal(
        t_start, float(dt), samples, (n_pre, n_pre + n_track),
        meta={"t0": traj.t0, "tf": traj.tf, "closing": closing},
    )


__all__ = [
    "ControlSignal",
    "HoldConfig",
    "PreChargeConfig",
    "constant_signal",
    "flat_flux",
    "flat_flux_rate",
    "flat_voltage",
    "flux_radicand",
    "hold_flux",
    "static_voltage",
    "synthesize_signal",
    "UNIT_QUINTIC",
]
