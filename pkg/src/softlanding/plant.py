"""Hybrid plant simulation and per-operation costs.

The interior dynamics are integrated with classical fixed-step RK4 under a
zero-order-held voltage.  Two unilateral stops bound the travel:

* while the armature rests on a stop only the flux equation is integrated;
  the instant the net mechanical force turns toward the interior is found by
  bisection and the remainder of the step is flown freely;
* reaching the *target* stop (the one opposite the starting stop) ends the
  operation; the crossing is bisected to ``event_tol`` and the velocity just
  before contact is the impact velocity;
* falling back onto the starting stop re-seats the armature there with zero
  velocity.

Everything runs in one compiled kernel, so identical inputs give
bit-identical results.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from .errors import NoContactError, NumericalFault, SaturationError
from .flatness import PHASE_NAMES, ControlSignal
from .model import (
    LSAT,
    ZMAX,
    ZMIN,
    ActuatorParams,
    Contact,
    State,
    check_state,
    deriv_kernel,
)

_RUNNING, _IMPACT, _HORIZON, _SATURATED, _NONFINITE = range(5)
_BISECT_ITERS = 60


@dataclass(frozen=True)
class SimConfig:
    dt: float = 5e-7
    t_end: float | None = None  # absolute end time; None runs to the end of the signal
    event_tol: float = 1e-12
    trace_decimation: int = 0  # 0 disables the trace

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.t_end is not None and not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")
        if self.trace_decimation < 0:
            raise ValueError("trace_decimation must be >= 0")


@dataclass(frozen=True, eq=False)
class Trace:
    t: np.ndarray
    z: np.ndarray
    v: np.ndarray
    lam: np.ndarray
    u: np.ndarray
    phase: np.ndarray
    dt: float  # time between consecutive rows

    def __len__(self) -> int:
        return self.t.size

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_s", "z_m", "v_mps", "lambda_Wb", "u_V", "phase"])
            for row in zip(self.t, self.z, self.v, self.lam, self.u, self.phase):
                w.writerow([repr(float(x)) for x in row[:5]] + [PHASE_NAMES[row[5]]])


@dataclass(frozen=True, eq=False)
class OperationResult:
    impact_velocity: float | None
    impact_time: float | None
    cost: float | None  # |impact_velocity|, None without contact
    final_state: State
    trace: Trace | None = None

    @property
    def contact(self) -> bool:
        return self.impact_velocity is not None


# ---------------------------------------------------------------------------
# compiled kernel


@njit(cache=True)
def _flux_step(z, lam, u, h, P):
    # flux-only RK4 with the armature clamped to a stop
    _, _, a1 = deriv_kernel(z, 0.0, lam, u, P)
    _, _, a2 = deriv_kernel(z, 0.0, lam + 0.5 * h * a1, u, P)
    _, _, a3 = deriv_kernel(z, 0.0, lam + 0.5 * h * a2, u, P)
    _, _, a4 = deriv_kernel(z, 0.0, lam + h * a3, u, P)
    return lam + h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)


@njit(cache=True)
def _full_step(z, v, lam, u, h, P):
    """One RK4 step; returns (z, v, lam, ok) with ok False on stage saturation."""
    lsat = P[LSAT]
    zlo = P[ZMIN]
    z1, v1, l1 = deriv_kernel(z, v, lam, u, P)
    lb = lam + 0.5 * h * l1
    if abs(lb) >= lsat:
        return z, v, lam, False
    z2, v2, l2 = deriv_kernel(max(z + 0.5 * h * z1, zlo), v + 0.5 * h * v1, lb, u, P)
    lc = lam + 0.5 * h * l2
    if abs(lc) >= lsat:
        return z, v, lam, False
    z3, v3, l3 = deriv_kernel(max(z + 0.5 * h * z2, zlo), v + 0.5 * h * v2, lc, u, P)
    ld = lam + h * l3
    if abs(ld) >= lsat:
        return z, v, lam, False
    z4, v4, l4 = deriv_kernel(max(z + h * z3, zlo), v + h * v3, ld, u, P)
    zn = z + h / 6.0 * (z1 + 2.0 * z2 + 2.0 * z3 + z4)
    vn = v + h / 6.0 * (v1 + 2.0 * v2 + 2.0 * v3 + v4)
    ln = lam + h / 6.0 * (l1 + 2.0 * l2 + 2.0 * l3 + l4)
    return zn, vn, ln, abs(ln) < lsat


@njit(cache=True)
def _leaves(z, lam, u, P, sign):
    # net force points away from the stop (sign -1 at the upper stop, +1 at the lower)
    _, acc, _ = deriv_kernel(z, 0.0, lam, u, P)
    return acc * sign > 0.0


@njit(cache=True)
def sim_kernel(P, samples, sig_t0, sig_dt, n_pre, n_track, t0, h, n_steps,
               z, v, lam, contact, target, event_tol, decim):
    """Integrate one operation.

    ``contact``/``target`` use the Contact codes (0 interior, 1 lower, 2 upper).
    Returns (status, t_event, z, v, lam, contact, trace_arrays, n_rows).
    """
    zlo = P[ZMIN]
    zhi = P[ZMAX]
    n_samp = samples.shape[0]
    n_rows = n_steps // decim + 2 if decim > 0 else 0
    tr = np.empty((6, n_rows))
    row = 0
    status = _HORIZON
    t_event = t0 + n_steps * h

    for i in range(n_steps):
        t = t0 + i * h
        k = int(math.floor((t + 0.5 * h - sig_t0) / sig_dt))
        if k < 0:
            u = 0.0
            ph = 0
        else:
            if k >= n_samp:
                k = n_samp - 1
            u = samples[k]
            ph = 0 if k < n_pre else (1 if k < n_pre + n_track else 2)

        if decim > 0 and i % decim == 0:
            tr[0, row] = t
            tr[1, row] = z
            tr[2, row] = v
            tr[3, row] = lam
            tr[4, row] = u
            tr[5, row] = ph
            row += 1

        if contact != 0:
            zs = zhi if contact == 2 else zlo
            sign = -1.0 if contact == 2 else 1.0
            ln = _flux_step(zs, lam, u, h, P)
            if not math.isfinite(ln):
                return _NONFINITE, t + h, z, v, lam, contact, tr, row
            if abs(ln) >= P[LSAT]:
                return _SATURATED, t + h, z, v, lam, contact, tr, row
            if not _leaves(zs, ln, u, P, sign):
                lam = ln
                continue
            # locate departure inside the step
            lo = 0.0
            hi = 1.0
            if _leaves(zs, lam, u, P, sign):
                hi = 0.0
            else:
                for _ in range(_BISECT_ITERS):
                    mid = 0.5 * (lo + hi)
                    if _leaves(zs, _flux_step(zs, lam, u, mid * h, P), u, P, sign):
                        hi = mid
                    else:
                        lo = mid
            lam = _flux_step(zs, lam, u, hi * h, P)
            zn, vn, ln, ok = _full_step(zs, 0.0, lam, u, (1.0 - hi) * h, P)
            contact = 0
            z = zs
            v = 0.0
        else:
            zn, vn, ln, ok = _full_step(z, v, lam, u, h, P)
        if not ok:
            return _SATURATED, t + h, z, v, lam, contact, tr, row
        if not (math.isfinite(zn) and math.isfinite(vn) and math.isfinite(ln)):
            return _NONFINITE, t + h, z, v, lam, contact, tr, row

        hit_lo = zn <= zlo
        hit_hi = zn >= zhi
        if (hit_lo and target == 1) or (hit_hi and target == 2):
            zs = zlo if target == 1 else zhi
            # bisection on the step fraction; crossing side kept in hi
            lo = 0.0
            hi = 1.0
            zh, vh, lh = zn, vn, ln
            for _ in range(_BISECT_ITERS):
                if abs(zh - zs) <= event_tol:
                    break
                mid = 0.5 * (lo + hi)
                zm, vm, lm, okm = _full_step(z, v, lam, u, mid * h, P)
                crossed = zm <= zs if target == 1 else zm >= zs
                if crossed:
                    hi = mid
                    zh, vh, lh = zm, vm, lm
                else:
                    lo = mid
            t_event = t + hi * h
            return _IMPACT, t_event, zs, vh, lh, target, tr, row
        if hit_lo or hit_hi:
            # fall-back onto the non-target stop
            z = zlo if hit_lo else zhi
            v = 0.0
            lam = ln
            contact = 1 if hit_lo else 2
            continue
        z, v, lam = zn, vn, ln

    return status, t_event, z, v, lam, contact, tr, row


# ---------------------------------------------------------------------------
# public API


def _default_target(start: State) -> Contact:
    if start.contact == Contact.AT_LOWER_STOP:
        return Contact.AT_UPPER_STOP
    return Contact.AT_LOWER_STOP


def simulate_operation(
    p_true: ActuatorParams,
    sig: ControlSignal,
    cfg: SimConfig,
    start: State,
    target: Contact | None = None,
) -> OperationResult:
    """Integrate one switching operation driven by ``sig``.

    Integration starts at ``sig.t_start`` and runs to ``cfg.t_end`` (default:
    the end of the signal) or until the target stop is hit.  ``target``
    defaults to the stop opposite ``start.contact`` (the lower stop for an
    interior start).

    Raises SaturationError or NumericalFault carrying the fault time.
    """
    check_state(start, p_true)
    if target is None:
        target = _default_target(start)
    if target == Contact.INTERIOR:
        raise ValueError("target must be a stop")
    t_end = sig.t_end if cfg.t_end is None else cfg.t_end
    n_steps = int(round((t_end - sig.t_start) / cfg.dt))
    if n_steps < 1:
        raise ValueError("simulation horizon shorter than one step")
    n_pre, n_track_end = sig.phase_marks
    status, t_ev, z, v, lam, contact, tr, rows = sim_kernel(
        p_true.as_array(), sig.samples, sig.t_start, sig.dt, n_pre, n_track_end - n_pre,
        sig.t_start, float(cfg.dt), n_steps,
        float(start.z), float(start.z_dot), float(start.lam), int(start.contact), int(target),
        float(cfg.event_tol), int(cfg.trace_decimation),
    )
    if status == _SATURATED:
        raise SaturationError(f"flux reached lambda_sat at t={t_ev:.9g} s", t_ev)
    if status == _NONFINITE:
        raise NumericalFault(f"non-finite state at t={t_ev:.9g} s", t_ev)

    trace = None
    if cfg.trace_decimation > 0:
        tr = tr[:, :rows]
        trace = Trace(tr[0].copy(), tr[1].copy(), tr[2].copy(), tr[3].copy(), tr[4].copy(),
                      tr[5].astype(np.int8), cfg.dt * cfg.trace_decimation)
    if status == _IMPACT:
        final = State(z, 0.0, lam, Contact(contact))
        return OperationResult(v, t_ev, abs(v), final, trace)
    contact = Contact(contact)
    final = State(z, v if contact == Contact.INTERIOR else 0.0, lam, contact)
    return OperationResult(None, None, None, final, trace)


def cost_impact(r: OperationResult) -> float:
    """Absolute impact velocity; NoContactError when the stop was never reached."""
    if r.impact_velocity is None:
        raise NoContactError("operation ended without contact")
    return abs(r.impact_velocity)


def cost_custom(r: OperationResult, f: Callable[[OperationResult], float]) -> float:
    return f(r)


def cost_impact_squared(r: OperationResult) -> float:
    return cost_impact(r) ** 2


def cost_hold_energy(r: OperationResult) -> float:
    """Sum of u^2 dt over the hold-phase rows of the trace.

    Stands in for an acoustic measurement over a fixed window; needs a trace.
    """
    if r.trace is None:
        raise ValueError("hold_energy cost needs a recorded trace")
    mask = r.trace.phase == 2
    return float(np.sum(r.trace.u[mask] ** 2) * r.trace.dt)


CUSTOM_COSTS: dict[str, Callable[[OperationResult], float]] = {
    "impact": cost_impact,
    "impact_squared": cost_impact_squared,
    "hold_energy": cost_hold_energy,
}
