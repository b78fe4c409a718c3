"""Quintic rest-to-rest position references.

The six boundary conditions (position, zero velocity and zero acceleration at
both ends) fix a fifth-degree polynomial.  Coefficients are stored in the
normalised time ``s = (t - t0) / (tf - t0)`` and derivatives are chain-ruled
by ``(tf - t0) ** -k``; millisecond windows make raw-time monomials badly
conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import InvalidIntervalError

# 10 s^3 - 15 s^4 + 6 s^5, lowest degree first
UNIT_QUINTIC = np.array([0.0, 0.0, 0.0, 10.0, -15.0, 6.0])


def _boundary_matrix() -> np.ndarray:
    rows = []
    for s in (0.0, 1.0):
        for k in range(3):
            row = np.zeros(6)
            for n in range(k, 6):
                fall = 1.0
                for j in range(k):
                    fall *= n - j
                row[n] = fall * s ** (n - k)
            rows.append(row)
    return np.array(rows)


@dataclass(frozen=True)
class Trajectory:
    t0: float
    tf: float
    z0: float
    zf: float
    coeffs: tuple[float, ...]

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    @property
    def coeff_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=np.float64)

    def __call__(self, t, order: int = 0):
        return evaluate(self, t, order)


def design_quintic(z0: float, zf: float, t0: float, tf: float) -> Trajectory:
    """Fit the quintic meeting rest-to-rest boundary conditions on [t0, tf]."""
    if not tf > t0:
        raise InvalidIntervalError(f"need tf > t0, got t0={t0}, tf={tf}")
    rhs = np.array([z0, 0.0, 0.0, zf, 0.0, 0.0])
    coeffs = np.linalg.solve(_boundary_matrix(), rhs)
    closed_form = z0 * np.eye(6)[0] + (zf - z0) * UNIT_QUINTIC
    scale = max(abs(z0), abs(zf), 1e-300)
    if not np.allclose(coeffs, closed_form, rtol=0.0, atol=1e-12 * scale * 15):
        raise ArithmeticError("linear solve disagrees with the closed-form quintic")
    # keep the exact closed form; the solve above is a consistency check
    return Trajectory(float(t0), float(tf), float(z0), float(zf), tuple(float(c) for c in closed_form))


@njit(cache=True)
def eval_kernel(coeffs, t0, tf, t, order):
    """Scalar evaluation with endpoint hold outside [t0, tf]."""
    T = tf - t0
    if t <= t0 or t >= tf:
        if order > 0:
            return 0.0
        s = 0.0 if t <= t0 else 1.0
    else:
        s = (t - t0) / T
    acc = 0.0
    for n in range(5, order - 1, -1):
        fall = 1.0
        for j in range(order):
            fall *= n - j
        acc = acc * s + fall * coeffs[n]
    return acc / T**order


def evaluate(traj: Trajectory, t, order: int = 0):
    """Position (order 0) or its 1st..3rd time derivative at ``t``.

    ``t`` may be a scalar or an array.  Outside ``[t0, tf]`` the reference
    holds its endpoint with zero derivatives.
    """
    if order not in (0, 1, 2, 3):
        raise ValueError(f"order must be 0..3, got {order}")
    c = traj.coeff_array
    if np.ndim(t) == 0:
        t = float(t)
        if order == 0 and (t <= traj.t0 or t >= traj.tf):
            return traj.z0 if t <= traj.t0 else traj.zf
        return eval_kernel(c, traj.t0, traj.tf, t, order)
    t = np.asarray(t, dtype=np.float64)
    T = traj.duration
    s = np.clip((t - traj.t0) / T, 0.0, 1.0)
    poly = np.polynomial.polynomial.polyder(c, order) if order else c
    out = np.polynomial.polynomial.polyval(s, poly) / T**order
    if order:
        out = np.where((t <= traj.t0) | (t >= traj.tf), 0.0, out)
    else:
        out = np.where(t <= traj.t0, traj.z0, np.where(t >= traj.tf, traj.zf, out))
    return out


def peak_speed(traj: Trajectory) -> float:
    """Largest |velocity|, reached at the midpoint: 15/8 of the mean speed."""
    return 15.0 / 8.0 * abs(traj.zf - traj.z0) / traj.duration
