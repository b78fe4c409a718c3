"""Lumped single-coil reluctance actuator.

The model has three states: armature position ``z``, velocity ``z_dot`` and
flux linkage ``lam``.  The reluctance seen by the coil splits into a core
term that saturates with flux and a gap term that grows with the air gap
and accounts for fringing:

    R_c(lam) = k1 / (1 - |lam| / k2)
    R_g(z)   = k3 + k4 z / (1 + k5 z ln(k6 / z))

With ``D(z) = 1 + k5 z ln(k6 / z)`` and ``D'(z) = k5 (ln(k6 / z) - 1)`` the
gap derivatives used by the force and by the flatness inversion are

    R_g'(z)  = k4 (1 + k5 z) / D^2
    R_g''(z) = k4 (k5 D - 2 (1 + k5 z) D') / D^3

At ``z = 0`` the products ``z ln(k6/z)`` vanish, so ``R_g(0) = k3`` and
``R_g'(0) = k4``; ``R_g''`` diverges logarithmically to ``-inf``.

The scalar kernels below are numba-compiled and take the parameters packed
into a float array (see :meth:`ActuatorParams.as_array`) so the simulator and
the signal synthesiser can call them from compiled loops.  The public
wrappers validate domains and raise :class:`~softlanding.errors.DomainError`.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, NamedTuple

import numpy as np
from numba import njit

from .errors import ConfigError, DomainError

# Layout of the packed parameter array.
K1, K2, K3, K4, K5, K6, ZMIN, ZMAX, MASS, KSP, ZSP, RES, LSAT = range(13)
N_PARAMS = 13

MAGNETIC_FIELDS = ("kappa1", "kappa2", "kappa3", "kappa4", "kappa5", "kappa6")

UNITS = {
    "kappa1": "1/H",
    "kappa2": "Wb",
    "kappa3": "1/H",
    "kappa4": "1/(H*m)",
    "kappa5": "1/m",
    "kappa6": "m",
    "z_min": "m",
    "z_max": "m",
    "mass": "kg",
    "k_sp": "N/m",
    "z_sp": "m",
    "resistance": "Ohm",
    "lambda_sat": "Wb",
}


@dataclass(frozen=True)
class ActuatorParams:
    """Physical parameter set, SI units throughout."""

    kappa1: float
    kappa2: float
    kappa3: float
    kappa4: float
    kappa5: float
    kappa6: float
    z_min: float
    z_max: float
    mass: float
    k_sp: float
    z_sp: float
    resistance: float
    lambda_sat: float | None = None

    def __post_init__(self):
        if self.lambda_sat is None:
            object.__setattr__(self, "lambda_sat", self.kappa2)
        for name in MAGNETIC_FIELDS + ("mass", "k_sp", "resistance"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value!r}")
        if not (0 <= self.z_min < self.z_max):
            raise DomainError(
                f"need 0 <= z_min < z_max, got z_min={self.z_min}, z_max={self.z_max}"
            )
        if not (0 < self.lambda_sat <= self.kappa2):
            raise DomainError(
                f"need 0 < lambda_sat <= kappa2, got {self.lambda_sat} (kappa2={self.kappa2})"
            )

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in dataclasses.fields(self)], dtype=np.float64)

    @property
    def magnetic(self) -> np.ndarray:
        """The adapted sub-vector ``[k1 .. k6]``."""
        return np.array([getattr(self, n) for n in MAGNETIC_FIELDS])

    def with_magnetic(self, values) -> ActuatorParams:
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError("expected six magnetic parameters")
        kw = dict(zip(MAGNETIC_FIELDS, values))
        # keep the flux bound tied to the saturation scale when it was defaulted
        if self.lambda_sat == self.kappa2:
            kw["lambda_sat"] = kw["kappa2"]
        else:
            kw["lambda_sat"] = min(self.lambda_sat, kw["kappa2"])
        return dataclasses.replace(self, **kw)

    def to_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


class Contact(enum.IntEnum):
    INTERIOR = 0
    AT_LOWER_STOP = 1
    AT_UPPER_STOP = 2


class State(NamedTuple):
    z: float
    z_dot: float
    lam: float
    contact: Contact = Contact.INTERIOR

    @classmethod
    def at_upper_stop(cls, p: ActuatorParams, lam: float = 0.0) -> State:
        return cls(p.z_max, 0.0, lam, Contact.AT_UPPER_STOP)

    @classmethod
    def at_lower_stop(cls, p: ActuatorParams, lam: float = 0.0) -> State:
        return cls(p.z_min, 0.0, lam, Contact.AT_LOWER_STOP)


def check_state(s: State, p: ActuatorParams) -> None:
    if not (p.z_min <= s.z <= p.z_max):
        raise DomainError(f"position {s.z} outside [{p.z_min}, {p.z_max}]")
    if not abs(s.lam) < p.lambda_sat:
        raise DomainError(f"|flux| {abs(s.lam)} not below lambda_sat {p.lambda_sat}")
    if s.contact == Contact.AT_LOWER_STOP and (s.z != p.z_min or s.z_dot != 0.0):
        raise DomainError("lower-stop contact requires z == z_min and zero velocity")
    if s.contact == Contact.AT_UPPER_STOP and (s.z != p.z_max or s.z_dot != 0.0):
        raise DomainError("upper-stop contact requires z == z_max and zero velocity")


# ---------------------------------------------------------------------------
# compiled scalar kernels (no validation)


@njit(cache=True)
def rc_kernel(lam, P):
    return P[K1] / (1.0 - abs(lam) / P[K2])


@njit(cache=True)
def rg_kernel(z, P):
    if z == 0.0:
        return P[K3]
    return P[K3] + P[K4] * z / (1.0 + P[K5] * z * math.log(P[K6] / z))


@njit(cache=True)
def rg_d1_kernel(z, P):
    if z == 0.0:
        return P[K4]
    den = 1.0 + P[K5] * z * math.log(P[K6] / z)
    return P[K4] * (1.0 + P[K5] * z) / (den * den)


@njit(cache=True)
def rg_d2_kernel(z, P):
    if z == 0.0:
        return -math.inf
    log_term = math.log(P[K6] / z)
    den = 1.0 + P[K5] * z * log_term
    dden = P[K5] * (log_term - 1.0)
    return P[K4] * (P[K5] * den - 2.0 * (1.0 + P[K5] * z) * dden) / (den * den * den)


@njit(cache=True)
def passive_force_kernel(z, z_dot, P):
    return -P[KSP] * (z - P[ZSP])


@njit(cache=True)
def magnetic_force_kernel(z, lam, P):
    return -0.5 * rg_d1_kernel(z, P) * lam * lam


@njit(cache=True)
def deriv_kernel(z, z_dot, lam, u, P):
    accel = (passive_force_kernel(z, z_dot, P) + magnetic_force_kernel(z, lam, P)) / P[MASS]
    lam_dot = -P[RES] * (rc_kernel(lam, P) + rg_kernel(z, P)) * lam + u
    return z_dot, accel, lam_dot


# ---------------------------------------------------------------------------
# validated public API


def reluctance_core(lam: float, p: ActuatorParams) -> float:
    """Core reluctance; grows without bound as ``|lam|`` approaches ``kappa2``."""
    if not abs(lam) < p.kappa2:
        raise DomainError(f"|lam|={abs(lam)} must be below kappa2={p.kappa2}")
    return p.kappa1 / (1.0 - abs(lam) / p.kappa2)


def _check_gap(z: float, p: ActuatorParams) -> None:
    if z < 0 or z >= p.kappa6:
        raise DomainError(f"gap {z} outside [0, kappa6={p.kappa6})")


def reluctance_gap(z: float, p: ActuatorParams) -> float:
    _check_gap(z, p)
    return rg_kernel(float(z), p.as_array())


def reluctance_gap_d1(z: float, p: ActuatorParams) -> float:
    """dR_g/dz; returns the limit ``kappa4`` at ``z = 0``."""
    _check_gap(z, p)
    return rg_d1_kernel(float(z), p.as_array())


def reluctance_gap_d2(z: float, p: ActuatorParams) -> float:
    """d2R_g/dz2; the limit at ``z = 0`` is ``-inf``."""
    _check_gap(z, p)
    return rg_d2_kernel(float(z), p.as_array())


def passive_force(z: float, z_dot: float, p: ActuatorParams) -> float:
    """Ideal spring; ``z_dot`` is accepted so damped variants share the signature."""
    return -p.k_sp * (z - p.z_sp)


def passive_force_partials(z: float, z_dot: float, p: ActuatorParams) -> tuple[float, float]:
    """(dF_pas/dz, dF_pas/dz_dot) for the ideal spring."""
    return -p.k_sp, 0.0


def magnetic_force(z: float, lam: float, p: ActuatorParams) -> float:
    return -0.5 * reluctance_gap_d1(z, p) * lam * lam


def state_derivative(s: State, u: float, p: ActuatorParams) -> tuple[float, float, float]:
    """Right-hand side (z_dot, z_ddot, lam_dot) of the interior dynamics."""
    _check_gap(s.z, p)
    if not abs(s.lam) < p.kappa2:
        raise DomainError(f"|lam|={abs(s.lam)} must be below kappa2={p.kappa2}")
    return deriv_kernel(float(s.z), float(s.z_dot), float(s.lam), float(u), p.as_array())


# ---------------------------------------------------------------------------
# parameter files

BUILTIN_PARAMS = ("paper_table1", "desk_default")


def params_from_dict(doc: dict[str, Any]) -> ActuatorParams:
    units = doc.get("units")
    if units is not None:
        for name, unit in units.items():
            if name not in UNITS:
                raise ConfigError(f"unit given for unknown field {name!r}")
            if unit != UNITS[name]:
                raise ConfigError(f"field {name!r} must be in {UNITS[name]}, file says {unit!r}")
    names = [f.name for f in dataclasses.fields(ActuatorParams)]
    missing = [n for n in names if n not in doc and n != "lambda_sat"]
    if missing:
        raise ConfigError(f"parameter document lacks {', '.join(missing)}")
    try:
        values = {n: float(doc[n]) for n in names if n in doc and doc[n] is not None}
        return ActuatorParams(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad parameter document: {exc}") from exc


def load_param_document(source: str | Path) -> dict[str, Any]:
    """Read a parameter JSON file; bare builtin names resolve to shipped files."""
    if isinstance(source, str) and source in BUILTIN_PARAMS:
        text = resources.files(__package__).joinpath("params", f"{source}.json").read_text()
    else:
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read parameter file {source}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parameter file {source} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"parameter file {source} must hold a JSON object")
    return doc


def load_params(source: str | Path) -> ActuatorParams:
    return params_from_dict(load_param_document(source))


def baseline_voltage(source: str | Path) -> float:
    doc = load_param_document(source)
    if "baseline_voltage" not in doc:
        raise ConfigError(f"parameter file {source} has no baseline_voltage")
    return float(doc["baseline_voltage"])
