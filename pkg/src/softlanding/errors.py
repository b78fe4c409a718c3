"""Exception hierarchy shared by the model, feedforward and simulator."""

from __future__ import annotations


class SoftLandingError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SoftLandingError, ValueError):
    """A constitutive function was evaluated outside its domain."""


class InvalidIntervalError(SoftLandingError, ValueError):
    """A time interval has a non-positive length."""


class InfeasibleTrajectoryError(SoftLandingError):
    """The reference cannot be produced by an attracting-only actuator.

    ``time`` is the first offending time instant, when known.
    """

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class SaturationError(SoftLandingError):
    """Flux linkage reached the saturation bound."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class FluxSingularityError(SoftLandingError):
    """Flux too close to zero for the flux-rate inversion."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NumericalFault(SoftLandingError):
    """Integration produced a non-finite state."""

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class NoContactError(SoftLandingError):
    """An operation finished without reaching the target stop."""


class ConfigError(SoftLandingError, ValueError):
    """Malformed configuration or parameter document."""


class OutOfOrderUpdateError(SoftLandingError):
    """``update`` was called without a pending proposal."""


# Faults that the adaptation loop converts into penalised costs.
PLANT_FAULTS = (
    InfeasibleTrajectoryError,
    SaturationError,
    FluxSingularityError,
    NumericalFault,
    NoContactError,
)
