"""Run-to-run adaptation: compass search over the feedforward's magnetic
parameters, one candidate per switching operation.

Coordinates are normalised by the initial vector, so every component starts
at 1 and a single mesh size fits parameters spanning six decades.  The poll
visits ``+e1, -e1, ..., +ed, -ed`` in that fixed order.  A strictly better
cost moves the incumbent and restarts the poll; a full unsuccessful poll
halves the step.  There is no expansion step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import PLANT_FAULTS, DomainError, OutOfOrderUpdateError


@dataclass(frozen=True)
class AdaptOptions:
    step_init: float = 0.05
    contraction: float = 0.5
    lower: float = 0.5
    upper: float = 2.0


@dataclass
class HistoryEntry:
    n: int
    cost: float
    candidate: np.ndarray  # normalised
    step: float  # mesh size the candidate was polled with
    accepted: bool


@dataclass
class AdaptationState:
    p0: np.ndarray
    p_inc: np.ndarray
    J_inc: float | None
    step: float
    poll_index: int
    poll_order: tuple[tuple[int, int], ...]
    bounds: tuple[np.ndarray, np.ndarray]
    opts: AdaptOptions
    history: list[HistoryEntry] = field(default_factory=list)
    pending: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.p0.size

    def physical(self, x: np.ndarray) -> np.ndarray:
        return x * self.p0


def init(p0, opts: AdaptOptions | None = None) -> AdaptationState:
    opts = opts or AdaptOptions()
    p0 = np.asarray(p0, dtype=np.float64).copy()
    if p0.ndim != 1 or p0.size == 0:
        raise ValueError("p0 must be a non-empty vector")
    if not np.all(np.isfinite(p0) & (p0 > 0)):
        raise DomainError("initial parameters must be finite and positive")
    if not (0 < opts.lower <= 1.0 <= opts.upper):
        raise ValueError("bounds must bracket the initial point")
    d = p0.size
    order = tuple((i, s) for i in range(d) for s in (+1, -1))
    lo = np.full(d, opts.lower)
    hi = np.full(d, opts.upper)
    return AdaptationState(p0, np.ones(d), None, opts.step_init, 0, order, (lo, hi), opts)


def propose(s: AdaptationState) -> np.ndarray:
    """Next candidate in physical units; also marks it pending."""
    if s.J_inc is None:
        x = s.p_inc.copy()
    else:
        i, sign = s.poll_order[s.poll_index]
        x = s.p_inc.copy()
        x[i] += sign * s.step
        x = np.clip(x, *s.bounds)
    s.pending = x
    return s.physical(x)


def update(s: AdaptationState, J: float) -> AdaptationState:
    """Feed back the cost of the pending candidate.

    ``J`` may be ``+inf`` to mark a failed operation.
    """
    if s.pending is None:
        raise OutOfOrderUpdateError("update called without a pending proposal")
    J = float(J)
    if math.isnan(J) or J < 0:
        raise ValueError(f"cost must be >= 0 or +inf, got {J}")
    x, s.pending = s.pending, None
    n = len(s.history)
    step_used = s.step
    if s.J_inc is None:
        s.J_inc = J
        accepted = True
    elif J < s.J_inc:
        s.p_inc = x
        s.J_inc = J
        s.poll_index = 0
        accepted = True
    else:
        accepted = False
        s.poll_index += 1
        if s.poll_index == len(s.poll_order):
            s.step *= s.opts.contraction
            s.poll_index = 0
    s.history.append(HistoryEntry(n, J, x, step_used, accepted))
    return s


def run_loop(
    p0,
    plant: Callable[[np.ndarray], float],
    N: int,
    opts: AdaptOptions | None = None,
    fault_cost: float = math.inf,
) -> AdaptationState:
    """Run ``N`` propose/evaluate/update rounds.

    Plant faults (saturation, infeasible references, missed contact, ...)
    are mapped to ``fault_cost`` instead of aborting.
    """
    s = init(p0, opts)
    for _ in range(N):
        cand = propose(s)
        try:
            J = plant(cand)
        except PLANT_FAULTS:
            J = fault_cost
        update(s, J)
    return s


def costs(s: AdaptationState) -> np.ndarray:
    return np.array([h.cost for h in s.history])


def best_so_far(s: AdaptationState) -> np.ndarray:
    c = costs(s)
    return np.minimum.accumulate(c) if c.size else c


def write_history_csv(s: AdaptationState, path: str | Path) -> None:
    d = s.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "J"] + [f"p{i + 1}_normalized" for i in range(d)] + ["step", "accepted_flag"])
        for h in s.history:
            w.writerow([h.n, repr(h.cost)] + [repr(float(v)) for v in h.candidate]
                       + [repr(h.step), int(h.accepted)])
