"""Monotone outer fixed-point iteration between the phi and psi sweeps."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .grid import Grid1D, GridError
from .problem import MfgProblem
from .sweeps import NewtonError, NewtonOptions, SweepEngine, SweepStats

logger = logging.getLogger(__name__)


class OuterIterationError(RuntimeError):
    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class OuterOptions:
    tol: float = 1e-7
    max_outer: int = 100
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    monotone_slack: float = 1e-10
    keep_history: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("outer tol must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")


@dataclass
class OrderReport:
    """Entries where ``a > b + slack``."""

    violations: list[tuple[int, int]]
    max_excess: float

    @property
    def ok(self) -> bool:
        return not self.violations

    def __len__(self):
        return len(self.violations)


@njit(cache=True, nogil=True)
def _max_excess(a, b):
    out = -np.inf
    for i in range(a.shape[0]):
        for j in range(a.shape[1]):
            out = max(out, a[i, j] - b[i, j])
    return out


def check_elementwise_order(a: np.ndarray, b: np.ndarray, slack: float = 0.0) -> OrderReport:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise GridError(f"cannot compare fields of shapes {a.shape} and {b.shape}")
    if a.size == 0:
        return OrderReport([], 0.0)
    if a.ndim == 2:
        worst = float(_max_excess(a, b))
        if worst <= slack:
            return OrderReport([], worst)
    excess = a - b
    idx = np.argwhere(excess > slack)
    return OrderReport([tuple(int(v) for v in row) for row in idx], float(np.max(excess)))


@dataclass
class IterationRecord:
    n: int
    stopping_metric: float
    phi_min: float
    psi_max: float
    monotone_phi_ok: bool
    monotone_psi_ok: bool
    mass_series: np.ndarray
    phi_stats: SweepStats
    psi_stats: SweepStats

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "stopping_metric": self.stopping_metric,
            "phi_min": self.phi_min,
            "psi_max": self.psi_max,
            "monotone_phi_ok": self.monotone_phi_ok,
            "monotone_psi_ok": self.monotone_psi_ok,
            "phi_sweep": self.phi_stats.as_dict(),
            "psi_sweep": self.psi_stats.as_dict(),
        }


@dataclass
class OuterTrace:
    iterations: list[IterationRecord]
    final_phi: np.ndarray
    final_psi: np.ndarray
    converged: bool
    # with keep_history: psi_history[n] is psi^n (psi^0 = 0), phi_history[n] is phi^{n+1/2}
    phi_history: list[np.ndarray] = field(default_factory=list)
    psi_history: list[np.ndarray] = field(default_factory=list)

    @property
    def outer_count(self) -> int:
        return len(self.iterations)

    @property
    def final_m(self) -> np.ndarray:
        return self.final_phi * self.final_psi

    @property
    def metric_history(self) -> list[float]:
        return [r.stopping_metric for r in self.iterations]

    def newton_totals(self) -> SweepStats:
        total = SweepStats()
        for r in self.iterations:
            total.add(r.phi_stats)
            total.add(r.psi_stats)
        return total


def run_outer(problem: MfgProblem, grid: Grid1D, opts: OuterOptions | None = None) -> OuterTrace:
    """Iterate ``psi^0 = 0``, ``phi^{n+1/2} = Phi(psi^n)``, ``psi^{n+1} = Psi(phi^{n+1/2})``.

    Stops once ``sup |m^{n+1} - m^n| < tol`` with ``m^{n+1} = phi^{n+1/2} psi^{n+1}``;
    the first iterate is compared with ``m^0 = 0`` and never stops the loop.
    Running out of ``max_outer`` returns an unconverged trace rather than raising.
    """
    opts = opts or OuterOptions()
    engine = SweepEngine(problem, grid, opts.newton)
    slack = opts.monotone_slack

    psi = grid.zeros()
    phi_prev = None
    m_prev = grid.zeros()
    records: list[IterationRecord] = []
    trace = OuterTrace(records, None, None, False)
    if opts.keep_history:
        trace.psi_history.append(psi)

    for n in range(opts.max_outer):
        try:
            phi, phi_stats = engine.phi_sweep(psi)
            psi_next, psi_stats = engine.psi_sweep(phi)
        except NewtonError as exc:
            raise OuterIterationError(f"outer iteration {n}: {exc}", n) from exc

        m = phi * psi_next
        metric = float(max(_max_excess(m, m_prev), _max_excess(m_prev, m)))
        phi_ok = phi_prev is None or check_elementwise_order(phi, phi_prev, slack).ok
        psi_ok = check_elementwise_order(psi, psi_next, slack).ok
        records.append(
            IterationRecord(
                n=n,
                stopping_metric=metric,
                phi_min=float(phi.min()),
                psi_max=float(psi_next.max()),
                monotone_phi_ok=phi_ok,
                monotone_psi_ok=psi_ok,
                mass_series=m.mean(axis=1),
                phi_stats=phi_stats,
                psi_stats=psi_stats,
            )
        )
        if not (phi_ok and psi_ok):
            logger.warning("monotonicity violated at outer iteration %d", n)
        logger.debug("outer %d: metric %.3e", n, metric)
        if opts.keep_history:
            trace.phi_history.append(phi)
            trace.psi_history.append(psi_next)

        phi_prev, psi, m_prev = phi, psi_next, m
        if n > 0 and metric < opts.tol:
            trace.converged = True
            break

    trace.final_phi, trace.final_psi = phi_prev, psi
    if not trace.converged:
        logger.warning("outer iteration did not converge in %d steps", opts.max_outer)
    return trace
