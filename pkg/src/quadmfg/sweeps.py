"""Implicit backward sweep for phi and forward sweep for psi.

Every time step is a nonlinear tridiagonal system

    (1 + dt * d_j - dt * f(x_j, y_j * p_j) / sigma^2) y_j - c (y_{j-1} + y_{j+1}) = b_j

with ``p`` the partner field (psi for the phi step, phi for the psi step) and
Neumann ghost reflection at both ends.  It is solved by damped Newton,
warm-started from the neighbouring time row.

Couplings of type :class:`SeparableCoupling` run through compiled kernels with
the exact piecewise-linear derivative; any other callable goes through a
vectorised numpy path that differentiates ``f`` by finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import Grid1D
from .problem import MfgProblem, SeparableCoupling
from .tridiag import _thomas, diffusion_weights

OK, MAX_ITER, LINE_SEARCH, ZERO_PIVOT = 0, 1, 2, 3
_REASONS = {
    MAX_ITER: "iteration limit reached",
    LINE_SEARCH: "residual did not decrease after step halving",
    ZERO_PIVOT: "zero pivot in the Newton system",
}


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-12
    max_iter: int = 50
    fd_step: float = 1e-7
    damping: float = 0.5
    max_halvings: int = 30

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("Newton tol must be positive")
        if self.max_iter < 1:
            raise ValueError("Newton max_iter must be at least 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


class NewtonError(RuntimeError):
    def __init__(self, message, time_index=None, residual=float("nan")):
        super().__init__(message)
        self.time_index = time_index
        self.residual = residual


@dataclass
class StepStats:
    iterations: int
    residual: float
    dominance_margin: float


@dataclass
class SweepStats:
    newton_iterations_total: int = 0
    max_newton_iterations_per_step: int = 0
    worst_residual: float = 0.0
    min_dominance_margin: float = float("inf")

    def add(self, other: SweepStats) -> None:
        self.newton_iterations_total += other.newton_iterations_total
        self.max_newton_iterations_per_step = max(
            self.max_newton_iterations_per_step, other.max_newton_iterations_per_step
        )
        self.worst_residual = max(self.worst_residual, other.worst_residual)
        self.min_dominance_margin = min(self.min_dominance_margin, other.min_dominance_margin)

    @classmethod
    def from_rows(cls, iters, residuals, margins) -> SweepStats:
        if len(iters) == 0:
            return cls()
        total, most, worst, margin = _row_stats(
            np.asarray(iters, dtype=np.int64), np.asarray(residuals, dtype=float), np.asarray(margins, dtype=float)
        )
        return cls(int(total), int(most), float(worst), float(margin))

    def as_dict(self) -> dict:
        return {
            "newton_iterations_total": self.newton_iterations_total,
            "max_newton_iterations_per_step": self.max_newton_iterations_per_step,
            "worst_residual": self.worst_residual,
            "min_dominance_margin": self.min_dominance_margin,
        }


@njit(cache=True, nogil=True)
def _row_stats(iters, resid, margins):
    total, most, worst, margin = 0, 0, 0.0, np.inf
    for i in range(iters.shape[0]):
        total += iters[i]
        most = max(most, iters[i])
        worst = max(worst, resid[i])
        margin = min(margin, margins[i])
    return total, most, worst, margin


@njit(cache=True, nogil=True)
def _first_nonpositive(F):
    for i in range(F.shape[0]):
        for j in range(F.shape[1]):
            if not F[i, j] > 0.0:
                return i
    return -1


@njit(cache=True, nogil=True)
def _first_negative_row(F, tol):
    """First row i >= 1 with an entry below ``-tol * max(1, sup|F[i-1]|)``."""
    for i in range(1, F.shape[0]):
        scale = 1.0
        for j in range(F.shape[1]):
            scale = max(scale, abs(F[i - 1, j]))
        for j in range(F.shape[1]):
            if F[i, j] < -tol * scale:
                return i
    return -1


# --------------------------------------------------------------------------
# compiled path: f(x, xi) = a(x) + piecewise-linear h(xi)
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _pl_sweep(F, P, backward, spat, knots, vals, slopes, k, d, c, tol, max_iter, damping, max_halvings,
              iters, resid, margins):
    """Time-step ``F`` in place; returns (failed time index or -1, status).

    Backward: row i of F solves against row i + 1 with partner row P[i].
    Forward: row i + 1 of F solves against row i with partner row P[i + 1].
    Everything is inlined by hand: calls between compiled functions carrying
    many arrays cost more than the arithmetic on small grids.
    """
    I = F.shape[0] - 1
    n = F.shape[1]
    nk = knots.shape[0]
    res = np.empty(n)
    fv = np.empty(n)
    dfv = np.empty(n)
    jd = np.empty(n)
    delta = np.empty(n)
    trial = np.empty(n)
    scratch = np.empty(n)
    y = np.empty(n)

    for s in range(I):
        if backward:
            t = I - 1 - s
            src = t + 1
            i = t
        else:
            t = s + 1
            src = s
            i = s
        scale = 1.0
        for j in range(n):
            y[j] = F[src, j]
            trial[j] = y[j]
            if abs(F[src, j]) > scale:
                scale = abs(F[src, j])
        target = tol * scale

        rn = np.inf
        it = 0
        halvings = 0
        step = 1.0
        status = 0
        first = True
        while True:
            # residual at trial
            rt = 0.0
            for j in range(n):
                xi = trial[j] * P[t, j]
                if xi < knots[0]:
                    h = vals[0]
                    dh = 0.0
                elif xi >= knots[nk - 1]:
                    h = vals[nk - 1]
                    dh = 0.0
                else:
                    m = 0
                    while m < nk - 2 and knots[m + 1] <= xi:
                        m += 1
                    h = vals[m] + slopes[m] * (xi - knots[m])
                    dh = slopes[m]
                fv[j] = spat[j] + h
                dfv[j] = dh
                r = (1.0 + d[j] - k * fv[j]) * trial[j] - F[src, j]
                if j > 0:
                    r -= c * trial[j - 1]
                if j < n - 1:
                    r -= c * trial[j + 1]
                res[j] = r
                a = abs(r)
                if a > rt or a != a:
                    rt = a

            if first or rt < rn:
                if not first:
                    it += 1
                first = False
                for j in range(n):
                    y[j] = trial[j]
                rn = rt
            else:
                halvings += 1
                if halvings > max_halvings:
                    status = 2
                    break
                step *= damping
                for j in range(n):
                    trial[j] = y[j] - step * delta[j]
                continue

            if rn <= target:
                break
            if it >= max_iter:
                status = 1
                break

            # Newton direction from the Jacobian at y (fv, dfv, res belong to y here)
            for j in range(n):
                jd[j] = 1.0 + d[j] - k * (fv[j] + dfv[j] * P[t, j] * y[j])
            piv = jd[0]
            if piv == 0.0:
                status = 3
                break
            delta[0] = res[0] / piv
            for j in range(1, n):
                scratch[j - 1] = -c / piv
                piv = jd[j] + c * scratch[j - 1]
                if piv == 0.0:
                    status = 3
                    break
                delta[j] = (res[j] + c * delta[j - 1]) / piv
            if status != 0:
                break
            for j in range(n - 2, -1, -1):
                delta[j] -= scratch[j] * delta[j + 1]
            step = 1.0
            halvings = 0
            for j in range(n):
                trial[j] = y[j] - delta[j]

        margin = np.inf
        for j in range(n):
            F[t, j] = y[j]
            mg = 1.0 - k * fv[j]
            if mg < margin:
                margin = mg
        iters[i] = it
        resid[i] = rn
        margins[i] = margin
        if status != 0:
            return t, status
    return -1, 0


def _pl_data(coupling: SeparableCoupling, x: np.ndarray):
    knots = np.asarray(coupling.knots, dtype=float)
    vals = np.asarray(coupling.values, dtype=float)
    slopes = np.diff(vals) / np.diff(knots) if knots.size > 1 else np.zeros(1)
    spat = np.ascontiguousarray(np.broadcast_to(coupling.spatial(x), x.shape), dtype=float)
    return spat, knots, vals, slopes


# --------------------------------------------------------------------------
# generic path: any vectorised f(x, xi)
# --------------------------------------------------------------------------


def _fd_derivative(f, x, xi, fd_step):
    h = fd_step * (1.0 + np.abs(xi))
    central = xi - h >= 0
    lo = np.where(central, xi - h, xi)
    width = np.where(central, 2.0 * h, h)
    return (f(x, xi + h) - f(x, lo)) / width


def _generic_newton_row(b, partner, y, x, f, k, d, c, opts: NewtonOptions):
    n = y.size
    off = np.full(max(n - 1, 1), -c)
    scratch = np.empty(max(n - 1, 1))
    delta = np.empty(n)
    target = opts.tol * max(1.0, float(np.max(np.abs(b))))

    def residual(v):
        fv = np.broadcast_to(f(x, v * partner), v.shape).astype(float)
        r = (1.0 + d - k * fv) * v - b
        r[1:] -= c * v[:-1]
        r[:-1] -= c * v[1:]
        return r, fv

    res, fv = residual(y)
    rn = float(np.max(np.abs(res)))
    it = 0
    status = OK
    while not rn <= target:
        if it >= opts.max_iter:
            status = MAX_ITER
            break
        xi = y * partner
        jd = 1.0 + d - k * (fv + _fd_derivative(f, x, xi, opts.fd_step) * partner * y)
        if _thomas(off, np.ascontiguousarray(jd), off, np.ascontiguousarray(res), delta, scratch) >= 0:
            status = ZERO_PIVOT
            break
        step = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = y - step * delta
            res_t, fv_t = residual(trial)
            rt = float(np.max(np.abs(res_t)))
            if rt < rn:
                break
            step *= opts.damping
        else:
            status = LINE_SEARCH
            break
        y[:] = trial
        res, fv, rn = res_t, fv_t, rt
        it += 1
    margin = float(np.min(1.0 - k * fv))
    return it, rn, margin, status


class SweepEngine:
    """Per-(problem, grid) solver state shared by every sweep of a run.

    Node samples of the coupling, terminal data and the stencil weights are
    computed once here so repeated sweeps only pay for the time stepping.
    """

    def __init__(self, problem: MfgProblem, grid: Grid1D, opts: NewtonOptions | None = None, x=None):
        self.problem = problem
        self.grid = grid
        self.opts = opts or NewtonOptions()
        self.x = grid.nodes if x is None else np.asarray(x, dtype=float)
        n = self.x.size
        self.k = grid.dt / problem.sigma**2
        self.d, self.c = diffusion_weights(n, problem.sigma, grid.dt, grid.dx)
        self.compiled = isinstance(problem.coupling, SeparableCoupling)
        if self.compiled:
            self._pl = _pl_data(problem.coupling, self.x)
        self.phi_terminal = np.exp(
            np.broadcast_to(problem.terminal_cost(self.x), self.x.shape).astype(float) / problem.sigma**2
        )
        self.m0 = np.broadcast_to(problem.initial_density(self.x), self.x.shape).astype(float)
        self.m0_min = float(np.min(self.m0))

    def solve_row(self, b, partner, y):
        """Newton solve of one row in place; returns (iterations, residual, margin, status).

        ``y`` must already hold the initial guess.
        """
        o = self.opts
        if self.compiled:
            F = np.vstack([np.asarray(b, dtype=float), np.asarray(b, dtype=float)])
            P = np.vstack([np.asarray(partner, dtype=float)] * 2)
            F[1] = y
            stats = np.zeros(1, dtype=np.int64), np.zeros(1), np.zeros(1)
            _, status = _pl_sweep(
                F, P, False, *self._pl, self.k, self.d, self.c,
                o.tol, o.max_iter, o.damping, o.max_halvings, *stats,
            )
            y[:] = F[1]
            return int(stats[0][0]), float(stats[1][0]), float(stats[2][0]), status
        return _generic_newton_row(
            np.asarray(b, dtype=float), np.asarray(partner, dtype=float), y,
            self.x, self.problem.coupling, self.k, self.d, self.c, o,
        )

    def _sweep(self, F, P, backward, what):
        o = self.opts
        I = self.grid.n_time_steps
        iters, resid, margins = np.zeros(I, dtype=np.int64), np.zeros(I), np.zeros(I)
        if self.compiled:
            fail, status = _pl_sweep(
                F, P, backward, *self._pl, self.k, self.d, self.c,
                o.tol, o.max_iter, o.damping, o.max_halvings, iters, resid, margins,
            )
            if fail >= 0:
                _raise(status, int(fail), float(resid[fail if backward else fail - 1]), what)
        else:
            for s in range(I):
                t, src, i = (I - 1 - s, I - s, I - 1 - s) if backward else (s + 1, s, s)
                y = F[src].copy()
                iters[i], resid[i], margins[i], status = self.solve_row(F[src], P[t], y)
                F[t] = y
                if status != OK:
                    _raise(status, t, float(resid[i]), what)
        return SweepStats.from_rows(iters, resid, margins)

    def phi_sweep(self, psi: np.ndarray):
        grid = self.grid
        grid.check(psi)
        psi = np.ascontiguousarray(psi, dtype=float)
        phi = np.empty(grid.shape)
        phi[-1] = self.phi_terminal
        stats = self._sweep(phi, psi, True, "phi")
        i = _first_nonpositive(phi)
        if i >= 0:
            raise NewtonError("phi sweep produced a non-positive value", time_index=i)
        return phi, stats

    def psi_sweep(self, phi: np.ndarray):
        grid = self.grid
        grid.check(phi)
        phi = np.ascontiguousarray(phi, dtype=float)
        if _first_nonpositive(phi) >= 0:
            raise ValueError("phi must be positive everywhere")
        if self.m0_min < 0:
            j = int(np.argmax(self.m0 < 0))
            raise NewtonError(f"initial density is negative at x={self.x[j]!r}")
        psi = np.empty(grid.shape)
        psi[0] = self.m0 / phi[0]
        stats = self._sweep(psi, phi, False, "psi")
        i = _first_negative_row(psi, self.opts.tol)
        if i >= 0:
            raise NewtonError(f"psi sweep produced a negative value {np.min(psi[i]):.3e}", time_index=i)
        return psi, stats


def _raise(status, time_index, residual, what):
    raise NewtonError(
        f"{what} Newton failed at time index {time_index}: {_REASONS.get(status, status)} "
        f"(best residual {residual:.3e})",
        time_index=time_index,
        residual=residual,
    )


def phi_implicit_step(problem, grid, phi_next_row, psi_row, opts=None, x=None):
    """One backward step: phi row at t_i from the row at t_{i+1} and psi at t_i."""
    engine = SweepEngine(problem, grid, opts, x)
    y = np.array(phi_next_row, dtype=float)
    it, r, margin, status = engine.solve_row(phi_next_row, psi_row, y)
    if status != OK:
        _raise(status, None, r, "phi")
    if not np.all(y > 0):
        raise NewtonError("phi step produced a non-positive value", residual=r)
    return y, StepStats(int(it), float(r), float(margin))


def psi_implicit_step(problem, grid, psi_prev_row, phi_row_next_time, opts=None, x=None):
    """One forward step: psi row at t_{i+1} from psi at t_i and phi at t_{i+1}."""
    engine = SweepEngine(problem, grid, opts, x)
    y = np.array(psi_prev_row, dtype=float)
    it, r, margin, status = engine.solve_row(psi_prev_row, phi_row_next_time, y)
    if status != OK:
        _raise(status, None, r, "psi")
    if np.min(y) < -engine.opts.tol * max(1.0, float(np.max(np.abs(psi_prev_row)))):
        raise NewtonError(f"psi step produced a negative value {np.min(y):.3e}", residual=r)
    return y, StepStats(int(it), float(r), float(margin))


def phi_backward_sweep(problem: MfgProblem, grid: Grid1D, psi: np.ndarray, opts: NewtonOptions | None = None):
    """Solve the phi scheme backward from ``exp(u_T / sigma^2)`` given a psi field."""
    return SweepEngine(problem, grid, opts).phi_sweep(psi)


def psi_forward_sweep(problem: MfgProblem, grid: Grid1D, phi: np.ndarray, opts: NewtonOptions | None = None):
    """Solve the psi scheme forward from ``m_0 / phi[0]`` given a phi field."""
    return SweepEngine(problem, grid, opts).psi_sweep(phi)
