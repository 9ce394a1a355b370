"""A priori bounds, the stability condition, mass bookkeeping and residuals."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .grid import Grid1D
from .problem import MfgProblem, validate_problem


@dataclass(frozen=True)
class StabilityVerdict:
    bound_value: float
    dt_max: float
    satisfied: bool
    dt: float
    epsilon: float
    nu: float = 0.0

    def as_dict(self) -> dict:
        return asdict(self)


def coupling_sup(problem: MfgProblem, n_samples: int = 200, xi_max: float = 10.0) -> float:
    """Sampled ``||f||_inf`` over ``[0, 1] x [0, xi_max]``."""
    return validate_problem(problem, n_samples, xi_max).f_sup


def epsilon_lower_bound(problem: MfgProblem, f_sup: float) -> float:
    """Uniform positive floor ``exp(-(||u_T|| + ||f|| T) / sigma^2)`` for phi."""
    return float(np.exp(-(problem.terminal_sup() + f_sup * problem.horizon) / problem.sigma**2))


def discrete_lower_bound(problem: MfgProblem, grid: Grid1D, f_sup: float, i: int) -> float:
    """Row-wise floor ``exp(-||u_T|| / sigma^2) (1 + dt ||f|| / sigma^2)^-(I - i)``."""
    if not 0 <= i <= grid.n_time_steps:
        raise IndexError(f"time index {i} outside 0..{grid.n_time_steps}")
    s2 = problem.sigma**2
    return float(np.exp(-problem.terminal_sup() / s2) * (1.0 + grid.dt * f_sup / s2) ** (-(grid.n_time_steps - i)))


def discrete_lower_bounds(problem: MfgProblem, grid: Grid1D, f_sup: float) -> np.ndarray:
    s2 = problem.sigma**2
    powers = grid.n_time_steps - np.arange(grid.n_time_steps + 1)
    return np.exp(-problem.terminal_sup() / s2) * (1.0 + grid.dt * f_sup / s2) ** (-powers.astype(float))


def stability_check(problem: MfgProblem, grid: Grid1D, f_sup: float, nu: float = 0.0) -> StabilityVerdict:
    """Time-step condition ``1/dt > 1 + K/sigma^2 max(||e^{u_T/s^2}||^2, ||m_0||^2/eps^2) + nu``."""
    return stability_for_dt(problem, grid.dt, f_sup, nu)


def stability_for_dt(problem: MfgProblem, dt: float, f_sup: float, nu: float = 0.0) -> StabilityVerdict:
    """Same verdict for a bare time step, before any grid is built."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    eps = epsilon_lower_bound(problem, f_sup)
    s2 = problem.sigma**2
    bound = 1.0 + problem.coupling_lipschitz / s2 * max(
        problem.exp_terminal_sup() ** 2, problem.initial_sup() ** 2 / eps**2
    )
    return StabilityVerdict(
        bound_value=float(bound),
        dt_max=float(1.0 / (bound + nu)),
        satisfied=bool(1.0 / dt > bound + nu),
        dt=float(dt),
        epsilon=eps,
        nu=nu,
    )


def mass_series(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != psi.shape:
        raise ValueError(f"shape mismatch {phi.shape} vs {psi.shape}")
    return np.mean(phi * psi, axis=1)


def mass_difference_identity(phi_half, psi_next, psi_prev, problem: MfgProblem, grid: Grid1D, i: int):
    """Return ``(direct, formula)`` for the mass change between t_i and t_{i+1}.

    ``direct`` differences the mass series of ``phi_half * psi_next``;
    ``formula`` is the closed form obtained by summation by parts, in which the
    diffusion terms cancel and only the change of the coupling remains.
    """
    grid.check(phi_half, psi_next, psi_prev)
    if not 0 <= i < grid.n_time_steps:
        raise IndexError(f"time index {i} outside 0..{grid.n_time_steps - 1}")
    x = grid.nodes
    f = problem.coupling
    direct = np.mean(phi_half[i + 1] * psi_next[i + 1]) - np.mean(phi_half[i] * psi_next[i])
    change = f(x, psi_next[i + 1] * phi_half[i + 1]) - f(x, psi_prev[i] * phi_half[i])
    formula = grid.dt / problem.sigma**2 * np.mean(psi_next[i + 1] * phi_half[i] * change)
    return float(direct), float(formula)


def neumann_laplacian(v: np.ndarray) -> np.ndarray:
    """Second difference along the last axis with ghost values mirrored from the ends."""
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    if v.shape[-1] < 2:
        return out
    out[..., 1:-1] = v[..., 2:] - 2.0 * v[..., 1:-1] + v[..., :-2]
    out[..., 0] = v[..., 1] - v[..., 0]
    out[..., -1] = v[..., -2] - v[..., -1]
    return out


def residuals(phi, psi, psi_coupling, problem: MfgProblem, grid: Grid1D):
    """Stencil residuals of the phi and psi equations on arbitrary fields.

    Row I of ``res_phi`` is the terminal mismatch ``phi_I - exp(u_T / sigma^2)``
    and row 0 of ``res_psi`` the initial mismatch ``psi_0 - m_0 / phi_0``.
    """
    grid.check(phi, psi, psi_coupling)
    phi, psi, psic = (np.asarray(a, dtype=float) for a in (phi, psi, psi_coupling))
    s2 = problem.sigma**2
    dt, dx = grid.dt, grid.dx
    x = grid.nodes[None, :]
    f = problem.coupling

    res_phi = np.empty(grid.shape)
    p = phi[:-1]
    res_phi[:-1] = (
        (phi[1:] - p) / dt + 0.5 * s2 * neumann_laplacian(p) / dx**2 + f(x, p * psic[:-1]) * p / s2
    )
    res_phi[-1] = phi[-1] - np.exp(problem.terminal_cost(grid.nodes) / s2)

    res_psi = np.empty(grid.shape)
    q = psi[1:]
    res_psi[1:] = (q - psi[:-1]) / dt - 0.5 * s2 * neumann_laplacian(q) / dx**2 - f(x, phi[1:] * q) * q / s2
    m0 = np.broadcast_to(problem.initial_density(grid.nodes), grid.nodes.shape).astype(float)
    # zero density needs no positive phi: the prescribed psi row is 0 there
    with np.errstate(divide="ignore"):
        res_psi[0] = psi[0] - np.divide(m0, phi[0], out=np.zeros_like(m0), where=m0 != 0)
    return res_phi, res_psi
