"""Tridiagonal systems for one implicit time step and their direct solve."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid import Grid1D


class SingularSystemError(ArithmeticError):
    pass


@dataclass
class TridiagonalSystem:
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.ascontiguousarray(self.lower, dtype=float)
        self.diag = np.ascontiguousarray(self.diag, dtype=float)
        self.upper = np.ascontiguousarray(self.upper, dtype=float)
        n = self.diag.size
        if n < 1 or self.lower.size != n - 1 or self.upper.size != n - 1:
            raise ValueError("inconsistent tridiagonal band sizes")

    @property
    def size(self) -> int:
        return self.diag.size

    def matvec(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = self.diag * y
        out[1:] += self.lower * y[:-1]
        out[:-1] += self.upper * y[1:]
        return out

    def to_dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.lower, -1) + np.diag(self.upper, 1)

    def is_m_matrix(self) -> bool:
        """Positive diagonal, non-positive off-diagonals, strict row dominance."""
        off = np.zeros(self.size)
        off[1:] += np.abs(self.lower)
        off[:-1] += np.abs(self.upper)
        return bool(
            np.all(self.diag > 0)
            and np.all(self.lower <= 0)
            and np.all(self.upper <= 0)
            and np.all(self.diag > off)
        )


def diffusion_weights(n: int, sigma: float, dt: float, dx: float) -> tuple[np.ndarray, float]:
    """Diagonal diffusion part ``dt * d_j`` and the off-diagonal magnitude.

    Neumann ghost reflection halves the diagonal weight on the two end rows;
    a single node has no neighbours and no diffusion.
    """
    if n == 1:
        return np.zeros(1), 0.0
    c = sigma**2 * dt / (2.0 * dx**2)
    d = np.full(n, 2.0 * c)
    d[0] = d[-1] = c
    return d, c


def assemble_step_matrix(grid: Grid1D, sigma: float, reaction: np.ndarray) -> TridiagonalSystem:
    """Matrix ``I + dt * (stencil - diag(reaction))`` of one implicit step.

    ``reaction[j]`` is ``f(x_j, .) / sigma^2`` for row j.
    """
    reaction = np.asarray(reaction, dtype=float)
    n = reaction.size
    d, c = diffusion_weights(n, sigma, grid.dt, grid.dx)
    off = np.full(n - 1, -c)
    return TridiagonalSystem(off, 1.0 + d - grid.dt * reaction, off.copy())


@njit(cache=True, nogil=True, inline="always")
def _thomas(lower, diag, upper, rhs, out, scratch):
    """Thomas elimination; returns the index of a zero pivot or -1."""
    n = diag.shape[0]
    piv = diag[0]
    if piv == 0.0:
        return 0
    out[0] = rhs[0] / piv
    for k in range(1, n):
        scratch[k - 1] = upper[k - 1] / piv
        piv = diag[k] - lower[k - 1] * scratch[k - 1]
        if piv == 0.0:
            return k
        out[k] = (rhs[k] - lower[k - 1] * out[k - 1]) / piv
    for k in range(n - 2, -1, -1):
        out[k] -= scratch[k] * out[k + 1]
    return -1


def thomas_solve(system: TridiagonalSystem, rhs: np.ndarray) -> np.ndarray:
    rhs = np.ascontiguousarray(rhs, dtype=float)
    if rhs.shape != (system.size,):
        raise ValueError(f"rhs of shape {rhs.shape} for a system of size {system.size}")
    out = np.empty(system.size)
    k = _thomas(system.lower, system.diag, system.upper, rhs, out, np.empty(max(system.size - 1, 1)))
    if k >= 0:
        raise SingularSystemError(f"zero pivot at row {k}")
    return out
