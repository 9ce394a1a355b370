"""Value function, density and optimal control from (phi, psi)."""

from __future__ import annotations

import numpy as np

from .grid import Grid1D


def recover_u(phi: np.ndarray, sigma: float) -> np.ndarray:
    """``u = sigma^2 log(phi)``."""
    phi = np.asarray(phi, dtype=float)
    bad = np.argwhere(~(phi > 0))
    if bad.size:
        i, j = (int(v) for v in bad[0])
        raise ValueError(f"phi must be positive, got {phi[i, j]!r} at (i, j) = ({i}, {j})")
    return sigma**2 * np.log(phi)


def recover_m(phi: np.ndarray, psi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if phi.shape != psi.shape:
        raise ValueError(f"shape mismatch {phi.shape} vs {psi.shape}")
    return phi * psi


def recover_control(u: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Centred difference of u in space; zero on the boundary columns (du/dn = 0)."""
    u = np.asarray(u, dtype=float)
    grid.check(u)
    alpha = np.zeros_like(u)
    alpha[:, 1:-1] = (u[:, 2:] - u[:, :-2]) / (2.0 * grid.dx)
    return alpha
