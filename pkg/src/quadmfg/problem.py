"""Problem data for quadratic-Hamiltonian mean field games on (0, 1).

A problem bundles the volatility, the horizon, the congestion coupling
``f(x, xi)`` and the boundary data ``u_T`` and ``m_0``.  Couplings are plain
vectorised callables; :class:`SeparableCoupling` is the structured family the
compiled sweeps understand.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

ArrayFunc = Callable[[np.ndarray], np.ndarray]
CouplingFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

SUP_NODES = 10_001


class ProblemError(ValueError):
    """Raised when problem data is inadmissible or non-finite."""


@dataclass(frozen=True)
class SeparableCoupling:
    """Coupling ``f(x, xi) = spatial(x) + h(xi)`` with ``h`` piecewise linear.

    ``h`` interpolates ``(knots, values)`` linearly and is held constant
    outside ``[knots[0], knots[-1]]``, so it is bounded by construction.
    """

    spatial: ArrayFunc
    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.knots) != len(self.values) or len(self.knots) < 1:
            raise ProblemError("knots and values must be non-empty and of equal length")
        if np.any(np.diff(self.knots) <= 0):
            raise ProblemError("knots must be strictly increasing")

    def __call__(self, x, xi):
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        return self.spatial(x) + np.interp(xi, self.knots, self.values)

    @property
    def lipschitz(self) -> float:
        """Largest absolute slope of the piecewise-linear part."""
        if len(self.knots) == 1:
            return 0.0
        return float(np.max(np.abs(np.diff(self.values) / np.diff(self.knots))))

    def shifted(self, amount: float) -> SeparableCoupling:
        spatial = self.spatial
        return replace(self, spatial=lambda x: spatial(x) - amount)


def clamped_linear_coupling(spatial: ArrayFunc, slope: float, cap: float) -> SeparableCoupling:
    """``spatial(x) - slope * max(0, min(cap, xi))``."""
    return SeparableCoupling(spatial, (0.0, float(cap)), (0.0, -float(slope) * float(cap)))


def polynomial(coeffs) -> ArrayFunc:
    """Polynomial in x with coefficients in ascending order."""
    c = np.asarray(coeffs, dtype=float)[::-1]

    def poly(x):
        return np.polyval(c, np.asarray(x, dtype=float))

    return poly


@dataclass(frozen=True)
class MfgProblem:
    sigma: float
    horizon: float
    coupling: CouplingFunc
    coupling_lipschitz: float
    terminal_cost: ArrayFunc
    initial_density: ArrayFunc
    name: str = "custom"

    def __post_init__(self):
        if not self.sigma > 0:
            raise ProblemError(f"sigma must be positive, got {self.sigma}")
        if not self.horizon > 0:
            raise ProblemError(f"horizon must be positive, got {self.horizon}")
        if not self.coupling_lipschitz >= 0:
            raise ProblemError("coupling_lipschitz must be non-negative")

    def with_sigma(self, sigma: float) -> MfgProblem:
        return replace(self, sigma=float(sigma))

    def terminal_sup(self, n: int = SUP_NODES) -> float:
        """Sampled ``||u_T||_inf``; a lower estimate of the true sup."""
        x = np.linspace(0.0, 1.0, n)
        return float(np.max(np.abs(_finite(self.terminal_cost(x), "terminal_cost", x))))

    def initial_sup(self, n: int = SUP_NODES) -> float:
        x = np.linspace(0.0, 1.0, n)
        return float(np.max(np.abs(_finite(self.initial_density(x), "initial_density", x))))

    def exp_terminal_sup(self, n: int = SUP_NODES) -> float:
        """Sampled ``||exp(u_T / sigma^2)||_inf``."""
        x = np.linspace(0.0, 1.0, n)
        return float(np.max(np.exp(self.terminal_cost(x) / self.sigma**2)))


def _finite(values, what, x, xi=None):
    values = np.broadcast_to(np.asarray(values, dtype=float), np.shape(x))
    bad = ~np.isfinite(values)
    if np.any(bad):
        k = np.unravel_index(np.argmax(bad), bad.shape)
        where = f"x={np.asarray(x)[k]!r}"
        if xi is not None:
            where += f", xi={np.asarray(xi)[k]!r}"
        raise ProblemError(f"{what} returned a non-finite value at {where}")
    return values


@dataclass
class ValidationReport:
    """Sample-based check of the standing assumptions on f and m_0.

    Each violation list holds the offending sample coordinates.
    """

    f_sup: float
    sign_violations: list[tuple[float, float]] = field(default_factory=list)
    monotonicity_violations: list[tuple[float, float, float]] = field(default_factory=list)
    density_violations: list[float] = field(default_factory=list)
    f_max: float = 0.0
    n_samples: int = 0
    xi_max: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.sign_violations or self.monotonicity_violations or self.density_violations)

    @property
    def n_violations(self) -> int:
        return len(self.sign_violations) + len(self.monotonicity_violations) + len(self.density_violations)

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "f_sup": self.f_sup,
            "f_max": self.f_max,
            "n_samples": self.n_samples,
            "xi_max": self.xi_max,
            "sign_violations": len(self.sign_violations),
            "monotonicity_violations": len(self.monotonicity_violations),
            "density_violations": len(self.density_violations),
        }


def validate_problem(problem: MfgProblem, n_samples: int = 200, xi_max: float = 10.0) -> ValidationReport:
    """Check ``f <= 0``, ``f`` non-increasing in xi and ``m_0 >= 0`` on samples.

    The coupling is sampled on an ``n_samples x n_samples`` uniform grid of
    ``[0, 1] x [0, xi_max]``; monotonicity is checked between consecutive xi
    samples (which implies it for every sampled pair).
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    if not xi_max > 0:
        raise ValueError("xi_max must be positive")
    x = np.linspace(0.0, 1.0, n_samples)
    xi = np.linspace(0.0, xi_max, n_samples)
    X, XI = np.meshgrid(x, xi, indexing="ij")
    F = _finite(problem.coupling(X, XI), "coupling", X, XI)

    report = ValidationReport(
        f_sup=float(np.max(np.abs(F))),
        f_max=float(np.max(F)),
        n_samples=n_samples,
        xi_max=float(xi_max),
    )
    for a, b in zip(*np.nonzero(F > 0)):
        report.sign_violations.append((float(x[a]), float(xi[b])))
    # F[:, k+1] > F[:, k] breaks monotonicity between xi_k and xi_{k+1}
    for a, b in zip(*np.nonzero(F[:, 1:] > F[:, :-1])):
        report.monotonicity_violations.append((float(x[a]), float(xi[b]), float(xi[b + 1])))

    xm = np.linspace(0.0, 1.0, max(n_samples, SUP_NODES))
    m0 = _finite(problem.initial_density(xm), "initial_density", xm)
    report.density_violations.extend(float(v) for v in xm[m0 < 0])
    _finite(problem.terminal_cost(xm), "terminal_cost", xm)
    return report


def shift_coupling(problem: MfgProblem, report: ValidationReport) -> MfgProblem:
    """Shift a coupling with positive values down by its sampled maximum."""
    if report.f_max <= 0:
        return problem
    amount = report.f_max
    coupling = problem.coupling
    if isinstance(coupling, SeparableCoupling):
        shifted = coupling.shifted(amount)
    else:
        def shifted(x, xi):
            return coupling(x, xi) - amount
    return replace(problem, coupling=shifted)


def _trapezoid_integral(func: ArrayFunc, n: int) -> float:
    x = np.linspace(0.0, 1.0, n)
    return float(np.trapezoid(func(x), x))


def builtin_example(quadrature_nodes: int = 10_000) -> MfgProblem:
    """Congestion example on (0, 1): agents like the centre, dislike crowds."""

    def mu(x):
        return 1.0 + 0.2 * np.cos(np.pi * (2.0 * np.asarray(x, dtype=float) - 1.5)) ** 2

    mass = _trapezoid_integral(mu, quadrature_nodes)

    def m0(x):
        return mu(x) / mass

    def spatial(x):
        return -16.0 * (np.asarray(x, dtype=float) - 0.5) ** 2

    def u_T(x):
        return np.zeros_like(np.asarray(x, dtype=float))

    return MfgProblem(
        sigma=1.0,
        horizon=0.5,
        coupling=clamped_linear_coupling(spatial, 0.1, 5.0),
        coupling_lipschitz=0.1,
        terminal_cost=u_T,
        initial_density=m0,
        name="builtin",
    )
