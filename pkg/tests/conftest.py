import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from quadmfg import (  # noqa: E402
    MfgProblem,
    OuterOptions,
    SeparableCoupling,
    build_grid,
    builtin_example,
    run_outer,
    stability_check,
    validate_problem,
)


def constant_problem(c=0.0, sigma=1.0, horizon=0.5, m0=None, u_T=None, compiled=True):
    """f == -c; optionally custom m_0 and u_T."""
    if compiled:
        coupling = SeparableCoupling(lambda x: np.full(np.shape(x), -float(c)), (0.0,), (0.0,))
    else:
        def coupling(x, xi):
            return np.full(np.broadcast(np.asarray(x), np.asarray(xi)).shape, -float(c))
    return MfgProblem(
        sigma=sigma,
        horizon=horizon,
        coupling=coupling,
        coupling_lipschitz=0.0,
        terminal_cost=u_T or (lambda x: np.zeros_like(np.asarray(x, dtype=float))),
        initial_density=m0 or (lambda x: np.ones_like(np.asarray(x, dtype=float))),
        name="constant",
    )


def random_problem(rng: np.random.Generator, compiled=True) -> MfgProblem:
    """Admissible data: f <= 0 and non-increasing in xi, bounded u_T, positive m_0."""
    sigma = rng.uniform(0.8, 1.5)
    horizon = float(rng.choice([0.25, 0.5]))
    c0, c2, x0 = rng.uniform(0, 1), rng.uniform(0, 1.5), rng.uniform(0, 1)
    n_seg = int(rng.integers(1, 4))
    knots = np.concatenate([[0.0], np.sort(rng.uniform(0.1, 2.0, n_seg))])
    knots = np.unique(knots)
    slopes = rng.uniform(0.0, 0.5, knots.size - 1)
    values = np.concatenate([[0.0], -np.cumsum(slopes * np.diff(knots))])
    a_u, k_u, b_u = rng.uniform(-0.5, 0.5), int(rng.integers(1, 4)), rng.uniform(-0.3, 0.3)
    a_m, p_m = rng.uniform(-0.8, 0.8), rng.uniform(0, 2 * np.pi)

    def spatial(x):
        return -(c0 + c2 * (np.asarray(x, dtype=float) - x0) ** 2)

    sep = SeparableCoupling(spatial, tuple(knots), tuple(values))
    if compiled:
        coupling = sep
    else:
        def coupling(x, xi):
            return sep(x, xi)

    def u_T(x):
        return a_u * np.cos(np.pi * k_u * np.asarray(x, dtype=float)) + b_u

    def m0(x):
        return 1.0 + a_m * np.cos(2 * np.pi * np.asarray(x, dtype=float) + p_m)

    return MfgProblem(
        sigma=sigma,
        horizon=horizon,
        coupling=coupling,
        coupling_lipschitz=sep.lipschitz,
        terminal_cost=u_T,
        initial_density=m0,
        name="random",
    )


def stable_grid(problem: MfgProblem, n_space_steps: int, min_steps: int = 4):
    """Coarsest grid whose time step satisfies the stability bound."""
    f_sup = validate_problem(problem, 60).f_sup
    probe = build_grid(problem.horizon, 1, n_space_steps)
    dt_max = stability_check(problem, probe, f_sup).dt_max
    I = max(min_steps, math.floor(problem.horizon / dt_max) + 1)
    grid = build_grid(problem.horizon, I, n_space_steps)
    assert stability_check(problem, grid, f_sup).satisfied
    return grid, f_sup


@pytest.fixture(scope="session")
def builtin():
    return builtin_example()


@pytest.fixture(scope="session")
def grid50():
    return build_grid(0.5, 50, 50)


@pytest.fixture(scope="session")
def builtin_trace(builtin, grid50):
    return run_outer(builtin, grid50, OuterOptions(keep_history=True))


# one line per acceptance criterion, echoed after the run even when output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
