"""Solver for quadratic-Hamiltonian mean field games on (0, 1).

The value function and density are traded for two coupled heat-type
equations in (phi, psi) with ``u = sigma^2 log phi`` and ``m = phi psi``.
They are solved by a monotone fixed-point iteration whose half steps are
implicit finite-difference sweeps with Newton inner solves.
"""

from .config import ConfigError, RunConfig, load_config, parse_config
from .diagnostics import (
    StabilityVerdict,
    discrete_lower_bound,
    discrete_lower_bounds,
    epsilon_lower_bound,
    mass_difference_identity,
    mass_series,
    residuals,
    stability_check,
    stability_for_dt,
)
from .grid import Grid1D, GridError, build_grid, discrete_norm, grid_from_steps, sup_norm
from .outer import OuterIterationError, OuterOptions, OuterTrace, check_elementwise_order, run_outer
from .problem import (
    MfgProblem,
    ProblemError,
    SeparableCoupling,
    ValidationReport,
    builtin_example,
    clamped_linear_coupling,
    shift_coupling,
    validate_problem,
)
from .recover import recover_control, recover_m, recover_u
from .runner import NonConvergence, SolveResult, ValidationFailure, run_solve
from .studies import StudyError, StudyReport, run_convergence_study, run_sigma_study, run_timing_study
from .sweeps import NewtonError, NewtonOptions, phi_backward_sweep, psi_forward_sweep
from .tridiag import SingularSystemError, TridiagonalSystem, assemble_step_matrix, thomas_solve
