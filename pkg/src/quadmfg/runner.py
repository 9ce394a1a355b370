"""A single configured solve: validate, check stability, iterate, recover, write."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import RunConfig
from .diagnostics import StabilityVerdict, mass_series, stability_for_dt
from .grid import Grid1D
from .outer import OuterTrace, run_outer
from .problem import MfgProblem, ValidationReport, shift_coupling, validate_problem
from .recover import recover_control, recover_m, recover_u

logger = logging.getLogger(__name__)


class ValidationFailure(RuntimeError):
    """Problem data breaks the standing assumptions, or --strict refused the step size."""


class NonConvergence(RuntimeError):
    def __init__(self, message, summary=None):
        super().__init__(message)
        self.summary = summary


@dataclass
class SolveResult:
    problem: MfgProblem
    grid: Grid1D
    trace: OuterTrace
    u: np.ndarray
    m: np.ndarray
    alpha: np.ndarray
    summary: io.RunSummary
    out_dir: Path | None


def prepare(cfg: RunConfig) -> tuple[MfgProblem, ValidationReport, float, StabilityVerdict]:
    """Validate the problem and judge the time step; raise ValidationFailure when refused.

    Returns the (possibly shifted) problem, the validation report, the shift
    applied to f and the stability verdict.
    """
    problem = cfg.build_problem()
    report = validate_problem(problem, cfg.validation_samples, cfg.validation_xi_max)
    shift = 0.0
    if not report.ok:
        if cfg.allow_shift and not (report.monotonicity_violations or report.density_violations):
            shift = report.f_max
            problem = shift_coupling(problem, report)
            logger.warning("coupling shifted down by %.6g to make it non-positive", shift)
            report = validate_problem(problem, cfg.validation_samples, cfg.validation_xi_max)
        else:
            raise ValidationFailure(f"problem fails validation: {report.summary()}")
    verdict = stability_for_dt(problem, cfg.dt, report.f_sup)
    if not verdict.satisfied:
        msg = (
            f"dt={cfg.dt:.6g} violates the stability condition: 1/dt = {1 / cfg.dt:.6g} "
            f"<= bound {verdict.bound_value:.6g} (dt_max = {verdict.dt_max:.6g})"
        )
        if cfg.strict:
            raise ValidationFailure(msg)
        logger.warning(msg)
    return problem, report, shift, verdict


def run_solve(cfg: RunConfig, write: bool = True) -> SolveResult:
    problem, report, shift, verdict = prepare(cfg)
    cfg.check_steps()
    grid = cfg.build_grid()

    start = time.perf_counter()
    trace = run_outer(problem, grid, cfg.outer_options(keep_history=False))
    wall = time.perf_counter() - start

    phi, psi = trace.final_phi, trace.final_psi
    u = recover_u(phi, problem.sigma)
    m = recover_m(phi, psi)
    alpha = recover_control(u, grid)
    m0_mass = float(np.mean(np.broadcast_to(problem.initial_density(grid.nodes), grid.nodes.shape)))

    summary = io.RunSummary(
        problem=problem.name,
        sigma=problem.sigma,
        dt=grid.dt,
        dx=grid.dx,
        n_time_steps=grid.n_time_steps,
        n_space_steps=grid.n_space_steps,
        converged=trace.converged,
        outer_count=trace.outer_count,
        stopping_metrics=trace.metric_history,
        newton=trace.newton_totals().as_dict(),
        stability=verdict.as_dict(),
        validation=report.summary(),
        wall_time=wall,
        mass_drift=float(np.max(np.abs(mass_series(phi, psi) - m0_mass))),
        shifted_by=shift,
    )

    out_dir = None
    if write:
        out_dir = Path(cfg.output)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = io.write_fields(out_dir, grid, phi=phi, psi=psi, u=u, m=m, alpha=alpha)
        series = [r.mass_series for r in trace.iterations]
        io.write_mass_csv(out_dir / io.MASS_FILE, grid, series)
        written.append(io.MASS_FILE)
        if cfg.debug_trace:
            (out_dir / "trace.json").write_text(
                json.dumps([r.as_dict() for r in trace.iterations], indent=2) + "\n"
            )
            written.append("trace.json")
        if cfg.emit_plots:
            written += io.write_plot_scripts(out_dir, grid, written, len(series))
        written.append(io.SUMMARY_FILE)
        summary.files = written
        summary.write(out_dir / io.SUMMARY_FILE)

    result = SolveResult(problem, grid, trace, u, m, alpha, summary, out_dir)
    if not trace.converged and cfg.strict:
        raise NonConvergence(
            f"outer iteration did not reach tol={cfg.tol:g} in {cfg.max_outer} steps "
            f"(last metric {trace.metric_history[-1]:.3e})",
            summary,
        )
    return result

