"""Refinement, timing and volatility studies on top of run_outer."""

from __future__ import annotations

import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .config import ConfigError, RunConfig
from .grid import Grid1D, discrete_norm, steps_for, sup_norm
from .outer import OuterIterationError, run_outer
from .runner import prepare

logger = logging.getLogger(__name__)

MIN_ROWS = 3
UNRELIABLE_RATIO = 4


class StudyError(ValueError):
    pass


@dataclass
class LogLogFit:
    slope: float
    intercept: float
    residual: float  # root mean square of the fit residuals in log space


def fit_loglog(xs, ys) -> LogLogFit:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < MIN_ROWS:
        raise StudyError(f"need at least {MIN_ROWS} rows to fit a slope, got {xs.size}")
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise StudyError("log-log fit needs positive values")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    return LogLogFit(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))))


@dataclass
class StudyReport:
    kind: str
    parameter: str
    rows: list[dict]
    fits: dict[str, LogLogFit] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def slope(self) -> float:
        return next(iter(self.fits.values())).slope

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "parameter": self.parameter,
            "rows": self.rows,
            "fits": {k: asdict(v) for k, v in self.fits.items()},
            "notes": self.notes,
        }

    def table(self) -> str:
        if not self.rows:
            return ""
        keys = list(self.rows[0])
        lines = ["  ".join(f"{k:>14}" for k in keys)]
        for r in self.rows:
            lines.append("  ".join(f"{_fmt(r[k]):>14}" for k in keys))
        for name, fit in self.fits.items():
            lines.append(f"slope[{name}] = {fit.slope:.4f}  (rms residual {fit.residual:.3g})")
        lines.extend(self.notes)
        return "\n".join(lines)


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _map(func, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, items))
    return [func(item) for item in items]


def _ratio(fine: int, coarse: int, what: str) -> int:
    if fine % coarse:
        raise StudyError(
            f"{what}: the reference grid ({fine} steps) must refine the sweep grid ({coarse} steps) "
            f"by a whole factor so its nodes contain the sweep nodes"
        )
    return fine // coarse


def run_convergence_study(cfg: RunConfig, reference: tuple[float, float] | None = None,
                          sweep: list[float] | None = None, parameter: str | None = None) -> StudyReport:
    """Errors of phi and psi against a fine reference solution on shared nodes.

    ``parameter`` is ``"dt"`` or ``"dx"``; the other step stays at the config
    value.  Errors are sup norms over the sweep grid nodes (the reference is
    subsampled there), with the discrete L2-type norm as a secondary column.
    """
    parameter = parameter or cfg.sweep
    if parameter not in ("dt", "dx"):
        raise StudyError(f"sweep parameter must be 'dt' or 'dx', got {parameter!r}")
    values = list(cfg.sweep_values if sweep is None else sweep)
    if len(values) < MIN_ROWS:
        raise StudyError(f"need at least {MIN_ROWS} sweep values, got {len(values)}")
    ref_dt, ref_dx = reference or (cfg.ref_dt, cfg.ref_dx)
    problem, _, _, _ = prepare(cfg)
    T = cfg.horizon_value
    I_ref, J_ref = steps_for(T, ref_dt, "reference dt"), steps_for(1.0, ref_dx, "reference dx")

    grids = []
    for v in values:
        dt, dx = (v, cfg.dx) if parameter == "dt" else (cfg.dt, v)
        try:
            g = cfg.build_grid(dt, dx)
        except ValueError as exc:
            raise StudyError(str(exc)) from None
        ri = _ratio(I_ref, g.n_time_steps, "time")
        rj = _ratio(J_ref, g.n_space_steps, "space")
        swept = ri if parameter == "dt" else rj
        if swept < 2:
            raise StudyError(f"reference grid is not strictly finer than the sweep grid {parameter}={v!r}")
        grids.append((v, g, ri, rj, swept))

    opts = cfg.outer_options()
    ref_grid = cfg.build_grid(ref_dt, ref_dx)
    jobs = [ref_grid] + [g for _, g, *_ in grids]
    traces = _map(lambda g: run_outer(problem, g, opts), jobs, cfg.workers)
    ref = traces[0]

    rows = []
    for (v, g, ri, rj, swept), tr in zip(grids, traces[1:]):
        dphi = tr.final_phi - ref.final_phi[::ri, ::rj]
        dpsi = tr.final_psi - ref.final_psi[::ri, ::rj]
        rows.append({
            parameter: v,
            "steps": g.n_time_steps if parameter == "dt" else g.n_space_steps,
            "phi_error": sup_norm(dphi),
            "psi_error": sup_norm(dpsi),
            "phi_error_l2": discrete_norm(dphi),
            "psi_error_l2": discrete_norm(dpsi),
            "outer_count": tr.outer_count,
            "converged": tr.converged,
            "unreliable": swept < UNRELIABLE_RATIO,
        })

    xs = [r[parameter] for r in rows]
    report = StudyReport("convergence", parameter, rows)
    for key in ("phi_error", "psi_error", "phi_error_l2", "psi_error_l2"):
        report.fits[key] = fit_loglog(xs, [r[key] for r in rows])
    report.notes.append(
        f"reference: dt={ref_dt!r}, dx={ref_dx!r}, outer_count={ref.outer_count}, converged={ref.converged}"
    )
    if any(r["unreliable"] for r in rows):
        report.notes.append(
            f"rows marked unreliable are within {UNRELIABLE_RATIO}x of the reference resolution; "
            "the reference is itself an approximation"
        )
    return report


def _time_outer(problem, grid: Grid1D, opts, repeats: int):
    times = []
    trace = None
    for _ in range(repeats):
        start = time.perf_counter()
        trace = run_outer(problem, grid, opts)
        times.append(time.perf_counter() - start)
    return statistics.median(times), times, trace


def run_timing_study(cfg: RunConfig, pairs: list[tuple[float, float]] | None = None) -> StudyReport:
    """Median wall time of run_outer per (dt, dx); slope of log time against log 1/(dt dx).

    A throwaway solve on the first grid runs before timing so one-off kernel
    compilation is not charged to any row.  Solves run one at a time.
    """
    pairs = list(cfg.timing_pairs if pairs is None else pairs)
    if len(pairs) < MIN_ROWS:
        raise StudyError(f"need at least {MIN_ROWS} (dt, dx) pairs, got {len(pairs)}")
    if cfg.repeats < 1:
        raise StudyError("repeats must be at least 1")
    problem, _, _, _ = prepare(cfg)
    opts = cfg.outer_options()
    try:
        grids = [cfg.build_grid(dt, dx) for dt, dx in pairs]
    except (ValueError, ConfigError) as exc:
        raise StudyError(str(exc)) from None
    run_outer(problem, grids[0], opts)

    rows = []
    for (dt, dx), g in zip(pairs, grids):
        median, times, trace = _time_outer(problem, g, opts, cfg.repeats)
        rows.append({
            "dt": dt,
            "dx": dx,
            "work": 1.0 / (dt * dx),
            "time": median,
            "time_min": min(times),
            "time_max": max(times),
            "outer_count": trace.outer_count,
            "converged": trace.converged,
        })
    report = StudyReport("timing", "1/(dt dx)", rows)
    report.fits["time"] = fit_loglog([r["work"] for r in rows], [r["time"] for r in rows])
    return report


def run_sigma_study(cfg: RunConfig, sigmas: list[float] | None = None) -> StudyReport:
    """Wall time and outer count per volatility; failures are reported per row.

    The outer counts should not increase with sigma; a broken trend is noted
    in the report rather than raised.  Unconverged rows count as
    ``max_outer`` for the trend check.
    """
    sigmas = list(cfg.sigmas if sigmas is None else sigmas)
    if not sigmas:
        raise StudyError("need at least one sigma")
    if any(not s > 0 for s in sigmas):
        raise StudyError("every sigma must be positive")
    opts = cfg.outer_options()
    grid = None
    rows = []
    for s in sorted(sigmas):
        sub = cfg.with_overrides(sigma=float(s), strict=False)
        problem, _, _, verdict = prepare(sub)
        if grid is None:
            sub.check_steps()
            grid = sub.build_grid()
            run_outer(problem, grid, opts)
        row = {"sigma": float(s), "time": float("nan"), "outer_count": 0, "converged": False,
               "stable": verdict.satisfied, "dt_max": verdict.dt_max, "error": ""}
        start = time.perf_counter()
        try:
            trace = run_outer(problem, grid, opts)
            row.update(outer_count=trace.outer_count, converged=trace.converged)
        except OuterIterationError as exc:
            row.update(outer_count=exc.iteration + 1, error=str(exc))
        row["time"] = time.perf_counter() - start
        rows.append(row)

    report = StudyReport("sigma", "sigma", rows)
    for r in rows:
        if not r["converged"]:
            report.notes.append(f"sigma={r['sigma']:g}: did not converge ({r['error'] or 'outer limit reached'})")
    if len(rows) > 1:
        trend = sigma_trend_ok(report, cfg.max_outer)
        report.notes.append(f"outer counts non-increasing in sigma: {trend}")
        if not trend:
            logger.warning("outer counts are not non-increasing in sigma: %s", [r["outer_count"] for r in rows])
    return report


def sigma_trend_ok(report: StudyReport, max_outer: int) -> bool:
    counts = [r["outer_count"] if r["converged"] else max_outer for r in report.rows]
    return all(a >= b for a, b in zip(counts, counts[1:]))
