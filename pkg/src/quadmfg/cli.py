"""Command line entry point.

    quadmfg solve --config run.cfg --out out/run
    quadmfg validate --config run.cfg
    quadmfg convergence-study --config study.cfg
    quadmfg timing-study
    quadmfg sigma-study --dt 0.005

Exit codes: 0 success, 1 solver failure (a Newton solve broke down),
2 invalid input (bad config, failed validation, or a step size refused
under --strict), 3 no convergence under --strict.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, load_config, parse_number
from .outer import OuterIterationError
from .runner import NonConvergence, ValidationFailure, prepare, run_solve
from .studies import StudyError, run_convergence_study, run_sigma_study, run_timing_study

EXIT_OK, EXIT_SOLVER, EXIT_INVALID, EXIT_NOT_CONVERGED = 0, 1, 2, 3

logger = logging.getLogger("quadmfg")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value run configuration")
    common.add_argument("--dt", type=str, help="time step, e.g. 0.01 or 1/100")
    common.add_argument("--dx", type=str, help="space step, e.g. 0.02 or 1/50")
    common.add_argument("--tol", type=float, help="outer stopping tolerance")
    common.add_argument("--sigma", type=float, help="volatility override")
    common.add_argument("--out", type=str, help="output directory")
    common.add_argument("--strict", action="store_true", default=None,
                        help="refuse unstable steps and fail on non-convergence")
    common.add_argument("--emit-plots", action="store_true", default=None, help="write gnuplot scripts")
    common.add_argument("--debug-trace", action="store_true", default=None,
                        help="verbose logging and a per-iteration trace.json")

    parser = argparse.ArgumentParser(prog="quadmfg", description="Quadratic-Hamiltonian mean field game solver")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve one configured problem and write outputs")
    sub.add_parser("validate", parents=[common], help="check problem data and the time-step condition")
    sub.add_parser("convergence-study", parents=[common], help="errors against a fine reference grid")
    sub.add_parser("timing-study", parents=[common], help="wall time against grid size")
    sub.add_parser("sigma-study", parents=[common], help="wall time and outer count against sigma")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    return cfg.with_overrides(
        dt=parse_number(args.dt) if args.dt is not None else None,
        dx=parse_number(args.dx) if args.dx is not None else None,
        tol=args.tol,
        sigma=args.sigma,
        output=args.out,
        strict=args.strict,
        emit_plots=args.emit_plots,
        debug_trace=args.debug_trace,
    )


def _cmd_solve(cfg: RunConfig) -> int:
    try:
        result = run_solve(cfg)
    except NonConvergence as exc:
        logger.error("%s", exc)
        return EXIT_NOT_CONVERGED
    s = result.summary
    state = "converged" if s.converged else "NOT converged"
    print(f"{state} after {s.outer_count} outer iterations "
          f"(last metric {s.stopping_metrics[-1]:.3e}, {s.wall_time:.3f} s)")
    print(f"outputs in {result.out_dir}")
    return EXIT_OK


def _cmd_validate(cfg: RunConfig) -> int:
    problem, report, shift, verdict = prepare(cfg)
    out = {"validation": report.summary(), "shifted_by": shift, "stability": verdict.as_dict()}
    print(json.dumps(out, indent=2))
    cfg.check_steps()
    return EXIT_OK


def _print_report(report, out: str | None) -> None:
    print(report.table())
    if out:
        path = Path(out)
        path.mkdir(parents=True, exist_ok=True)
        (path / f"{report.kind}_study.json").write_text(json.dumps(report.as_dict(), indent=2) + "\n")


COMMANDS = {
    "solve": _cmd_solve,
    "validate": _cmd_validate,
    "convergence-study": lambda cfg: _print_report(run_convergence_study(cfg), cfg.output) or EXIT_OK,
    "timing-study": lambda cfg: _print_report(run_timing_study(cfg), cfg.output) or EXIT_OK,
    "sigma-study": lambda cfg: _print_report(run_sigma_study(cfg), cfg.output) or EXIT_OK,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if cfg.debug_trace:
            logger.setLevel(logging.DEBUG)
        return COMMANDS[args.command](cfg)
    except (ConfigError, ValidationFailure, StudyError) as exc:
        logger.error("%s", exc)
        return EXIT_INVALID
    except OuterIterationError as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
