"""Run configuration: a flat ``key = value`` text format.

One assignment per line, ``#`` starts a comment.  Numbers may be written as
fractions (``dx = 1/150``), lists are comma separated and booleans are
``true``/``false``.  Example::

    problem = builtin
    dt = 0.01
    dx = 0.02
    tol = 1e-7
    output = out/builtin
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from fractions import Fraction
from pathlib import Path

import numpy as np

from .grid import Grid1D, grid_from_steps, steps_for
from .outer import OuterOptions
from .problem import MfgProblem, builtin_example, clamped_linear_coupling, polynomial
from .sweeps import NewtonOptions


class ConfigError(ValueError):
    pass


def parse_number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_int(text: str) -> int:
    v = parse_number(text)
    if not v.is_integer():
        raise ConfigError(f"not an integer: {text!r}")
    return int(v)


def parse_list(text: str) -> tuple[float, ...]:
    items = [s for s in (p.strip() for p in text.split(",")) if s]
    return tuple(parse_number(s) for s in items)


def parse_pairs(text: str) -> tuple[tuple[float, float], ...]:
    """``dt:dx`` pairs separated by commas, e.g. ``1/50:1/25, 1/100:1/50``."""
    out = []
    for item in (p.strip() for p in text.split(",")):
        if not item:
            continue
        parts = item.split(":")
        if len(parts) != 2:
            raise ConfigError(f"expected dt:dx, got {item!r}")
        out.append((parse_number(parts[0]), parse_number(parts[1])))
    return tuple(out)


@dataclass(frozen=True)
class RunConfig:
    # problem: "builtin" or "parametric"
    problem: str = "builtin"
    sigma: float | None = None
    horizon: float = 0.5
    # parametric problem: f(x, xi) = poly(x) - slope * max(0, min(cap, xi))
    coupling_poly: tuple[float, ...] = (0.0,)
    coupling_slope: float = 0.0
    coupling_cap: float = 1.0
    terminal_poly: tuple[float, ...] = (0.0,)
    initial_poly: tuple[float, ...] = (1.0,)
    normalize_initial: bool = True

    dt: float = 0.01
    dx: float = 0.02
    tol: float = 1e-7
    max_outer: int = 100
    newton_tol: float = 1e-12
    newton_max_iter: int = 50
    newton_fd_step: float = 1e-7
    newton_damping: float = 0.5
    newton_max_halvings: int = 30

    output: str = "out"
    emit_plots: bool = False
    debug_trace: bool = False
    strict: bool = False
    allow_shift: bool = False
    validation_samples: int = 200
    validation_xi_max: float = 10.0

    # convergence study
    sweep: str = "dt"
    sweep_values: tuple[float, ...] = (1 / 24, 1 / 50, 1 / 100)
    ref_dt: float = 1 / 600
    ref_dx: float = 1 / 300
    # timing study
    timing_pairs: tuple[tuple[float, float], ...] = ((1 / 50, 1 / 25), (1 / 100, 1 / 50), (1 / 200, 1 / 100))
    repeats: int = 3
    # sigma study
    sigmas: tuple[float, ...] = (0.6, 0.8, 1.0)
    workers: int = 1

    def __post_init__(self):
        if self.problem not in ("builtin", "parametric"):
            raise ConfigError(f"problem must be 'builtin' or 'parametric', got {self.problem!r}")
        if self.sweep not in ("dt", "dx"):
            raise ConfigError(f"sweep must be 'dt' or 'dx', got {self.sweep!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not (self.dt > 0 and self.dx > 0):
            raise ConfigError("dt and dx must be positive")

    def check_steps(self) -> None:
        """dt and dx must split [0, T] and [0, 1] into whole numbers of steps."""
        try:
            steps_for(self.horizon_value, self.dt, "dt")
            steps_for(1.0, self.dx, "dx")
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def horizon_value(self) -> float:
        return 0.5 if self.problem == "builtin" else self.horizon

    def with_overrides(self, **changes) -> RunConfig:
        return dataclasses.replace(self, **{k: v for k, v in changes.items() if v is not None})

    def build_problem(self) -> MfgProblem:
        if self.problem == "builtin":
            prob = builtin_example()
        else:
            m0 = polynomial(self.initial_poly)
            if self.normalize_initial:
                xs = np.linspace(0.0, 1.0, 10_001)
                mass = float(np.trapezoid(m0(xs), xs))
                if not mass > 0:
                    raise ConfigError("initial density integrates to a non-positive mass")
                raw = m0

                def m0(x):
                    return raw(x) / mass

            prob = MfgProblem(
                sigma=1.0,
                horizon=self.horizon,
                coupling=clamped_linear_coupling(polynomial(self.coupling_poly), self.coupling_slope, self.coupling_cap),
                coupling_lipschitz=abs(self.coupling_slope),
                terminal_cost=polynomial(self.terminal_poly),
                initial_density=m0,
                name="parametric",
            )
        return prob if self.sigma is None else prob.with_sigma(self.sigma)

    def build_grid(self, dt: float | None = None, dx: float | None = None) -> Grid1D:
        return grid_from_steps(self.horizon_value, self.dt if dt is None else dt, self.dx if dx is None else dx)

    def outer_options(self, keep_history: bool = False) -> OuterOptions:
        newton = NewtonOptions(
            tol=self.newton_tol,
            max_iter=self.newton_max_iter,
            fd_step=self.newton_fd_step,
            damping=self.newton_damping,
            max_halvings=self.newton_max_halvings,
        )
        return OuterOptions(tol=self.tol, max_outer=self.max_outer, newton=newton, keep_history=keep_history)


def _converter(f: dataclasses.Field):
    t = str(f.type)
    if f.name == "timing_pairs":
        return parse_pairs
    if t.startswith("tuple"):
        return parse_list
    if t == "bool":
        return parse_bool
    if t == "int":
        return parse_int
    if t in ("float", "float | None"):
        return parse_number
    return str.strip


_CONVERTERS = {f.name: _converter(f) for f in fields(RunConfig)}


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if key not in _CONVERTERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _CONVERTERS[key](value)
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return RunConfig(**values)


def load_config(path: str | Path) -> RunConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: RunConfig) -> str:
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            continue
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif f.name == "timing_pairs":
            text = ", ".join(f"{a!r}:{b!r}" for a, b in v)
        elif isinstance(v, tuple):
            text = ", ".join(repr(float(a)) for a in v)
        else:
            text = repr(v) if isinstance(v, float) else str(v)
        lines.append(f"{f.name} = {text}")
    return "\n".join(lines) + "\n"
