"""Run outputs: field CSVs, the per-iteration mass table, summary.json, gnuplot scripts."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .grid import Grid1D, write_field_csv

FIELD_FILES = ("phi.csv", "psi.csv", "u.csv", "m.csv", "alpha.csv")
MASS_FILE = "mass.csv"
SUMMARY_FILE = "summary.json"


@dataclass
class RunSummary:
    problem: str
    sigma: float
    dt: float
    dx: float
    n_time_steps: int
    n_space_steps: int
    converged: bool
    outer_count: int
    stopping_metrics: list[float]
    newton: dict
    stability: dict
    validation: dict
    wall_time: float
    mass_drift: float
    shifted_by: float = 0.0
    files: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> RunSummary:
        return cls(**json.loads(text))

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def read(cls, path: str | Path) -> RunSummary:
        return cls.from_json(Path(path).read_text())


def write_fields(out: Path, grid: Grid1D, **fields: np.ndarray) -> list[str]:
    names = []
    for name, values in fields.items():
        fname = f"{name}.csv"
        write_field_csv(out / fname, grid, values)
        names.append(fname)
    return names


def write_mass_csv(path: str | Path, grid: Grid1D, series: list[np.ndarray]) -> None:
    """Mass of ``m^{n+1}`` per time row; one column per outer iteration n."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *(f"iter_{n}" for n in range(len(series)))])
        for i, t in enumerate(grid.times):
            w.writerow([repr(float(t)), *(repr(float(s[i])) for s in series)])


def read_mass_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(times, table)`` with ``table[i, n]`` the mass at t_i after iteration n."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 0], body[:, 1:]


_SURFACE = """\
# {title}
# usage: gnuplot -persist {script}
set datafile separator ','
set xlabel 'x'
set ylabel 't'
set zlabel '{label}'
set title '{title}'
set hidden3d
splot '{data}' matrix rowheaders columnheaders using ($1*{dx!r}):($2*{dt!r}):3 with lines notitle
"""

_MASS = """\
# total mass of m^(n+1) along time, outer iterations n = 0..{last}
# usage: gnuplot -persist {script}
set datafile separator ','
set key autotitle columnhead
set xlabel 't'
set ylabel 'mass'
set title 'Total mass per outer iteration'
plot for [k=2:{lastcol}] '{data}' using 1:k with lines
"""

PLOTS = (
    ("fig1_phi.gp", "phi.csv", "phi", "Solution for phi"),
    ("fig2_psi.gp", "psi.csv", "psi", "Solution for psi"),
    ("fig3_u.gp", "u.csv", "u", "Solution for u"),
    ("fig4_m.gp", "m.csv", "m", "Solution for m"),
    ("fig5_alpha.gp", "alpha.csv", "alpha", "Optimal control alpha = du/dx"),
)


def write_plot_scripts(out: Path, grid: Grid1D, written: list[str], n_mass_columns: int) -> list[str]:
    """gnuplot scripts for the five solution surfaces and the mass evolution.

    A script is emitted only when its data file is in ``written``.
    """
    names = []
    for script, data, label, title in PLOTS:
        if data not in written:
            continue
        (out / script).write_text(
            _SURFACE.format(title=title, script=script, label=label, data=data, dx=grid.dx, dt=grid.dt)
        )
        names.append(script)
    if MASS_FILE in written and n_mass_columns > 0:
        shown = min(n_mass_columns, 4)
        script = "fig10_mass.gp"
        (out / script).write_text(_MASS.format(last=shown - 1, script=script, lastcol=shown + 1, data=MASS_FILE))
        names.append(script)
    return names


def referenced_files(script_text: str) -> set[str]:
    """Data files read by ``plot``/``splot`` commands of a generated script."""
    refs = set()
    for line in script_text.splitlines():
        line = line.strip()
        if line.startswith(("plot", "splot")):
            parts = line.split("'")
            refs.update(parts[i] for i in range(1, len(parts), 2) if parts[i].endswith(".csv"))
    return refs
