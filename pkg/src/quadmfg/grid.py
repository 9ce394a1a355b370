"""Uniform space-time grids on [0, T] x [0, 1] and field helpers.

Fields are plain ``(I + 1, J + 1)`` float arrays indexed ``[time, space]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Grid1D:
    n_time_steps: int
    n_space_steps: int
    dt: float
    dx: float
    times: np.ndarray
    nodes: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_time_steps + 1, self.n_space_steps + 1)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != self.shape:
                raise GridError(f"field of shape {np.shape(f)} does not match grid {self.shape}")


def build_grid(horizon: float, n_time_steps: int, n_space_steps: int) -> Grid1D:
    if not horizon > 0:
        raise GridError(f"horizon must be positive, got {horizon}")
    if int(n_time_steps) < 1 or int(n_space_steps) < 1:
        raise GridError("need at least one time step and one space step")
    I, J = int(n_time_steps), int(n_space_steps)
    return Grid1D(
        n_time_steps=I,
        n_space_steps=J,
        dt=horizon / I,
        dx=1.0 / J,
        times=np.arange(I + 1) * (horizon / I),
        nodes=np.arange(J + 1) / J,
    )


def steps_for(length: float, step: float, what: str = "step", atol: float = 1e-9) -> int:
    """Number of uniform steps of size ``step`` covering ``length`` exactly."""
    if not step > 0:
        raise GridError(f"{what} must be positive, got {step}")
    n = int(round(length / step))
    if n < 1 or abs(n * step - length) > atol:
        raise GridError(f"{what}={step!r} does not divide {length!r} into a whole number of steps")
    return n


def grid_from_steps(horizon: float, dt: float, dx: float) -> Grid1D:
    """Grid with I = round(T / dt), J = round(1 / dx); both must divide exactly."""
    return build_grid(horizon, steps_for(horizon, dt, "dt"), steps_for(1.0, dx, "dx"))


def discrete_norm(field: np.ndarray) -> float:
    """sqrt of the largest per-time-row mean of squares."""
    field = np.asarray(field, dtype=float)
    if field.size == 0:
        raise GridError("empty field")
    field = np.atleast_2d(field)
    # scale by the sup so squaring neither underflows nor overflows
    scale = np.max(np.abs(field))
    if scale == 0 or not np.isfinite(scale):
        return float(scale)
    return float(scale * np.sqrt(np.max(np.mean((field / scale) ** 2, axis=1))))


def sup_norm(field: np.ndarray) -> float:
    field = np.asarray(field, dtype=float)
    if field.size == 0:
        raise GridError("empty field")
    return float(np.max(np.abs(field)))


def write_field_csv(path: str | Path, grid: Grid1D, field: np.ndarray) -> None:
    """One row per time, header ``t\\x,x_0,...,x_J``; values written with repr."""
    grid.check(field)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t\\x", *(repr(float(x)) for x in grid.nodes)])
        for t, row in zip(grid.times, field):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row)])


def read_field_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(times, nodes, values)`` from a file written by write_field_csv."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    nodes = np.array([float(v) for v in rows[0][1:]])
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    return body[:, 0], nodes, body[:, 1:]
