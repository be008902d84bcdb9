"""Uniform mesh on [-1, 1], field storage and trapezoidal quadrature."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .params import DimensionlessParameters, evaluate_profile


@dataclass(frozen=True)
class Grid:
    """Uniform node-centred grid ``x_j = -1 + j*dx``, ``j = 0..J``."""

    J: int
    dx: float = field(init=False)
    nodes: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 4:
            raise ParameterError(f"grid needs an integer J >= 4, got {self.J!r}")
        object.__setattr__(self, "J", int(self.J))
        dx = 2.0 / self.J
        nodes = -1.0 + dx * np.arange(self.J + 1)
        nodes[-1] = 1.0
        nodes.flags.writeable = False
        object.__setattr__(self, "dx", dx)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n(self) -> int:
        return self.J + 1

    @property
    def midpoints(self) -> np.ndarray:
        """x_{j+1/2} for j = -1..J, i.e. including both ghost half-points."""
        return -1.0 + self.dx * (np.arange(-1, self.J + 1) + 0.5)

    def index_of(self, x: float, tol: float = 1e-9) -> int:
        """Node index of ``x``; raises if ``x`` is not a grid node."""
        j = int(round((x + 1.0) / self.dx))
        if j < 0 or j > self.J or abs(self.nodes[j] - x) > tol * max(1.0, self.dx):
            raise ParameterError(f"x = {x} is not a node of the grid with J = {self.J}")
        return j


def build_grid(J: int) -> Grid:
    return Grid(J)


@dataclass
class FieldState:
    """Concentrations ``c[i, j]`` and potential ``phi[j]`` at time ``t``."""

    t: float
    c: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        self.c = np.atleast_2d(np.asarray(self.c, dtype=float))
        self.phi = np.asarray(self.phi, dtype=float)
        if self.c.shape[1] != self.phi.shape[0]:
            raise ParameterError(
                f"concentration rows have length {self.c.shape[1]}, potential has {self.phi.shape[0]}"
            )

    @property
    def n_species(self) -> int:
        return self.c.shape[0]

    def copy(self) -> "FieldState":
        return FieldState(self.t, self.c.copy(), self.phi.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.phi)))

    def negative_report(self):
        """(count of negative concentrations, most negative value or 0)."""
        neg = self.c < 0
        count = int(np.count_nonzero(neg))
        return count, float(self.c[neg].min()) if count else 0.0


def trapezoid(values, grid: Grid) -> float:
    """Composite trapezoidal rule over the grid nodes."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] != grid.n:
        raise ParameterError(f"expected {grid.n} nodal values, got {v.shape[-1]}")
    dx = grid.dx
    return dx * v[..., 1:-1].sum(axis=-1) + 0.5 * dx * (v[..., 0] + v[..., -1])


def uniform_initial_state(grid: Grid, params: DimensionlessParameters, poisson_solve=None) -> FieldState:
    """Uniform concentrations ``c_init`` with the matching potential at t = 0.

    ``poisson_solve(c, params, grid)`` defaults to the package Poisson solver.
    """
    if poisson_solve is None:
        from .stepper import solve_poisson as poisson_solve
    c = np.empty((params.n_species, grid.n))
    c[:] = np.asarray(params.c_init)[:, None]
    phi = poisson_solve(c, params, grid)
    return FieldState(0.0, c, phi)


def node_values(profile, grid: Grid) -> np.ndarray:
    return evaluate_profile(profile, grid.nodes)
