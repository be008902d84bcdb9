"""Finite-difference operators and implicit system assembly.

Nernst-Planck operator at interior nodes (``s_j = phi_{j+1} - phi_{j-1}``)::

    f_j = [D_{j+1/2}(c_{j+1} - c_j) - D_{j-1/2}(c_j - c_{j-1})] / dx^2
        + chi1 z [D_{j+1} c_{j+1} s_{j+1} - D_{j-1} c_{j-1} s_{j-1}] / (4 dx^2)

The drift term needs ``phi_{-1}`` and ``phi_{J+1}`` at j = 1 and j = J-1;
they come from the Robin ghost closure.  Rows j = 0 and j = J depend on the
boundary scheme:

* ``CONSERVATIVE`` closes the boundary cell of width dx/2 with the no-flux
  condition, so that the trapezoid-weighted sum of all rows telescopes to
  zero for any potential::

      f_0 = 2 D_{1/2}(c_1 - c_0)/dx^2 + chi1 z (D_0 c_0 s_0 + D_1 c_1 s_1)/(2 dx^2)

* ``STANDARD`` takes a one-sided difference of the centred flux at x_1::

      f_0 = D_1 (c_2 - c_0 + chi1 z c_1 s_1) / (2 dx^2)

  which couples c_0, c_1, c_2 and leaves one entry outside the tridiagonal
  band in each corner row.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import ParameterError
from .grid import Grid
from .params import DimensionlessParameters, evaluate_profile


class BoundaryScheme(enum.Enum):
    STANDARD = "standard"
    CONSERVATIVE = "conservative"

    @classmethod
    def parse(cls, value) -> "BoundaryScheme":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ParameterError(
                f"unknown boundary scheme {value!r}; expected 'standard' or 'conservative'"
            ) from None


@dataclass
class BandedSystem:
    """Tridiagonal matrix plus optional corner entries, and a right-hand side.

    ``lower[j]`` is entry (j+1, j), ``upper[j]`` is entry (j, j+1).
    ``corner_first`` sits at (0, 2) and ``corner_last`` at (n-1, n-3).
    """

    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    rhs: np.ndarray
    corner_first: Optional[float] = None
    corner_last: Optional[float] = None

    @property
    def n(self) -> int:
        return self.diag.shape[0]

    @property
    def has_corners(self) -> bool:
        return self.corner_first is not None or self.corner_last is not None

    def to_dense(self) -> np.ndarray:
        n = self.n
        A = np.diag(self.diag) + np.diag(self.upper, 1) + np.diag(self.lower, -1)
        if self.corner_first is not None:
            A[0, 2] += self.corner_first
        if self.corner_last is not None:
            A[n - 1, n - 3] += self.corner_last
        return A

    def matvec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = self.diag * x
        y[:-1] += self.upper * x[1:]
        y[1:] += self.lower * x[:-1]
        if self.corner_first is not None:
            y[0] += self.corner_first * x[2]
        if self.corner_last is not None:
            y[-1] += self.corner_last * x[-3]
        return y

    def residual(self, x) -> np.ndarray:
        return self.matvec(x) - self.rhs


class GhostPotentials(NamedTuple):
    phi_minus1: float
    phi_Jplus1: float


def ghost_potentials(phi, params: DimensionlessParameters, grid: Grid) -> GhostPotentials:
    """Potential at x_{-1} and x_{J+1} from the centred Robin condition."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (grid.n,):
        raise ParameterError(f"potential must have {grid.n} nodes, got shape {phi.shape}")
    if not params.eta > 0:
        raise ParameterError("Robin length must be positive; the Dirichlet limit is not supported")
    k = 2.0 * grid.dx / params.eta
    return GhostPotentials(
        float(phi[1] - k * (phi[0] - params.phi_minus)),
        float(phi[-2] - k * (phi[-1] - params.phi_plus)),
    )


def _extended_potential(phi, params, grid) -> np.ndarray:
    g = ghost_potentials(phi, params, grid)
    return np.concatenate(([g.phi_minus1], phi, [g.phi_Jplus1]))


def _centred_jumps(phi, params, grid) -> np.ndarray:
    """s_j = phi_{j+1} - phi_{j-1} for j = 0..J (ghosts at both ends)."""
    ext = _extended_potential(phi, params, grid)
    return ext[2:] - ext[:-2]


def _diffusion(params, i, grid):
    """(D at half points j+1/2 for j = 0..J-1, D at nodes)."""
    D = params.D[i]
    return np.full(grid.J, D), np.full(grid.n, D)


def np_rhs(c_i, phi, i: int, params: DimensionlessParameters, grid: Grid) -> np.ndarray:
    """Nernst-Planck operator at interior nodes j = 1..J-1 (length J-1)."""
    c = np.asarray(c_i, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if c.shape != (grid.n,):
        raise ParameterError(f"concentration must have {grid.n} nodes, got shape {c.shape}")
    ext = _extended_potential(phi, params, grid)  # ext[j+1] = phi_j
    Dh, Dn = _diffusion(params, i, grid)
    dx2 = grid.dx**2
    j = np.arange(1, grid.J)
    diff = (Dh[j] * (c[j + 1] - c[j]) - Dh[j - 1] * (c[j] - c[j - 1])) / dx2
    drift = (
        Dn[j + 1] * c[j + 1] * (ext[j + 3] - ext[j + 1])
        - Dn[j - 1] * c[j - 1] * (ext[j + 1] - ext[j - 1])
    ) / (4.0 * dx2)
    return diff + params.chi1 * params.z[i] * drift


def np_operator(i: int, phi, params: DimensionlessParameters, grid: Grid,
                scheme: BoundaryScheme) -> BandedSystem:
    """Matrix M(phi) with ``f = M c`` on all nodes, including boundary rows.

    The returned system has a zero right-hand side.
    """
    scheme = BoundaryScheme.parse(scheme)
    n, J = grid.n, grid.J
    dx2 = grid.dx**2
    a = params.chi1 * params.z[i]
    s = _centred_jumps(np.asarray(phi, dtype=float), params, grid)
    Dh, Dn = _diffusion(params, i, grid)
    drift = a * Dn * s / (4.0 * dx2)  # coefficient carried by c_j in rows j +- 1

    lower = np.empty(n - 1)
    diag = np.empty(n)
    upper = np.empty(n - 1)
    # interior rows 1..J-1
    lower[:-1] = Dh[:-1] / dx2 - drift[:-2]
    diag[1:-1] = -(Dh[1:] + Dh[:-1]) / dx2
    upper[1:] = Dh[1:] / dx2 + drift[2:]

    corner_first = corner_last = None
    if scheme is BoundaryScheme.CONSERVATIVE:
        diag[0] = -2.0 * Dh[0] / dx2 + 2.0 * drift[0]
        upper[0] = 2.0 * Dh[0] / dx2 + 2.0 * drift[1]
        diag[J] = -2.0 * Dh[J - 1] / dx2 - 2.0 * drift[J]
        lower[J - 1] = 2.0 * Dh[J - 1] / dx2 - 2.0 * drift[J - 1]
    else:
        w0 = Dn[1] / (2.0 * dx2)
        diag[0] = -w0
        upper[0] = a * Dn[1] * s[1] / (2.0 * dx2)
        corner_first = w0
        wJ = Dn[J - 1] / (2.0 * dx2)
        diag[J] = -wJ
        lower[J - 1] = -a * Dn[J - 1] * s[J - 1] / (2.0 * dx2)
        corner_last = wJ
    return BandedSystem(lower, diag, upper, np.zeros(n), corner_first, corner_last)


def np_full_rhs(c_i, phi, i, params, grid, scheme=BoundaryScheme.CONSERVATIVE) -> np.ndarray:
    """Nernst-Planck operator on every node under the given boundary scheme."""
    return np_operator(i, phi, params, grid, scheme).matvec(c_i)


def _shifted_identity(op: BandedSystem, scale: float, rhs) -> BandedSystem:
    """Build ``I - scale * op`` with the given right-hand side."""
    return BandedSystem(
        -scale * op.lower,
        1.0 - scale * op.diag,
        -scale * op.upper,
        np.asarray(rhs, dtype=float),
        None if op.corner_first is None else -scale * op.corner_first,
        None if op.corner_last is None else -scale * op.corner_last,
    )


def assemble_tr_system(i: int, c_old, phi, scheme, gamma_dt: float,
                       params: DimensionlessParameters, grid: Grid, phi_old=None) -> BandedSystem:
    """Trapezoidal stage ``c - (gamma_dt/2) f(c, phi) = c_old + (gamma_dt/2) f(c_old, phi_old)``.

    ``phi`` is the current inner iterate; ``phi_old`` is the potential of the
    old time level and defaults to ``phi``.
    """
    c_old = np.asarray(c_old, dtype=float)
    half = 0.5 * gamma_dt
    op_new = np_operator(i, phi, params, grid, scheme)
    op_old = op_new if phi_old is None else np_operator(i, phi_old, params, grid, scheme)
    rhs = c_old + half * op_old.matvec(c_old)
    return _shifted_identity(op_new, half, rhs)


def bdf2_weights(gamma: float):
    """(implicit weight, weight of c^{n+gamma}, weight of c^n) of the BDF2 stage."""
    denom = gamma * (2.0 - gamma)
    return (1.0 - gamma) / (2.0 - gamma), 1.0 / denom, (1.0 - gamma) ** 2 / denom


def assemble_bdf2_system(i: int, c_old, c_gamma, phi, scheme, dt: float, gamma: float,
                         params: DimensionlessParameters, grid: Grid) -> BandedSystem:
    """BDF2 stage ``c - w dt f(c, phi) = a c^{n+gamma} - b c^n``."""
    w, a, b = bdf2_weights(gamma)
    rhs = a * np.asarray(c_gamma, dtype=float) - b * np.asarray(c_old, dtype=float)
    return _shifted_identity(np_operator(i, phi, params, grid, scheme), w * dt, rhs)


def charge_source(c, params: DimensionlessParameters, grid: Grid) -> np.ndarray:
    """rho0 + chi2 * sum_i z_i c_i at the nodes."""
    c = np.atleast_2d(np.asarray(c, dtype=float))
    rho = evaluate_profile(params.rho0, grid.nodes)
    return rho + params.chi2 * (np.asarray(params.z) @ c)


def assemble_poisson_system(c, params: DimensionlessParameters, grid: Grid) -> BandedSystem:
    """Discrete Poisson problem with the Robin ghost values eliminated."""
    n, J, dx = grid.n, grid.J, grid.dx
    dx2 = dx * dx
    eh = evaluate_profile(params.eps, grid.midpoints)  # eps_{j+1/2}, j = -1..J
    left, right = eh[:-1], eh[1:]  # eps_{j-1/2}, eps_{j+1/2} at node j
    lower = left[1:] / dx2
    upper = right[:-1] / dx2
    diag = -(left + right) / dx2
    rhs = -charge_source(c, params, grid)

    k = 2.0 * dx / params.eta
    # phi_{-1} = phi_1 - k (phi_0 - phi_minus); mirrored at x = 1
    upper[0] += left[0] / dx2
    diag[0] -= k * left[0] / dx2
    rhs[0] -= k * left[0] * params.phi_minus / dx2
    lower[J - 1] += right[J] / dx2
    diag[J] -= k * right[J] / dx2
    rhs[J] -= k * right[J] * params.phi_plus / dx2
    return BandedSystem(lower, diag, upper, rhs)
