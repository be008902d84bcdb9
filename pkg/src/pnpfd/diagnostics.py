"""Conservation, energy and relaxation diagnostics.

Energies are scaled by ``k_B T c0 L``; in these units the electric part of the
free energy carries the factor ``chi1 / (2 chi2)`` and the dissipation law
reads ``dE/dt = -int sum_i D_i c_i (d mu_i/dx)^2 dx`` with no further
constants.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import xlogy

from .errors import InvalidSampleError, ParameterError
from .grid import FieldState, Grid, trapezoid
from .params import DimensionlessParameters, evaluate_profile
from .spatial import BoundaryScheme, np_full_rhs


def total_concentration(state: FieldState, i: int, grid: Grid) -> float:
    return float(trapezoid(state.c[i], grid))


def _gradient(values, grid: Grid) -> np.ndarray:
    # centred inside, three-point one-sided at both ends
    return np.gradient(values, grid.dx, edge_order=2)


def total_energy(state: FieldState, params: DimensionlessParameters, grid: Grid) -> float:
    """Entropy plus electrostatic energy including the Robin boundary term."""
    c = state.c
    if np.any(c < 0):
        raise InvalidSampleError(f"negative concentration at t={state.t:.6g}; entropy undefined")
    c_ref = np.asarray(params.c_ref)[:, None]
    entropy = trapezoid(xlogy(c, c / c_ref).sum(axis=0), grid)

    eps_nodes = evaluate_profile(params.eps, grid.nodes)
    dphi = _gradient(state.phi, grid)
    field_part = trapezoid(eps_nodes * dphi**2, grid)
    boundary = (eps_nodes[-1] * state.phi[-1] ** 2 + eps_nodes[0] * state.phi[0] ** 2) / params.eta
    if params.chi2 == 0:
        return float(entropy)
    return float(entropy + params.chi1 / (2.0 * params.chi2) * (field_part + boundary))


def chemical_potential(state: FieldState, i: int, params: DimensionlessParameters, grid: Grid) -> np.ndarray:
    """log(c_i / c_ref) + 1 + chi1 z_i phi, in units of k_B T."""
    c = state.c[i]
    bad = np.flatnonzero(c <= 0)
    if bad.size:
        raise InvalidSampleError(
            f"species {i + 1}: non-positive concentration at node {bad[0]} (c={c[bad[0]]:.3e})"
        )
    return np.log(c / params.c_ref[i]) + 1.0 + params.chi1 * params.z[i] * state.phi


def dissipation_rate_rhs(state: FieldState, params: DimensionlessParameters, grid: Grid) -> float:
    """Right-hand side of the energy law; always <= 0."""
    total = np.zeros(grid.n)
    for i in range(state.n_species):
        dmu = _gradient(chemical_potential(state, i, params, grid), grid)
        total += params.D[i] * state.c[i] * dmu**2
    return -float(trapezoid(total, grid))


def energy_rate_lhs(series):
    """Second-order finite-difference dE/dt of a sampled energy curve.

    ``series`` is a sequence of ``(t, E)`` pairs; returns ``(t, dE/dt)`` pairs.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ParameterError("energy rate needs at least 3 samples")
    t, E = arr[:, 0], arr[:, 1]
    return list(zip(t.tolist(), np.gradient(E, t, edge_order=2).tolist()))


def max_rate_of_change(state: FieldState, params: DimensionlessParameters, grid: Grid) -> float:
    """max over species and nodes of |dc_i/dt| from the conservative operator."""
    return max(
        float(np.max(np.abs(np_full_rhs(state.c[i], state.phi, i, params, grid, BoundaryScheme.CONSERVATIVE))))
        for i in range(state.n_species)
    )


@dataclass(frozen=True)
class DiagnosticsSample:
    t: float
    c_tot: tuple
    energy: float
    dissipation_rhs: float
    max_dcdt: float
    min_c: float


@dataclass
class DiagnosticsRecord:
    """Time series of diagnostic samples.

    ``energy`` and ``dissipation_rhs`` are NaN for samples where a
    concentration was negative.
    """

    samples: List[DiagnosticsSample] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, s: DiagnosticsSample):
        if self.samples and not s.t > self.samples[-1].t:
            raise ParameterError(f"sample time {s.t} does not increase past {self.samples[-1].t}")
        self.samples.append(s)

    def __len__(self):
        return len(self.samples)

    @property
    def t(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def c_tot(self) -> np.ndarray:
        return np.array([s.c_tot for s in self.samples])

    @property
    def energy(self) -> np.ndarray:
        return np.array([s.energy for s in self.samples])

    @property
    def dissipation_rhs(self) -> np.ndarray:
        return np.array([s.dissipation_rhs for s in self.samples])

    @property
    def max_dcdt(self) -> np.ndarray:
        return np.array([s.max_dcdt for s in self.samples])

    @property
    def min_c(self) -> np.ndarray:
        return np.array([s.min_c for s in self.samples])


def sample(state: FieldState, params: DimensionlessParameters, grid: Grid) -> DiagnosticsSample:
    c_tot = tuple(total_concentration(state, i, grid) for i in range(state.n_species))
    try:
        energy = total_energy(state, params, grid)
        rate = dissipation_rate_rhs(state, params, grid)
    except InvalidSampleError:
        energy = rate = math.nan
    return DiagnosticsSample(
        t=float(state.t),
        c_tot=c_tot,
        energy=energy,
        dissipation_rhs=rate,
        max_dcdt=max_rate_of_change(state, params, grid),
        min_c=float(state.c.min()),
    )


def relative_l2_mismatch(reference, candidate) -> float:
    """||candidate - reference||_2 / ||reference||_2."""
    ref = np.asarray(reference, dtype=float)
    cand = np.asarray(candidate, dtype=float)
    return float(np.linalg.norm(cand - ref) / np.linalg.norm(ref))
