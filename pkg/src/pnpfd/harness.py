"""Convergence, validation and parameter studies built on the solver."""
from __future__ import annotations

import enum
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .diagnostics import max_rate_of_change, total_concentration
from .errors import ConvergenceError, InconclusiveOrderError, ParameterError
from .grid import FieldState, Grid, trapezoid, uniform_initial_state
from .params import DimensionlessParameters, channel_defaults, validation_defaults
from .spatial import BoundaryScheme, assemble_poisson_system
from .stepper import GAMMA_DEFAULT, RunResult, StepperConfig, run, simulate, solve_banded

logger = logging.getLogger(__name__)

PROBE = (0.904, 0.02)
TEMPORAL_BASE_DTS = (5e-5, 2.5e-5, 1.25e-5)
SPATIAL_JS = (1000, 500, 250)
STEADY_RATE = 1e-6


def _map(fn, items, workers=1):
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def richardson_order(v1: float, v2: float, v3: float) -> float:
    """Observed order from values at spacings h, 2h and 4h.

    >>> richardson_order(1.0 + 1e-2, 1.0 + 4e-2, 1.0 + 16e-2)
    2.0
    """
    d12 = abs(v1 - v2)
    if d12 <= 100.0 * np.finfo(float).eps * max(abs(v1), np.finfo(float).tiny):
        raise InconclusiveOrderError(f"|v1 - v2| = {d12:.3e} is at round-off level")
    return math.log2(abs(v2 - v3) / d12)


def probe_potential(params: DimensionlessParameters, J: int, cfg: StepperConfig,
                    x: float = PROBE[0]) -> float:
    """phi(x, cfg.t_end) from a run started at the uniform state."""
    grid = Grid(J)
    j = grid.index_of(x)
    result = simulate(params, grid, cfg, diagnostics=False)
    return float(result.final.phi[j])


def _probe_job(args):
    params, J, cfg, x = args
    return probe_potential(params, J, cfg, x)


@dataclass
class OrderRow:
    label: str
    spacing: float
    values: Tuple[float, float, float]
    order: float


@dataclass
class OrderReport:
    kind: str
    probe: Tuple[float, float]
    rows: List[OrderRow] = field(default_factory=list)

    def orders(self, label: str) -> List[float]:
        return [r.order for r in self.rows if r.label == label]


def temporal_order_study(params: Optional[DimensionlessParameters] = None, J: int = 1000,
                         base_dts: Sequence[float] = TEMPORAL_BASE_DTS,
                         inner_iterations: Sequence[int] = (0, 2), probe=PROBE,
                         scheme=BoundaryScheme.CONSERVATIVE, workers: int = 1) -> OrderReport:
    """Richardson order in time at a fixed grid, one row per (k, base dt)."""
    params = params or channel_defaults()
    x, t = probe
    dts = sorted({m * b for b in base_dts for m in (1, 2, 4)})
    jobs = [(params, J, StepperConfig(dt=dt, t_end=t, inner_iterations=k, scheme=scheme), x)
            for k in inner_iterations for dt in dts]
    values = dict(zip([(k, dt) for k in inner_iterations for dt in dts], _map(_probe_job, jobs, workers)))
    report = OrderReport("temporal", tuple(probe))
    for k in inner_iterations:
        for b in base_dts:
            v = (values[(k, b)], values[(k, 2 * b)], values[(k, 4 * b)])
            report.rows.append(OrderRow(f"k={k}", b, v, richardson_order(*v)))
    return report


def spatial_order_study(params: Optional[DimensionlessParameters] = None, Js: Sequence[int] = SPATIAL_JS,
                        dt: float = 1e-6, inner_iterations: int = 2, probe=PROBE,
                        schemes=(BoundaryScheme.CONSERVATIVE, BoundaryScheme.STANDARD),
                        workers: int = 1) -> OrderReport:
    """Richardson order in space with a small fixed time step.

    ``Js`` are the finest-to-coarsest subinterval counts (J, J/2, J/4); the
    probe must be a node of every grid.
    """
    params = params or channel_defaults()
    x, t = probe
    Js = list(Js)
    if len(Js) != 3 or Js[0] != 2 * Js[1] or Js[1] != 2 * Js[2]:
        raise ParameterError(f"spatial study needs J, J/2, J/4; got {Js}")
    for J in Js:
        Grid(J).index_of(x)
    schemes = [BoundaryScheme.parse(s) for s in schemes]
    jobs = [(params, J, StepperConfig(dt=dt, t_end=t, inner_iterations=inner_iterations, scheme=s), x)
            for s in schemes for J in Js]
    vals = _map(_probe_job, jobs, workers)
    report = OrderReport("spatial", tuple(probe))
    for n, s in enumerate(schemes):
        v = tuple(vals[3 * n: 3 * n + 3])
        report.rows.append(OrderRow(s.value, 2.0 / Js[0], v, richardson_order(*v)))
    return report


def manufactured_diffusion_order(Js: Sequence[int] = (40, 80, 160), t_end: float = 0.1, dt: float = 1e-4,
                                 amplitude: float = 0.5):
    """Error-ratio order for pure diffusion with no-flux ends.

    Exact solution ``1 + a cos(pi x) exp(-pi^2 t)`` with a single neutral
    species; returns ``(errors, orders)`` in the max norm.
    """
    params = DimensionlessParameters(chi1=1.0, chi2=0.0, eta=1.0, z=(0.0,), D=(1.0,))
    errors = []
    for J in Js:
        grid = Grid(J)
        c0 = 1.0 + amplitude * np.cos(np.pi * grid.nodes)
        state = FieldState(0.0, c0[None, :], np.zeros(grid.n))
        cfg = StepperConfig(dt=dt, t_end=t_end, inner_iterations=0)
        final = run(state, cfg, params, grid, diagnostics=False).final
        exact = 1.0 + amplitude * np.cos(np.pi * grid.nodes) * np.exp(-np.pi**2 * t_end)
        errors.append(float(np.max(np.abs(final.c[0] - exact))))
    orders = [math.log2(errors[k] / errors[k + 1]) for k in range(len(errors) - 1)]
    return errors, orders


@dataclass
class PBSolution:
    """Discrete Poisson-Boltzmann steady state.

    ``amplitude[i]`` is the prefactor in ``c_i = amplitude_i exp(-chi1 z_i phi)``.
    """

    phi: np.ndarray
    c: np.ndarray
    amplitude: np.ndarray
    iterations: int
    residual: float


def pb_steady_state(params: DimensionlessParameters, grid: Grid, masses: Optional[Sequence[float]] = None,
                    phi0: Optional[np.ndarray] = None, tol: float = 1e-12, max_iter: int = 100) -> PBSolution:
    """Solve the Poisson-Boltzmann problem on the PNP grid with fixed ion masses.

    Unknown is phi alone; each concentration is eliminated through
    ``c_i = M_i exp(-chi1 z_i phi) / trapz(exp(-chi1 z_i phi))`` so the mass
    constraints hold exactly at every iterate.  The Jacobian is the
    tridiagonal Poisson stencil plus a diagonal term and one rank-one term per
    species; each damped Newton step is solved with the Woodbury identity.
    ``tol`` applies to the max-norm residual of the Poisson rows scaled by
    dx^2.
    """
    n_sp = params.n_species
    if masses is None:
        masses = [2.0 * c for c in params.c_init]
    M = np.asarray(masses, dtype=float)
    if np.any(M <= 0):
        raise ParameterError("prescribed masses must be positive")
    z = np.asarray(params.z)
    a = params.chi1
    dx2 = grid.dx**2
    w = np.full(grid.n, grid.dx)
    w[[0, -1]] *= 0.5

    base = assemble_poisson_system(np.zeros((n_sp, grid.n)), params, grid)

    def concentrations(phi):
        e = -a * z[:, None] * phi[None, :]
        e -= e.max(axis=1, keepdims=True)
        e = np.exp(e)
        return M[:, None] * e / (e @ w)[:, None]

    def residual(phi):
        c = concentrations(phi)
        r = base.matvec(phi) - base.rhs + params.chi2 * (z @ c)
        return r, c

    if phi0 is None:
        uniform = (M / 2.0)[:, None] * np.ones(grid.n)
        phi = solve_banded(assemble_poisson_system(uniform, params, grid))
    else:
        phi = np.array(phi0, dtype=float)
    r, c = residual(phi)
    norm = np.max(np.abs(r)) * dx2
    for it in range(1, max_iter + 1):
        if norm < tol:
            return PBSolution(phi, c, _amplitudes(c, phi, params), it - 1, norm)
        # J = T + sum_i u_i v_i^T
        diag_extra = -a * params.chi2 * ((z**2)[:, None] * c).sum(axis=0)
        T = type(base)(base.lower.copy(), base.diag + diag_extra, base.upper.copy(), -r)
        U = (a * params.chi2 * z**2 / M)[:, None] * c
        V = w[None, :] * c
        y = solve_banded(T)
        Z = np.empty((n_sp, grid.n))
        for i in range(n_sp):
            T.rhs = U[i]
            Z[i] = solve_banded(T)
        small = np.eye(n_sp) + V @ Z.T
        step = y - Z.T @ np.linalg.solve(small, V @ y)

        lam = 1.0
        while True:
            trial = phi + lam * step
            r_new, c_new = residual(trial)
            new_norm = np.max(np.abs(r_new)) * dx2
            if new_norm < norm or lam < 1e-4:
                break
            lam *= 0.5
        phi, r, c, norm = trial, r_new, c_new, new_norm
        if lam * np.max(np.abs(step)) < 1e-15 * max(1.0, np.max(np.abs(phi))) and norm < 1e3 * tol:
            return PBSolution(phi, c, _amplitudes(c, phi, params), it, norm)
    raise ConvergenceError(f"Poisson-Boltzmann Newton did not converge in {max_iter} iterations", norm)


def _amplitudes(c, phi, params):
    return np.array([c[i, 0] * math.exp(params.chi1 * params.z[i] * phi[0]) for i in range(params.n_species)])


@dataclass
class PBValidation:
    eps: float
    max_difference: float
    times: np.ndarray
    history: np.ndarray
    pnp_phi: np.ndarray
    pb: PBSolution


def pb_validation(eps: float, J: int = 2048, dt: float = 1e-4, t_end: float = 2.0,
                  inner_iterations: int = 2, sample_every: int = 500,
                  params: Optional[DimensionlessParameters] = None) -> PBValidation:
    """Run conservative PNP to ``t_end`` and compare phi with the PB oracle.

    ``history`` holds max|phi_PNP - phi_PB| at the sampled times.
    """
    params = params or validation_defaults(eps)
    grid = Grid(J)
    initial = uniform_initial_state(grid, params)
    masses = [trapezoid(initial.c[i], grid) for i in range(params.n_species)]
    pb = pb_steady_state(params, grid, masses)
    times, diffs = [], []

    def watch(state, n):
        times.append(state.t)
        diffs.append(float(np.max(np.abs(state.phi - pb.phi))))

    cfg = StepperConfig(dt=dt, t_end=t_end, inner_iterations=inner_iterations)
    result = run(initial, cfg, params, grid, observers=[watch], sample_every=sample_every, diagnostics=False)
    return PBValidation(eps, diffs[-1], np.array(times), np.array(diffs), result.final.phi, pb)


def symmetry_error(state: FieldState) -> float:
    """max |c_1(x) - c_2(-x)| for a two-species state."""
    return float(np.max(np.abs(state.c[0] - state.c[1][::-1])))


@dataclass
class SchemeComparison:
    conservative: RunResult
    standard: RunResult

    def mass_ratio(self, scheme) -> np.ndarray:
        rec = self[scheme].record
        return rec.c_tot[-1] / rec.c_tot[0]

    def __getitem__(self, scheme) -> RunResult:
        return getattr(self, BoundaryScheme.parse(scheme).value)


def _run_job(args):
    params, J, cfg, kwargs = args
    return simulate(params, Grid(J), cfg, **kwargs)


def compare_schemes(params: Optional[DimensionlessParameters] = None, J: int = 1000, dt: float = 1e-4,
                    t_end: float = 1.0, inner_iterations: int = 2, snapshot_times=(0.0, 0.01, 0.05, 1.0),
                    sample_every: int = 10, workers: int = 1) -> SchemeComparison:
    """Identical runs that differ only in the boundary scheme."""
    params = params or channel_defaults()
    kwargs = dict(snapshot_times=snapshot_times, sample_every=sample_every)
    jobs = [(params, J, StepperConfig(dt=dt, t_end=t_end, inner_iterations=inner_iterations, scheme=s), kwargs)
            for s in (BoundaryScheme.CONSERVATIVE, BoundaryScheme.STANDARD)]
    cons, std = _map(_run_job, jobs, workers)
    return SchemeComparison(cons, std)


def boundary_layer_width(phi, grid: Grid, threshold: float = 0.05) -> float:
    """Distance from x = -1 to the first node where |phi - phi(0)| drops
    below ``threshold`` times its value at x = -1."""
    phi = np.asarray(phi, dtype=float)
    centre = phi[grid.index_of(0.0)]
    dev = np.abs(phi - centre)
    limit = threshold * dev[0]
    below = np.flatnonzero(dev[: grid.J // 2 + 1] < limit)
    if below.size == 0:
        return 1.0
    return float(grid.nodes[below[0]] + 1.0)


@dataclass
class SweepRow:
    value: float
    result: RunResult
    steady: bool
    width: float = math.nan


def _steady_stop(params, grid):
    def stop(state):
        return max_rate_of_change(state, params, grid) < STEADY_RATE
    return stop


def _sweep_job(args):
    params, J, cfg, sample_every = args
    grid = Grid(J)
    result = simulate(params, grid, cfg, sample_every=sample_every, stop_when=_steady_stop(params, grid))
    steady = result.record.max_dcdt[-1] < STEADY_RATE
    return result, steady


def chi2_sweep(values=(31.35, 125.4, 501.6), params: Optional[DimensionlessParameters] = None, J: int = 1000,
               dt: float = 1e-4, t_end: float = 1.0, scheme=BoundaryScheme.CONSERVATIVE,
               sample_every: int = 100, workers: int = 1) -> List[SweepRow]:
    """Boundary-layer width of phi at t_end (or at steady state) per chi2."""
    params = params or channel_defaults()
    cfg = StepperConfig(dt=dt, t_end=t_end, scheme=scheme)
    jobs = [(params.replace(chi2=float(v)), J, cfg, sample_every) for v in values]
    rows = []
    for v, (result, steady) in zip(values, _map(_sweep_job, jobs, workers)):
        grid = Grid(J)
        rows.append(SweepRow(float(v), result, steady, boundary_layer_width(result.final.phi, grid)))
    return rows


def eta_sweep(values=(1e-6, 1e-5, 1e-4, 1e-3), params: Optional[DimensionlessParameters] = None,
              J: int = 1000, dt: float = 1e-4, t_end: float = 1.0, scheme=BoundaryScheme.CONSERVATIVE,
              sample_every: int = 100, workers: int = 1):
    """Final concentration profiles per Robin length.

    Returns ``(rows, max_relative_difference)`` where the difference is taken
    node-wise against the first sweep value.
    """
    params = params or channel_defaults()
    cfg = StepperConfig(dt=dt, t_end=t_end, scheme=scheme)
    jobs = [(params.replace(eta=float(v)), J, cfg, sample_every) for v in values]
    rows = [SweepRow(float(v), res, steady) for v, (res, steady) in zip(values, _map(_sweep_job, jobs, workers))]
    ref = rows[0].result.final.c
    spread = max(float(np.max(np.abs(r.result.final.c - ref) / np.abs(ref))) for r in rows[1:]) if len(rows) > 1 else 0.0
    return rows, spread


class StudyKind(enum.Enum):
    TEMPORAL_ORDER = "temporal-order"
    SPATIAL_ORDER = "spatial-order"
    SCHEME_COMPARISON = "compare"
    CHI2_SWEEP = "chi2-sweep"
    ETA_SWEEP = "eta-sweep"
    PB_VALIDATION = "pb-validate"


@dataclass
class StudySpec:
    kind: StudyKind
    params: DimensionlessParameters
    J: int = 1000
    dt: float = 1e-4
    t_end: float = 1.0
    inner_iterations: int = 2
    probe: Tuple[float, float] = PROBE
    sweep_values: Tuple[float, ...] = ()
    workers: int = 1


def run_study(spec: StudySpec):
    kind = StudyKind(spec.kind) if not isinstance(spec.kind, StudyKind) else spec.kind
    if kind is StudyKind.TEMPORAL_ORDER:
        base = spec.sweep_values or TEMPORAL_BASE_DTS
        return temporal_order_study(spec.params, spec.J, base, probe=spec.probe, workers=spec.workers)
    if kind is StudyKind.SPATIAL_ORDER:
        Js = tuple(int(v) for v in spec.sweep_values) or SPATIAL_JS
        return spatial_order_study(spec.params, Js, spec.dt, spec.inner_iterations, spec.probe,
                                   workers=spec.workers)
    if kind is StudyKind.SCHEME_COMPARISON:
        return compare_schemes(spec.params, spec.J, spec.dt, spec.t_end, spec.inner_iterations,
                               workers=spec.workers)
    if kind is StudyKind.CHI2_SWEEP:
        return chi2_sweep(spec.sweep_values or (31.35, 125.4, 501.6), spec.params, spec.J, spec.dt,
                          spec.t_end, workers=spec.workers)
    if kind is StudyKind.ETA_SWEEP:
        return eta_sweep(spec.sweep_values or (1e-6, 1e-5, 1e-4, 1e-3), spec.params, spec.J, spec.dt,
                         spec.t_end, workers=spec.workers)
    if kind is StudyKind.PB_VALIDATION:
        return [pb_validation(v, spec.J, spec.dt, spec.t_end, spec.inner_iterations)
                for v in (spec.sweep_values or (0.25, 2.0**-6))]
    raise ParameterError(f"unknown study kind {spec.kind!r}")
