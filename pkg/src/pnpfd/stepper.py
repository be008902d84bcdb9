"""Banded solves, the Poisson solve and TR-BDF2 time stepping.

Each stage alternates between an implicit concentration solve with the
potential frozen at the current iterate and a Poisson solve with the new
concentrations.  The number of such alternations is fixed by
``StepperConfig.inner_iterations``; no Newton solver is involved.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np
from scipy.linalg.lapack import dgtsv

from .errors import NonFiniteStateError, ParameterError, SingularSystemError
from .grid import FieldState, Grid
from .params import DimensionlessParameters
from .spatial import (
    BandedSystem,
    BoundaryScheme,
    assemble_bdf2_system,
    assemble_poisson_system,
    assemble_tr_system,
)

logger = logging.getLogger(__name__)

GAMMA_DEFAULT = 2.0 - math.sqrt(2.0)


@dataclass(frozen=True)
class StepperConfig:
    dt: float
    t_end: float = 1.0
    gamma: float = GAMMA_DEFAULT
    inner_iterations: int = 2
    scheme: BoundaryScheme = BoundaryScheme.CONSERVATIVE

    def __post_init__(self):
        object.__setattr__(self, "scheme", BoundaryScheme.parse(self.scheme))
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if int(self.inner_iterations) != self.inner_iterations or self.inner_iterations < 0:
            raise ParameterError("inner_iterations must be a non-negative integer")
        object.__setattr__(self, "inner_iterations", int(self.inner_iterations))


def solve_banded(system: BandedSystem) -> np.ndarray:
    """Solve a tridiagonal system, folding corner entries in first.

    A corner entry at (0, 2) is removed with one row operation against row 1
    (and symmetrically at the last row), after which LAPACK ``gtsv`` does the
    O(n) sweep.
    """
    n = system.n
    if n < 3:
        raise ParameterError("banded systems need at least 3 rows")
    dl = np.array(system.lower, dtype=float)
    d = np.array(system.diag, dtype=float)
    du = np.array(system.upper, dtype=float)
    b = np.array(system.rhs, dtype=float)

    e = system.corner_first
    if e:
        if du[1] == 0.0:
            raise SingularSystemError(1, "cannot eliminate corner entry (0, 2): entry (1, 2) is zero")
        m = e / du[1]
        d[0] -= m * dl[0]
        du[0] -= m * d[1]
        b[0] -= m * b[1]
    e = system.corner_last
    if e:
        if dl[n - 3] == 0.0:
            raise SingularSystemError(n - 2, f"cannot eliminate corner entry ({n - 1}, {n - 3})")
        m = e / dl[n - 3]
        dl[n - 2] -= m * d[n - 2]
        d[n - 1] -= m * du[n - 2]
        b[n - 1] -= m * b[n - 2]

    _, _, _, x, info = dgtsv(dl, d, du, b, overwrite_dl=1, overwrite_d=1, overwrite_du=1, overwrite_b=1)
    if info > 0:
        raise SingularSystemError(info - 1)
    if info < 0:
        raise ValueError(f"gtsv rejected argument {-info}")
    return x


def solve_poisson(c, params: DimensionlessParameters, grid: Grid) -> np.ndarray:
    return solve_banded(assemble_poisson_system(c, params, grid))


def _check_finite(arr, what, t, step, iteration):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteStateError(
            f"non-finite {what} at t={t:.6g} (step {step}, inner iteration {iteration})",
            t=t, step=step, iteration=iteration,
        )


def tr_stage(state: FieldState, cfg: StepperConfig, params: DimensionlessParameters, grid: Grid,
             dt: Optional[float] = None, increments: Optional[list] = None, step: Optional[int] = None):
    """Advance from t_n to t_n + gamma*dt with the trapezoidal rule.

    Returns ``(c, phi)`` at the last inner iterate.  If ``increments`` is a
    list, the max-norm change of c at every iterate is appended to it.
    """
    dt = cfg.dt if dt is None else dt
    gdt = cfg.gamma * dt
    phi = state.phi
    c_prev = state.c
    for k in range(cfg.inner_iterations + 1):
        c = np.empty_like(state.c)
        for i in range(state.n_species):
            sys_i = assemble_tr_system(i, state.c[i], phi, cfg.scheme, gdt, params, grid, phi_old=state.phi)
            c[i] = solve_banded(sys_i)
        _check_finite(c, "concentration", state.t + gdt, step, k)
        phi = solve_poisson(c, params, grid)
        _check_finite(phi, "potential", state.t + gdt, step, k)
        if increments is not None:
            increments.append(float(np.max(np.abs(c - c_prev))))
        c_prev = c
    return c, phi


def bdf2_stage(state: FieldState, tr_result, cfg: StepperConfig, params: DimensionlessParameters,
               grid: Grid, dt: Optional[float] = None, increments: Optional[list] = None,
               step: Optional[int] = None):
    """Advance from t_n + gamma*dt to t_n + dt with BDF2; returns ``(c, phi)``."""
    dt = cfg.dt if dt is None else dt
    c_gamma, phi = tr_result
    c_prev = c_gamma
    for k in range(cfg.inner_iterations + 1):
        c = np.empty_like(state.c)
        for i in range(state.n_species):
            sys_i = assemble_bdf2_system(i, state.c[i], c_gamma[i], phi, cfg.scheme, dt, cfg.gamma, params, grid)
            c[i] = solve_banded(sys_i)
        _check_finite(c, "concentration", state.t + dt, step, k)
        phi = solve_poisson(c, params, grid)
        _check_finite(phi, "potential", state.t + dt, step, k)
        if increments is not None:
            increments.append(float(np.max(np.abs(c - c_prev))))
        c_prev = c
    return c, phi


def advance(state: FieldState, cfg: StepperConfig, params: DimensionlessParameters, grid: Grid,
            dt: Optional[float] = None, step: Optional[int] = None) -> FieldState:
    """One full TR-BDF2 step of size ``dt`` (default ``cfg.dt``)."""
    dt = cfg.dt if dt is None else dt
    if not dt > 0:
        raise ParameterError(f"step size must be positive, got {dt}")
    tr = tr_stage(state, cfg, params, grid, dt=dt, step=step)
    c, phi = bdf2_stage(state, tr, cfg, params, grid, dt=dt, step=step)
    return FieldState(state.t + dt, c, phi)


@dataclass
class RunResult:
    record: "DiagnosticsRecord"
    snapshots: dict
    final: FieldState
    steps: int
    negative_events: list = field(default_factory=list)
    under_resolved: bool = False


UNDER_RESOLVED_DX = 0.05


def run(initial: FieldState, cfg: StepperConfig, params: DimensionlessParameters, grid: Grid,
        observers: Sequence[Callable] = (), sample_every: int = 1,
        snapshot_times: Iterable[float] = (), diagnostics: bool = True,
        stop_when: Optional[Callable[[FieldState], bool]] = None) -> RunResult:
    """March ``initial`` to ``cfg.t_end``.

    Steps are shortened to land exactly on every snapshot time and on
    ``t_end``.  Diagnostics are sampled at t0, every ``sample_every`` steps
    and at the final time; each observer is called as ``obs(state, step)`` at
    the same cadence.  ``stop_when`` may end the run early (checked at
    sample times).
    """
    from .diagnostics import DiagnosticsRecord, sample

    if cfg.t_end < initial.t:
        raise ParameterError(f"t_end={cfg.t_end} precedes the initial time {initial.t}")
    # absorbs round-off in the accumulated time
    tol = 1e-6 * cfg.dt
    wanted = [float(t) for t in snapshot_times]
    targets = sorted({t for t in wanted if initial.t - tol <= t <= cfg.t_end + tol} | {float(cfg.t_end)})

    meta = {"dt": cfg.dt, "gamma": cfg.gamma, "inner_iterations": cfg.inner_iterations,
            "scheme": cfg.scheme.value, "J": grid.J, "t_end": cfg.t_end}
    record = DiagnosticsRecord(meta=meta)
    snapshots = {}
    negatives = []
    under_resolved = grid.dx > UNDER_RESOLVED_DX
    if under_resolved:
        logger.warning("dx = %.3g exceeds %.3g; boundary layers are under-resolved", grid.dx, UNDER_RESOLVED_DX)

    state = initial.copy()

    def observe(s, n):
        if diagnostics:
            record.append(sample(s, params, grid))
        for obs in observers:
            obs(s, n)

    def capture(s):
        for t in wanted:
            if abs(s.t - t) <= tol and t not in snapshots:
                snapshots[t] = s.copy()

    capture(state)
    observe(state, 0)
    last_sampled = 0
    n = 0
    ti = 0
    while ti < len(targets):
        target = targets[ti]
        if target - state.t <= tol:
            state.t = target
            capture(state)
            ti += 1
            continue
        h = min(cfg.dt, target - state.t)
        if target - (state.t + h) <= tol:
            h = target - state.t
        try:
            new = advance(state, cfg, params, grid, dt=h, step=n + 1)
        except NonFiniteStateError as exc:
            raise NonFiniteStateError(f"{exc}; last good time t={state.t:.6g}",
                                      t=state.t, step=exc.step, iteration=exc.iteration) from exc
        n += 1
        if abs(new.t - target) <= tol:
            new.t = target
        state = new
        count, most_negative = state.negative_report()
        if count:
            if not negatives:
                logger.warning("negative concentration at t=%.6g (%d nodes, min %.3e)",
                               state.t, count, most_negative)
            negatives.append((n, state.t, count, most_negative))
        capture(state)
        if n % sample_every == 0:
            observe(state, n)
            last_sampled = n
            if stop_when is not None and stop_when(state):
                break
    if last_sampled != n:
        observe(state, n)
    return RunResult(record, snapshots, state, n, negatives, under_resolved)


def simulate(params: DimensionlessParameters, grid: Grid, cfg: StepperConfig, **kwargs) -> RunResult:
    """Run from the uniform initial state; keyword arguments go to :func:`run`."""
    from .grid import uniform_initial_state

    return run(uniform_initial_state(grid, params), cfg, params, grid, **kwargs)
