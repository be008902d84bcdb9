"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 threshold failure under ``--check``, 1 I/O error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__, harness
from .errors import (ConfigError, ConvergenceError, InconclusiveOrderError, NonFiniteStateError,
                     ParameterError, SingularSystemError)
from .grid import Grid
from .io import (RunConfig, format_float, parse_config, read_config, write_snapshot, write_table,
                 write_text, write_timeseries)
from .stepper import simulate

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_THRESHOLD = 0, 1, 2, 3, 4

_FLAG_KEYS = {"mode": "mode", "dt": "dt", "scheme": "scheme", "inner_iterations": "innerIterations",
              "j": "J", "t_end": "tEnd", "out": "out"}

logger = logging.getLogger("pnpfd")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnpfd", description="1D Poisson-Nernst-Planck finite-difference solver")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--mode", help="simulate, temporal-order, spatial-order, compare, pb-validate or sweep")
    p.add_argument("--dt", type=float)
    p.add_argument("--scheme", help="conservative or standard")
    p.add_argument("--inner-iterations", type=int)
    p.add_argument("--j", type=int, help="number of grid subintervals")
    p.add_argument("--t-end", type=float)
    p.add_argument("--out", help="output directory (default: $PNP_OUT or ./pnp_out)")
    p.add_argument("--check", action="store_true", help="exit with status 4 if the mode's acceptance threshold fails")
    p.add_argument("--version", action="version", version=f"pnpfd {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def load(args) -> RunConfig:
    source = read_config(args.config) if args.config else ""
    overrides = {key: getattr(args, attr) for attr, key in _FLAG_KEYS.items()}
    return parse_config(source, overrides)


def _path(cfg: RunConfig, *parts) -> str:
    return os.path.join(cfg.out, *parts)


def _simulate(cfg: RunConfig, header):
    grid = Grid(cfg.J)
    res = simulate(cfg.params, grid, cfg.stepper(), sample_every=cfg.sample_every,
                   snapshot_times=cfg.snapshot_times)
    _write_run(cfg, res, grid, header, "")
    ratios = res.record.c_tot / res.record.c_tot[0]
    drift = float(np.max(np.abs(ratios - 1.0)))
    summary = {"steps": res.steps, "t_final": res.final.t, "max_mass_drift": drift,
               "negative_events": len(res.negative_events), "under_resolved": res.under_resolved}
    ok = drift <= 1e-10 if cfg.scheme.value == "conservative" else True
    return summary, ok


def _write_run(cfg, res, grid, header, sub):
    for t, state in sorted(res.snapshots.items()):
        write_snapshot(state, _path(cfg, sub, f"snapshot_t{format_float(t)}.csv"), grid, header)
    write_snapshot(res.final, _path(cfg, sub, "final.csv"), grid, header)
    write_timeseries(res.record, _path(cfg, sub, "timeseries.csv"), header)


def _temporal(cfg: RunConfig, header):
    base = cfg.temporal_base_dts or harness.TEMPORAL_BASE_DTS
    rep = harness.temporal_order_study(cfg.params, cfg.J, base, probe=cfg.probe, scheme=cfg.scheme,
                                       workers=cfg.workers)
    for label in ("k=0", "k=2"):
        rows = [[r.spacing, *r.values, r.order] for r in rep.rows if r.label == label]
        write_table(_path(cfg, f"temporal_order_{label.replace('=', '')}.csv"),
                    ["dt", "v_h", "v_2h", "v_4h", "order"], rows, header)
    k0, k2 = rep.orders("k=0"), rep.orders("k=2")
    ok = all(0.85 <= o <= 1.15 for o in k0) and all(1.8 <= o <= 2.5 for o in k2)
    return {"k=0": k0, "k=2": k2}, ok


def _spatial(cfg: RunConfig, header):
    Js = cfg.spatial_js or harness.SPATIAL_JS
    rep = harness.spatial_order_study(cfg.params, Js, cfg.dt, cfg.inner_iterations, cfg.probe,
                                      workers=cfg.workers)
    for r in rep.rows:
        write_table(_path(cfg, f"spatial_order_{r.label}.csv"), ["dx", "v_h", "v_2h", "v_4h", "order"],
                    [[r.spacing, *r.values, r.order]], header)
    orders = {r.label: r.order for r in rep.rows}
    return orders, all(1.8 <= o <= 2.2 for o in orders.values())


def _compare(cfg: RunConfig, header):
    snaps = cfg.snapshot_times or (0.0, 0.01, 0.05, cfg.t_end)
    cmp_ = harness.compare_schemes(cfg.params, cfg.J, cfg.dt, cfg.t_end, cfg.inner_iterations, snaps,
                                   cfg.sample_every, cfg.workers)
    grid = Grid(cfg.J)
    for scheme in ("conservative", "standard"):
        _write_run(cfg, cmp_[scheme], grid, header + [f"scheme = {scheme}"], scheme)
    rec = cmp_.conservative.record
    cons_drift = float(np.max(np.abs(rec.c_tot / rec.c_tot[0] - 1.0)))
    std_ratio = cmp_.mass_ratio("standard").tolist()
    ok = cons_drift <= 1e-10 and all(r < 0.6 for r in std_ratio)
    return {"conservative_max_drift": cons_drift, "standard_mass_ratio": std_ratio}, ok


def _pb(cfg: RunConfig, header):
    eps = cfg.params.eps
    if callable(eps):
        raise ConfigError("pb-validate needs a constant permittivity", key="epsPrime")
    val = harness.pb_validation(float(eps), cfg.J, cfg.dt, cfg.t_end, cfg.inner_iterations,
                                sample_every=cfg.sample_every, params=cfg.params)
    grid = Grid(cfg.J)
    write_table(_path(cfg, "pb_history.csv"), ["t", "max_abs_dphi"], zip(val.times, val.history), header)
    write_table(_path(cfg, "pb_profile.csv"), ["x", "phi_pnp", "phi_pb"],
                zip(grid.nodes, val.pnp_phi, val.pb.phi), header)
    summary = {"max_difference": val.max_difference, "newton_iterations": val.pb.iterations,
               "newton_residual": val.pb.residual}
    return summary, val.max_difference <= 5e-4


def _sweep(cfg: RunConfig, header):
    grid = Grid(cfg.J)
    if cfg.sweep_parameter == "chi2":
        values = cfg.sweep_values or (31.35, 125.4, 501.6)
        rows = harness.chi2_sweep(values, cfg.params, cfg.J, cfg.dt, cfg.t_end, cfg.scheme,
                                  cfg.sample_every, cfg.workers)
        widths = [r.width for r in rows]
        ok = all(b < a for a, b in zip(widths, widths[1:]))
        summary = {"widths": widths}
    else:
        values = cfg.sweep_values or (1e-6, 1e-5, 1e-4, 1e-3)
        rows, spread = harness.eta_sweep(values, cfg.params, cfg.J, cfg.dt, cfg.t_end, cfg.scheme,
                                         cfg.sample_every, cfg.workers)
        ok = spread <= 1e-3
        summary = {"max_relative_difference": spread}
    table = []
    for r in rows:
        table.append([r.value, r.width, float(r.steady), r.result.final.t])
        write_snapshot(r.result.final, _path(cfg, f"sweep_{cfg.sweep_parameter}_{format_float(r.value)}.csv"),
                       grid, header)
    write_table(_path(cfg, f"sweep_{cfg.sweep_parameter}.csv"), ["value", "width", "steady", "t_final"],
                table, header)
    summary["steady"] = [r.steady for r in rows]
    return summary, ok


_MODES = {"simulate": _simulate, "temporal-order": _temporal, "spatial-order": _spatial,
          "compare": _compare, "pb-validate": _pb, "sweep": _sweep}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load(args)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    header = cfg.header_lines()
    try:
        summary, ok = _MODES[cfg.mode](cfg, header)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularSystemError, NonFiniteStateError, ConvergenceError, InconclusiveOrderError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO

    summary = {"mode": cfg.mode, "version": __version__, "passed": ok, **summary}
    text = json.dumps(summary, default=_jsonable, indent=2)
    try:
        write_text(_path(cfg, "summary.json"), text + "\n")
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    print(text)
    if args.check and not ok:
        print(f"threshold check failed for mode {cfg.mode}", file=sys.stderr)
        return EXIT_THRESHOLD
    return EXIT_OK


def _jsonable(value):
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    raise TypeError(type(value).__name__)


if __name__ == "__main__":
    sys.exit(main())
