"""Run configuration parsing and text outputs.

Configuration files are flat ``key = value`` lines; ``#`` starts a comment.
Species are given through indexed keys (``z.1``, ``D.1``, ``cInit.1``,
``cRef.1``, ...).  A physical block uses the same layout under the ``phys.``
prefix and is converted with :func:`pnpfd.params.nondimensionalize`; a file
may contain one block or the other, not both.

All numeric output is written with 17 significant digits so that every
float64 survives a text round trip unchanged.
"""
from __future__ import annotations

import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import __version__
from .errors import ConfigError, ParameterError
from .grid import FieldState, Grid
from .params import DimensionlessParameters, PhysicalParameters, Species, nondimensionalize
from .spatial import BoundaryScheme
from .stepper import GAMMA_DEFAULT, StepperConfig

MODES = ("simulate", "temporal-order", "spatial-order", "compare", "pb-validate", "sweep")

_FLOAT_KEYS = {"chi1", "chi2", "etaPrime", "epsPrime", "phiMinus", "phiPlus", "rho0Prime",
               "dt", "gamma", "tEnd", "probeX", "probeT"}
_INT_KEYS = {"J", "innerIterations", "sampleEvery", "workers"}
_LIST_KEYS = {"snapshotTimes", "sweepValues", "temporalBaseDts", "spatialJs"}
_STR_KEYS = {"mode", "scheme", "out", "sweepParameter"}
_SPECIES_KEYS = {"z", "D", "cInit", "cRef"}
_PHYS_FLOAT_KEYS = {"T", "L", "c0", "D0", "phi0", "eta", "phiMinus", "phiPlus", "epst", "epsr", "eps0", "rho0"}
_PHYS_SPECIES_KEYS = {"z", "D", "cInit"}

_KEY_RE = re.compile(r"^[A-Za-z][A-Za-z0-9]*(\.[A-Za-z0-9]+)*$")


def format_float(value: float) -> str:
    return format(float(value), ".17g")


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration.

    ``resolved`` maps every key (defaults included) to its canonical text and
    is echoed into the header of each output file.
    """

    mode: str
    params: DimensionlessParameters
    J: int
    dt: float
    gamma: float
    inner_iterations: int
    scheme: BoundaryScheme
    t_end: float
    snapshot_times: Tuple[float, ...]
    sample_every: int
    out: str
    sweep_parameter: str = "chi2"
    sweep_values: Tuple[float, ...] = ()
    temporal_base_dts: Tuple[float, ...] = ()
    spatial_js: Tuple[int, ...] = ()
    probe: Tuple[float, float] = (0.904, 0.02)
    workers: int = 1
    resolved: Dict[str, str] = field(default_factory=dict, compare=False)

    def stepper(self, **changes) -> StepperConfig:
        base = dict(dt=self.dt, t_end=self.t_end, gamma=self.gamma,
                    inner_iterations=self.inner_iterations, scheme=self.scheme)
        base.update(changes)
        return StepperConfig(**base)

    def header_lines(self) -> List[str]:
        lines = [f"pnpfd version = {__version__}"]
        lines += [f"{k} = {v}" for k, v in sorted(self.resolved.items())]
        return lines


def _tokenize(source: str) -> Dict[str, Tuple[str, int]]:
    entries: Dict[str, Tuple[str, int]] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not _KEY_RE.match(key):
            raise ConfigError(f"malformed key {key!r}", line=lineno)
        if not value:
            raise ConfigError(f"key {key!r} has no value", line=lineno)
        if key in entries:
            raise ConfigError(f"duplicate key {key!r} (first set on line {entries[key][1]})", line=lineno)
        entries[key] = (value, lineno)
    return entries


def _classify(key: str):
    """Return (block, name, species index or None), or None if unknown."""
    parts = key.split(".")
    block = "dim"
    if parts[0] == "phys":
        block = "phys"
        parts = parts[1:]
        if not parts:
            return None
    if len(parts) == 1:
        name = parts[0]
        if block == "phys":
            return (block, name, None) if name in _PHYS_FLOAT_KEYS else None
        if name in _FLOAT_KEYS | _INT_KEYS | _LIST_KEYS | _STR_KEYS:
            return block, name, None
        return None
    if len(parts) == 2 and parts[1].isdigit() and int(parts[1]) >= 1:
        allowed = _PHYS_SPECIES_KEYS if block == "phys" else _SPECIES_KEYS
        if parts[0] in allowed:
            return block, parts[0], int(parts[1])
    return None


def _to_float(key, text, line):
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}", line=line) from None
    if not math.isfinite(value):
        raise ConfigError(f"{key}: value must be finite", line=line)
    return value


def _to_int(key, text, line):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}", line=line) from None


def _to_list(key, text, line):
    items = [s.strip() for s in text.split(",") if s.strip()]
    return tuple(_to_float(key, s, line) for s in items)


def _species_table(entries, names, prefix=""):
    table: Dict[str, Dict[int, float]] = {n: {} for n in names}
    for key, entry in entries.items():
        table[key[0]][key[1]] = entry
    indices = set()
    for values in table.values():
        indices |= set(values)
    n = max(indices) if indices else 0
    if sorted(indices) != list(range(1, n + 1)):
        raise ConfigError("species indices must run 1..N without gaps", key=f"{prefix}z")
    missing = [i for i in range(1, n + 1) if i not in table["z"]]
    if n == 0 or missing:
        raise ConfigError(f"valence missing for species {missing or [1]}", key=f"{prefix}z.{(missing or [1])[0]}")
    return n, table


def parse_config(source: str, overrides: Optional[dict] = None, env: Optional[dict] = None) -> RunConfig:
    """Parse and validate a configuration text.

    ``overrides`` maps config keys to replacement values (from command-line
    flags); they win over the file, which wins over defaults.  ``env``
    defaults to ``os.environ`` and supplies ``PNP_OUT``.
    """
    env = os.environ if env is None else env
    entries = _tokenize(source)
    for key, value in (overrides or {}).items():
        if value is not None:
            entries[key] = (str(value), None)

    scalars: Dict[str, object] = {}
    species: Dict[Tuple[str, int], Tuple[float, Optional[int]]] = {}
    phys: Dict[str, float] = {}
    phys_species: Dict[Tuple[str, int], Tuple[float, Optional[int]]] = {}
    for key, (text, line) in entries.items():
        kind = _classify(key)
        if kind is None:
            raise ConfigError(f"unknown key {key!r}", line=line, key=None if line else key)
        block, name, idx = kind
        if block == "phys":
            value = _to_float(key, text, line)
            if idx is None:
                phys[name] = value
            else:
                phys_species[(name, idx)] = (value, line)
        elif idx is not None:
            species[(name, idx)] = (_to_float(key, text, line), line)
        elif name in _FLOAT_KEYS:
            scalars[name] = _to_float(key, text, line)
        elif name in _INT_KEYS:
            scalars[name] = _to_int(key, text, line)
        elif name in _LIST_KEYS:
            scalars[name] = _to_list(key, text, line)
        else:
            scalars[name] = text.strip().strip('"').strip("'")

    dim_keys = {"chi1", "chi2", "etaPrime", "epsPrime", "phiMinus", "phiPlus", "rho0Prime"} & set(scalars)
    if (phys or phys_species) and (dim_keys or species):
        raise ConfigError("give either a physical (phys.*) or a dimensionless parameter block, not both",
                          key=sorted(dim_keys)[0] if dim_keys else "z")

    resolved: Dict[str, str] = {}
    if phys or phys_species:
        params = _physical_block(phys, phys_species, resolved)
    else:
        params = _dimensionless_block(scalars, species, resolved)

    mode = str(scalars.get("mode", "simulate"))
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}", key="mode")
    try:
        scheme = BoundaryScheme.parse(scalars.get("scheme", "conservative"))
    except ParameterError as exc:
        raise ConfigError(str(exc), key="scheme") from None

    J = int(scalars.get("J", 1000))
    dt = float(scalars.get("dt", 1e-4))
    gamma = float(scalars.get("gamma", GAMMA_DEFAULT))
    inner = int(scalars.get("innerIterations", 2))
    t_end = float(scalars.get("tEnd", 1.0))
    sample_every = int(scalars.get("sampleEvery", 10))
    workers = int(scalars.get("workers", 1))
    snaps = tuple(sorted(scalars.get("snapshotTimes", ())))
    checks = [
        ("J", J >= 4, "must be an integer >= 4"),
        ("dt", dt > 0, "must be positive"),
        ("gamma", 0 < gamma < 1, "must lie in (0, 1)"),
        ("innerIterations", inner >= 0, "must be non-negative"),
        ("tEnd", t_end > 0, "must be positive"),
        ("sampleEvery", sample_every >= 1, "must be at least 1"),
        ("workers", workers >= 1, "must be at least 1"),
        ("snapshotTimes", all(0 <= s <= t_end for s in snaps), "must lie in [0, tEnd]"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(msg, key=key)

    sweep_parameter = str(scalars.get("sweepParameter", "chi2"))
    if sweep_parameter not in ("chi2", "eta"):
        raise ConfigError("must be 'chi2' or 'eta'", key="sweepParameter")
    sweep_values = tuple(scalars.get("sweepValues", ()))
    if mode == "sweep" and any(v <= 0 for v in sweep_values):
        raise ConfigError("sweep values must be positive", key="sweepValues")
    base_dts = tuple(scalars.get("temporalBaseDts", ()))
    if any(v <= 0 for v in base_dts):
        raise ConfigError("must be positive", key="temporalBaseDts")
    spatial_js = tuple(int(v) for v in scalars.get("spatialJs", ()))
    if spatial_js and (len(spatial_js) != 3 or any(v != int(v) for v in scalars["spatialJs"])):
        raise ConfigError("expects three integers J, J/2, J/4", key="spatialJs")
    probe = (float(scalars.get("probeX", 0.904)), float(scalars.get("probeT", 0.02)))

    out = str(scalars.get("out", env.get("PNP_OUT", "pnp_out")))

    resolved.update({
        "mode": mode, "scheme": scheme.value, "J": str(J), "dt": format_float(dt),
        "gamma": format_float(gamma), "innerIterations": str(inner), "tEnd": format_float(t_end),
        "sampleEvery": str(sample_every), "workers": str(workers),
        "snapshotTimes": ",".join(format_float(s) for s in snaps),
        "sweepParameter": sweep_parameter,
        "sweepValues": ",".join(format_float(v) for v in sweep_values),
        "temporalBaseDts": ",".join(format_float(v) for v in base_dts),
        "spatialJs": ",".join(str(v) for v in spatial_js),
        "probeX": format_float(probe[0]), "probeT": format_float(probe[1]),
    })
    return RunConfig(mode=mode, params=params, J=J, dt=dt, gamma=gamma, inner_iterations=inner,
                     scheme=scheme, t_end=t_end, snapshot_times=snaps, sample_every=sample_every,
                     out=out, sweep_parameter=sweep_parameter, sweep_values=sweep_values,
                     temporal_base_dts=base_dts, spatial_js=spatial_js, probe=probe,
                     workers=workers, resolved=resolved)


def _dimensionless_block(scalars, species, resolved) -> DimensionlessParameters:
    for key in ("chi1", "chi2", "etaPrime"):
        if key not in scalars:
            raise ConfigError("required key is missing", key=key)
    n, table = _species_table(species, _SPECIES_KEYS)
    z = [table["z"][i][0] for i in range(1, n + 1)]
    D = [table["D"].get(i, (1.0, None))[0] for i in range(1, n + 1)]
    c_init = [table["cInit"].get(i, (1.0, None))[0] for i in range(1, n + 1)]
    c_ref = [table["cRef"].get(i, (1.0, None))[0] for i in range(1, n + 1)]
    values = dict(chi1=scalars["chi1"], chi2=scalars["chi2"], eta=scalars["etaPrime"],
                  eps=scalars.get("epsPrime", 1.0), phi_minus=scalars.get("phiMinus", 0.0),
                  phi_plus=scalars.get("phiPlus", 0.0), rho0=scalars.get("rho0Prime", 0.0))
    params = _build(values, z, D, c_init, c_ref)
    names = {"chi1": "chi1", "chi2": "chi2", "eta": "etaPrime", "eps": "epsPrime",
             "phi_minus": "phiMinus", "phi_plus": "phiPlus", "rho0": "rho0Prime"}
    for attr, key in names.items():
        resolved[key] = format_float(values[attr])
    for i in range(n):
        resolved[f"z.{i + 1}"] = format_float(z[i])
        resolved[f"D.{i + 1}"] = format_float(D[i])
        resolved[f"cInit.{i + 1}"] = format_float(c_init[i])
        resolved[f"cRef.{i + 1}"] = format_float(c_ref[i])
    return params


_KEY_FOR_FIELD = {"chi1": "chi1", "chi2": "chi2", "eta": "etaPrime", "eps": "epsPrime",
                  "D": "D.1", "c_ref": "cRef.1", "c_init": "cInit.1"}


def _build(values, z, D, c_init, c_ref) -> DimensionlessParameters:
    try:
        return DimensionlessParameters(z=tuple(z), D=tuple(D), c_init=tuple(c_init), c_ref=tuple(c_ref), **values)
    except ParameterError as exc:
        msg = str(exc)
        key = next((k for f, k in _KEY_FOR_FIELD.items() if msg.startswith(f) or f" {f} " in msg), None)
        if key is None and "diffusion" in msg:
            key = "D"
        elif key is None and "reference" in msg:
            key = "cRef"
        elif key is None and "initial" in msg:
            key = "cInit"
        elif key is None and "permittivity" in msg:
            key = "epsPrime"
        raise ConfigError(msg, key=key or "parameters") from None


def _physical_block(phys, phys_species, resolved) -> DimensionlessParameters:
    for key in ("T", "L", "c0", "D0", "phi0", "eta", "phiMinus", "phiPlus"):
        if key not in phys:
            raise ConfigError("required key is missing", key=f"phys.{key}")
    n, table = _species_table(phys_species, _PHYS_SPECIES_KEYS, prefix="phys.")
    for i in range(1, n + 1):
        for name in ("D", "cInit"):
            if i not in table[name]:
                raise ConfigError("required key is missing", key=f"phys.{name}.{i}")
    sp = [Species(table["z"][i][0], table["D"][i][0], table["cInit"][i][0]) for i in range(1, n + 1)]
    extra = {k: phys[k] for k in ("epst", "epsr", "eps0", "rho0") if k in phys}
    p = PhysicalParameters(T=phys["T"], L=phys["L"], c0=phys["c0"], D0=phys["D0"], phi0=phys["phi0"],
                           eta=phys["eta"], phi_minus=phys["phiMinus"], phi_plus=phys["phiPlus"],
                           species=tuple(sp), **extra)
    try:
        params = nondimensionalize(p)
    except ParameterError as exc:
        raise ConfigError(str(exc), key="phys") from None
    for k, v in sorted(phys.items()):
        resolved[f"phys.{k}"] = format_float(v)
    for i, s in enumerate(sp, start=1):
        resolved[f"phys.z.{i}"] = format_float(s.z)
        resolved[f"phys.D.{i}"] = format_float(s.D)
        resolved[f"phys.cInit.{i}"] = format_float(s.c_init)
    return params


def read_config(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None


# ---------------------------------------------------------------- output files


def _atomic_write(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write {path}: {exc.strerror}") from exc


def write_text(path, text: str):
    """Write ``text`` atomically (temp file in the same directory, then rename)."""
    _atomic_write(path, text)


def _table_text(header: List[str], rows, comments=()) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    return "\n".join(lines) + "\n"


def write_table(path, header, rows, comments=()):
    _atomic_write(path, _table_text(list(header), rows, comments))


def write_snapshot(state: FieldState, path, grid: Optional[Grid] = None, comments=()):
    """CSV of ``x, c_1..c_N, phi`` with one row per node."""
    n_nodes = state.phi.shape[0]
    grid = grid or Grid(n_nodes - 1)
    if grid.n != n_nodes:
        raise ParameterError(f"state has {n_nodes} nodes but the grid has {grid.n}")
    header = ["x"] + [f"c_{i + 1}" for i in range(state.n_species)] + ["phi"]
    cols = np.vstack([grid.nodes, state.c, state.phi[None, :]]).T
    comments = list(comments) + [f"t = {format_float(state.t)}"]
    write_table(path, header, cols, comments)


def read_table(path):
    """Return ``(header, data, comments)`` from a file written by this module."""
    comments, header, rows = [], None, []
    with open(path, encoding="utf-8", newline="") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                comments.append(line[1:].strip())
            elif header is None:
                header = line.split(",")
            elif line:
                rows.append([float(v) for v in line.split(",")])
    data = np.array(rows, dtype=float).reshape(len(rows), len(header or []))
    return header, data, comments


def read_snapshot(path) -> FieldState:
    header, data, comments = read_table(path)
    if not header or header[0] != "x" or header[-1] != "phi":
        raise ParameterError(f"{path}: not a snapshot file")
    t = 0.0
    for c in comments:
        if c.startswith("t = "):
            t = float(c[4:])
    return FieldState(t, data[:, 1:-1].T.copy(), data[:, -1].copy())


def write_timeseries(record, path, comments=()):
    """CSV of the diagnostics record, one row per sample."""
    if len(record) == 0:
        raise ParameterError("cannot write an empty diagnostics record")
    n_sp = len(record.samples[0].c_tot)
    header = ["t"] + [f"ctot_{i + 1}" for i in range(n_sp)] + ["energy", "dissipation_rhs", "max_dcdt", "min_c"]
    rows = [[s.t, *s.c_tot, s.energy, s.dissipation_rhs, s.max_dcdt, s.min_c] for s in record.samples]
    write_table(path, header, rows, comments)
