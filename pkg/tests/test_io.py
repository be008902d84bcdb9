import math
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnpfd import __version__
from pnpfd.diagnostics import DiagnosticsRecord, DiagnosticsSample
from pnpfd.errors import ConfigError, ParameterError
from pnpfd.grid import FieldState, Grid, uniform_initial_state
from pnpfd.harness import boundary_layer_width
from pnpfd.io import (
    format_float,
    parse_config,
    read_config,
    read_snapshot,
    read_table,
    write_snapshot,
    write_timeseries,
)
from pnpfd.params import channel_defaults
from pnpfd.spatial import BoundaryScheme

BASELINE = """\
# channel baseline
chi1 = 3.1
chi2 = 125.4
etaPrime = 4.63e-5
epsPrime = 1
phiMinus = 1
phiPlus = -1
z.1 = 1
z.2 = -1
J = 1000
dt = 1e-4
tEnd = 1
"""

PHYSICAL = """\
phys.T = 298
phys.L = 60
phys.c0 = 1.2044e-3
phys.D0 = 1e9
phys.phi0 = 0.08
phys.eta = 2.78e-3
phys.phiMinus = 0.08
phys.phiPlus = -0.08
phys.z.1 = 1
phys.D.1 = 1e9
phys.cInit.1 = 1.2044e-3
phys.z.2 = -1
phys.D.2 = 1e9
phys.cInit.2 = 1.2044e-3
"""


def test_baseline_accepted():
    cfg = parse_config(BASELINE, env={})
    p = cfg.params
    assert (p.chi1, p.chi2, p.eta, p.eps, p.phi_minus, p.phi_plus) == (3.1, 125.4, 4.63e-5, 1.0, 1.0, -1.0)
    assert p.z == (1.0, -1.0) and p.D == (1.0, 1.0) and p.c_ref == (1.0, 1.0)
    assert (cfg.J, cfg.dt, cfg.t_end) == (1000, 1e-4, 1.0)
    assert cfg.gamma == 2 - math.sqrt(2)
    assert cfg.inner_iterations == 2
    assert cfg.scheme is BoundaryScheme.CONSERVATIVE
    assert cfg.mode == "simulate"
    assert cfg.params == channel_defaults()


def test_missing_chi2_names_key():
    src = BASELINE.replace("chi2 = 125.4\n", "")
    with pytest.raises(ConfigError) as info:
        parse_config(src, env={})
    assert info.value.key == "chi2"
    assert "chi2" in str(info.value)


@pytest.mark.parametrize("scheme", ["conservative", "standard"])
def test_both_schemes_parse(scheme):
    assert parse_config(BASELINE + f"scheme = {scheme}\n", env={}).scheme.value == scheme


def test_other_scheme_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "scheme = upwind\n", env={})
    assert info.value.key == "scheme"


def test_unknown_key_is_line_numbered():
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "chi3 = 1\n", env={})
    assert info.value.line == 13
    assert str(info.value).startswith("line 13:")


@pytest.mark.parametrize("line", ["just text", "= 3", "chi1 =", "9abc = 1", "z.0 = 1", "z.x = 1"])
def test_malformed_lines(line):
    with pytest.raises(ConfigError):
        parse_config(BASELINE + line + "\n", env={})


def test_bad_values_name_key():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config(BASELINE.replace("chi1 = 3.1", "chi1 = three"), env={})
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE.replace("chi1 = 3.1", "chi1 = -3.1"), env={})
    assert info.value.key == "chi1"
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "dt = 0\n".replace("dt", "gamma"), env={})
    assert info.value.key == "gamma"


def test_duplicate_key_rejected():
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config(BASELINE + "J = 10\n", env={})


def test_species_indices_must_be_contiguous():
    with pytest.raises(ConfigError):
        parse_config(BASELINE + "z.4 = 1\n", env={})
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "D.3 = 1\n", env={})
    assert info.value.key == "z.3"


def test_species_optional_keys():
    cfg = parse_config(BASELINE + "D.2 = 0.5\ncInit.1 = 2\ncRef.2 = 3\n", env={})
    assert cfg.params.D == (1.0, 0.5)
    assert cfg.params.c_init == (2.0, 1.0)
    assert cfg.params.c_ref == (1.0, 3.0)


def test_overrides_win_over_file_and_defaults():
    cfg = parse_config(BASELINE, overrides={"dt": 5e-5, "J": 200, "scheme": "standard", "innerIterations": 0,
                                            "tEnd": 0.5, "mode": "compare", "out": "x"}, env={})
    assert (cfg.dt, cfg.J, cfg.scheme.value, cfg.inner_iterations, cfg.t_end, cfg.mode, cfg.out) == \
        (5e-5, 200, "standard", 0, 0.5, "compare", "x")
    assert parse_config(BASELINE, overrides={"dt": None}, env={}).dt == 1e-4


def test_output_directory_from_environment():
    assert parse_config(BASELINE, env={"PNP_OUT": "/tmp/a"}).out == "/tmp/a"
    assert parse_config(BASELINE + "out = b\n", env={"PNP_OUT": "/tmp/a"}).out == "b"
    assert parse_config(BASELINE, env={}).out == "pnp_out"


def test_mode_validated():
    assert parse_config(BASELINE + "mode = pb-validate\n", env={}).mode == "pb-validate"
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "mode = plot\n", env={})
    assert info.value.key == "mode"


def test_lists_and_numerics():
    cfg = parse_config(BASELINE + "snapshotTimes = 1, 0, 0.05,0.01\nsampleEvery = 5\n"
                       "sweepParameter = eta\nsweepValues = 1e-6,1e-3\n", env={})
    assert cfg.snapshot_times == (0.0, 0.01, 0.05, 1.0)
    assert cfg.sample_every == 5
    assert cfg.sweep_parameter == "eta" and cfg.sweep_values == (1e-6, 1e-3)
    with pytest.raises(ConfigError) as info:
        parse_config(BASELINE + "snapshotTimes = 2\n", env={})
    assert info.value.key == "snapshotTimes"


def test_physical_block():
    cfg = parse_config(PHYSICAL, env={})
    assert cfg.params.chi1 == pytest.approx(3.1155, abs=1e-3)
    assert cfg.params.eta == pytest.approx(4.633e-5, rel=1e-3)
    assert cfg.resolved["phys.T"] == "298"


def test_physical_and_dimensionless_blocks_exclusive():
    with pytest.raises(ConfigError, match="not both"):
        parse_config(PHYSICAL + "chi1 = 3\n", env={})


def test_physical_block_requires_species_data():
    with pytest.raises(ConfigError) as info:
        parse_config(PHYSICAL.replace("phys.D.2 = 1e9\n", ""), env={})
    assert info.value.key == "phys.D.2"


def test_header_echoes_resolved_config():
    cfg = parse_config(BASELINE, env={})
    lines = cfg.header_lines()
    assert lines[0] == f"pnpfd version = {__version__}"
    assert "chi2 = 125.40000000000001" in lines
    assert "gamma = 0.58578643762690485" in lines
    assert "cRef.2 = 1" in lines


def test_read_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config(tmp_path / "nope.cfg")


# ---------------------------------------------------------------- files

def test_snapshot_small_grid(tmp_path):
    g = Grid(4)
    s = uniform_initial_state(g, channel_defaults())
    path = tmp_path / "snap.csv"
    write_snapshot(s, path, g, comments=["hello"])
    raw = path.read_bytes()
    assert b"\r" not in raw
    header, data, comments = read_table(path)
    assert header == ["x", "c_1", "c_2", "phi"]
    assert data.shape == (5, 4)
    assert comments[0] == "hello"
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp")]


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_snapshot_round_trip_bit_exact(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    g = Grid(int(rng.integers(4, 30)))
    s = FieldState(float(rng.uniform(0, 5)), rng.lognormal(0, 3, (3, g.n)), rng.normal(0, 1e3, g.n))
    path = tmp_path_factory.mktemp("rt") / "s.csv"
    write_snapshot(s, path, g)
    back = read_snapshot(path)
    assert back.t == s.t
    np.testing.assert_array_equal(back.c, s.c)
    np.testing.assert_array_equal(back.phi, s.phi)


@settings(max_examples=300)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_float_round_trips(v):
    assert float(format_float(v)) == v


def test_snapshot_grid_mismatch(tmp_path):
    s = uniform_initial_state(Grid(4), channel_defaults())
    with pytest.raises(ParameterError):
        write_snapshot(s, tmp_path / "s.csv", Grid(8))


def test_write_error_names_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    s = uniform_initial_state(Grid(4), channel_defaults())
    with pytest.raises(OSError, match="file"):
        write_snapshot(s, blocker / "sub" / "s.csv")


def test_timeseries_single_sample(tmp_path):
    rec = DiagnosticsRecord()
    rec.append(DiagnosticsSample(0.0, (2.0, 2.0), float("nan"), -0.5, 1.0, 0.9))
    path = tmp_path / "ts.csv"
    write_timeseries(rec, path)
    header, data, _ = read_table(path)
    assert header == ["t", "ctot_1", "ctot_2", "energy", "dissipation_rhs", "max_dcdt", "min_c"]
    assert data.shape == (1, 7)
    assert math.isnan(data[0, 3])


def test_empty_timeseries_rejected(tmp_path):
    with pytest.raises(ParameterError):
        write_timeseries(DiagnosticsRecord(), tmp_path / "ts.csv")


def test_outputs_deterministic(tmp_path):
    g = Grid(8)
    s = uniform_initial_state(g, channel_defaults())
    write_snapshot(s, tmp_path / "a.csv", g)
    write_snapshot(s, tmp_path / "b.csv", g)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@pytest.mark.slow
def test_channel_timeseries_files(channel_runs, tmp_path):
    for scheme in ("conservative", "standard"):
        write_timeseries(channel_runs[scheme].record, tmp_path / f"{scheme}.csv")
    _, cons, _ = read_table(tmp_path / "conservative.csv")
    _, std, _ = read_table(tmp_path / "standard.csv")
    ctot = cons[:, 1:3]
    assert np.max(np.abs(ctot / ctot[0] - 1)) <= 1e-10
    assert std[-1, 2] < 0.6 * std[0, 2]


@pytest.mark.slow
def test_channel_final_snapshot_accumulates_anions_at_left(channel_runs, channel_grid, tmp_path):
    final = channel_runs.conservative.snapshots[1.0]
    write_snapshot(final, tmp_path / "final.csv", channel_grid)
    back = read_snapshot(tmp_path / "final.csv")
    c2 = back.c[1]
    # decreasing away from x = -1 across the boundary layer
    width = boundary_layer_width(back.phi, channel_grid)
    layer = c2[: channel_grid.index_of(round(-1.0 + width, 9)) + 1]
    assert layer.size > 10
    assert np.all(np.diff(layer) < 0)
    assert c2[0] > 5 * c2[channel_grid.index_of(0.0)]
