import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnpfd.diagnostics import total_concentration
from pnpfd.errors import ParameterError, SingularSystemError
from pnpfd.grid import FieldState, Grid, build_grid, node_values, trapezoid, uniform_initial_state
from pnpfd.params import DimensionlessParameters, channel_defaults


def test_small_grid_nodes():
    g = build_grid(4)
    assert g.dx == 0.5
    np.testing.assert_array_equal(g.nodes, [-1.0, -0.5, 0.0, 0.5, 1.0])
    assert g.n == 5


def test_channel_resolution():
    assert Grid(1000).dx == pytest.approx(0.002, rel=1e-15)


def test_validation_resolution():
    g = Grid(2048)
    assert g.dx == 2.0 / 2048
    assert g.nodes[0] == -1.0 and g.nodes[-1] == 1.0


@pytest.mark.parametrize("J", [3, 0, -5, 4.5])
def test_too_few_subintervals_rejected(J):
    with pytest.raises(ParameterError):
        Grid(J)


def test_nodes_are_read_only():
    g = Grid(8)
    with pytest.raises(ValueError):
        g.nodes[0] = 0.0


def test_midpoints_include_ghost_halves():
    g = Grid(4)
    np.testing.assert_allclose(g.midpoints, [-1.25, -0.75, -0.25, 0.25, 0.75, 1.25])


def test_index_of():
    g = Grid(1000)
    assert g.index_of(0.904) == 952
    with pytest.raises(ParameterError):
        Grid(7).index_of(0.904)


def test_initial_potential_is_affine_robin_laplace():
    p = channel_defaults(eta=0.3)
    g = Grid(50)
    s = uniform_initial_state(g, p)
    np.testing.assert_allclose(s.phi, -g.nodes / (1 + p.eta), atol=1e-13)
    assert s.t == 0.0
    np.testing.assert_array_equal(s.c, np.ones((2, g.n)))


def test_zero_data_gives_zero_potential():
    p = channel_defaults(phi_minus=0.0, phi_plus=0.0)
    s = uniform_initial_state(Grid(16), p)
    np.testing.assert_allclose(s.phi, 0.0, atol=1e-14)


def test_uniform_unit_concentration_totals_two():
    g = Grid(37)
    s = uniform_initial_state(g, channel_defaults())
    for i in range(2):
        assert total_concentration(s, i, g) == pytest.approx(2.0, rel=1e-14)


def test_poisson_failure_propagates():
    def broken(c, params, grid):
        raise SingularSystemError(3)

    with pytest.raises(SingularSystemError) as info:
        uniform_initial_state(Grid(8), channel_defaults(), poisson_solve=broken)
    assert info.value.row == 3


def test_trapezoid_constant_and_odd():
    g = Grid(12)
    assert trapezoid(np.ones(g.n), g) == pytest.approx(2.0, rel=1e-15)
    assert trapezoid(g.nodes, g) == pytest.approx(0.0, abs=1e-15)


def test_trapezoid_quadratic_second_order():
    # composite trapezoid error for x^2 on [-1, 1] is exactly dx^2/3
    g = Grid(1000)
    val = trapezoid(g.nodes**2, g)
    assert abs(val - 2.0 / 3.0) == pytest.approx(g.dx**2 / 3.0, rel=1e-6)


def test_trapezoid_rejects_length_mismatch():
    with pytest.raises(ParameterError):
        trapezoid(np.ones(5), Grid(8))


def test_trapezoid_batches_over_leading_axes():
    g = Grid(8)
    v = np.vstack([np.ones(g.n), g.nodes**2])
    np.testing.assert_allclose(trapezoid(v, g), [trapezoid(v[0], g), trapezoid(v[1], g)])


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 64), st.floats(-3, 3), st.floats(-3, 3))
def test_trapezoid_exact_for_affine(J, a, b):
    g = Grid(J)
    assert trapezoid(a + b * g.nodes, g) == pytest.approx(2 * a, abs=1e-12)


def test_field_state_helpers():
    s = FieldState(0.5, np.array([[1.0, -2.0, 3.0], [0.0, -1.0, 1.0]]), np.zeros(3))
    assert s.n_species == 2
    assert s.negative_report() == (2, -2.0)
    c = s.copy()
    c.c[0, 0] = 9.0
    assert s.c[0, 0] == 1.0
    assert s.is_finite()
    s.phi[1] = np.nan
    assert not s.is_finite()
    with pytest.raises(ParameterError):
        FieldState(0.0, np.ones((1, 3)), np.ones(4))


def test_node_values():
    g = Grid(4)
    np.testing.assert_array_equal(node_values(lambda x: 2 * x, g), 2 * g.nodes)


def test_single_species_initial_state():
    p = DimensionlessParameters(chi1=1.0, chi2=0.0, eta=1.0, z=(0.0,), D=(1.0,), c_init=(0.3,))
    s = uniform_initial_state(Grid(8), p)
    assert s.c.shape == (1, 9)
    np.testing.assert_allclose(s.c, 0.3)
