import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnpfd.errors import ParameterError
from pnpfd.params import (
    DimensionlessParameters,
    Species,
    channel_defaults,
    evaluate_profile,
    kcsa_parameters,
    nondimensionalize,
    validation_defaults,
)


def test_kcsa_chi1():
    # published value is quoted to one decimal
    assert round(nondimensionalize(kcsa_parameters()).chi1, 1) == 3.1


def test_kcsa_chi2():
    # published 125.4; the listed constants give 124.93 (see decisions ledger)
    assert nondimensionalize(kcsa_parameters()).chi2 == pytest.approx(125.4, rel=5e-3)


def test_kcsa_eta():
    assert nondimensionalize(kcsa_parameters()).eta == pytest.approx(4.63e-5, rel=1e-3)


def test_kcsa_relative_permittivity_close_to_one():
    assert nondimensionalize(kcsa_parameters()).eps == pytest.approx(1.0, rel=1e-3)


def test_diffusion_equal_to_reference_scales_to_one():
    p = nondimensionalize(kcsa_parameters())
    assert p.D == (1.0, 1.0)


def test_chi_groups_match_closed_form():
    p = kcsa_parameters()
    d = nondimensionalize(p)
    assert d.chi1 == pytest.approx(p.e * p.phi0 / (p.kB * p.T), rel=1e-15)
    assert d.chi2 == pytest.approx(p.e * p.c0 * p.L**2 / (p.phi0 * p.epst), rel=1e-15)
    assert d.phi_minus == pytest.approx(1.0) and d.phi_plus == pytest.approx(-1.0)


@pytest.mark.parametrize("name", ["T", "phi0", "epst", "L", "D0"])
@pytest.mark.parametrize("value", [0.0, -1.0])
def test_nonpositive_denominators_rejected(name, value):
    p = dataclasses.replace(kcsa_parameters(), **{name: value})
    with pytest.raises(ParameterError, match=name):
        nondimensionalize(p)


def test_species_validation():
    p = dataclasses.replace(kcsa_parameters(), species=(Species(1, -1.0, 1e-3),))
    with pytest.raises(ParameterError, match="species 1"):
        nondimensionalize(p)
    with pytest.raises(ParameterError):
        nondimensionalize(dataclasses.replace(kcsa_parameters(), species=()))


def test_callable_permanent_charge_is_scaled():
    p = dataclasses.replace(kcsa_parameters(), rho0=lambda x: 1e-6 * x)
    d = nondimensionalize(p)
    scale = p.L**2 / (p.phi0 * p.epst)
    x = np.array([-1.0, 0.5])
    np.testing.assert_allclose(evaluate_profile(d.rho0, x), 1e-6 * x * p.L * scale, rtol=1e-14)


def test_dimensionless_defaults():
    p = DimensionlessParameters(chi1=1.0, chi2=2.0, eta=0.1, z=(1, -1), D=(1, 2))
    assert p.n_species == 2
    assert p.c_init == (1.0, 1.0) and p.c_ref == (1.0, 1.0)
    assert p.D == (1.0, 2.0)


@pytest.mark.parametrize("bad", [
    dict(chi1=0.0), dict(chi2=-1.0), dict(eta=0.0), dict(D=(1.0, 0.0)),
    dict(c_ref=(1.0, 0.0)), dict(c_init=(1.0, -0.1)), dict(D=(1.0,)), dict(eps=lambda x: x),
])
def test_dimensionless_validation(bad):
    base = dict(chi1=1.0, chi2=1.0, eta=0.1, z=(1, -1), D=(1, 1))
    base.update(bad)
    with pytest.raises(ParameterError):
        DimensionlessParameters(**base)


def test_replace_revalidates():
    p = channel_defaults()
    assert p.replace(chi2=31.35).chi2 == 31.35
    with pytest.raises(ParameterError):
        p.replace(eta=-1.0)


def test_preset_values():
    c = channel_defaults()
    assert (c.chi1, c.chi2, c.eta, c.phi_minus, c.phi_plus) == (3.1, 125.4, 4.63e-5, 1.0, -1.0)
    v = validation_defaults(0.25)
    assert (v.chi1, v.chi2, v.eta, v.eps, v.phi_minus, v.phi_plus) == (1.0, 2.0, 0.25, 0.25, -1.0, 1.0)


def test_evaluate_profile_constant_and_callable():
    x = np.linspace(-1, 1, 5)
    np.testing.assert_array_equal(evaluate_profile(2.5, x), np.full(5, 2.5))
    np.testing.assert_array_equal(evaluate_profile(lambda s: s**2, x), x**2)
    assert evaluate_profile(lambda s: 3.0, x).shape == (5,)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3))
def test_diffusion_scaling_invariant(factor):
    p = kcsa_parameters()
    q = dataclasses.replace(p, D0=p.D0 * factor,
                            species=tuple(Species(s.z, s.D * factor, s.c_init) for s in p.species))
    assert nondimensionalize(q).D == pytest.approx(nondimensionalize(p).D, rel=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1.0), st.floats(200.0, 400.0))
def test_chi1_round_trip(phi0, T):
    p = dataclasses.replace(kcsa_parameters(), phi0=phi0, T=T)
    d = nondimensionalize(p)
    assert d.chi1 * p.kB * p.T / p.e == pytest.approx(phi0, rel=1e-14)
