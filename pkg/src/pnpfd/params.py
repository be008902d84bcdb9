"""Physical constants and the dimensionless parameter set.

Physical inputs use the unit system of ion-channel modelling: lengths in
angstrom, time in seconds, potentials in volts, permittivity of the
characteristic medium in F/angstrom.  Everything downstream works with
:class:`DimensionlessParameters` only.
"""
from __future__ import annotations

import math
import dataclasses
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
import scipy.constants as sc

from .errors import ParameterError

Profile = Union[float, Callable[[np.ndarray], np.ndarray]]

#: F/m -> F/angstrom
F_PER_M_TO_F_PER_ANGSTROM = 1e-10


def evaluate_profile(profile: Profile, x) -> np.ndarray:
    """Sample a constant or callable coefficient profile at points ``x``."""
    x = np.asarray(x, dtype=float)
    if callable(profile):
        return np.broadcast_to(np.asarray(profile(x), dtype=float), x.shape).copy()
    return np.full(x.shape, float(profile))


@dataclass(frozen=True)
class Species:
    """One mobile ion species in physical units.

    ``D`` in angstrom^2/s, ``c_init`` in ions/angstrom^3.
    """

    z: float
    D: float
    c_init: float


@dataclass(frozen=True)
class PhysicalParameters:
    """Raw physical constants of a one-dimensional channel.

    ``rho0`` is the permanent charge density in C/angstrom^3, either a
    constant or a function of the physical coordinate ``x`` in angstrom.
    """

    T: float
    L: float
    c0: float
    D0: float
    phi0: float
    eta: float
    phi_minus: float
    phi_plus: float
    species: Sequence[Species]
    epst: float = 6.950537436e-20
    epsr: float = 78.5
    eps0: float = 8.854187817e-12
    e: float = sc.elementary_charge
    kB: float = sc.Boltzmann
    rho0: Profile = 0.0

    def validate(self):
        for name in ("T", "L", "c0", "D0", "eta", "epst", "phi0", "e", "kB"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ParameterError(f"{name} must be positive and finite, got {value!r}")
        if self.epsr <= 0 or self.eps0 <= 0:
            raise ParameterError("epsr and eps0 must be positive")
        if not self.species:
            raise ParameterError("at least one ion species is required")
        for k, s in enumerate(self.species, start=1):
            if not s.D > 0:
                raise ParameterError(f"species {k}: diffusion coefficient must be positive")
            if s.c_init < 0:
                raise ParameterError(f"species {k}: initial concentration must be non-negative")


@dataclass(frozen=True)
class DimensionlessParameters:
    """Dimensionless groups consumed by the discretization.

    Parameters
    ----------
    chi1 : float
        Ratio of the characteristic potential to the thermal voltage.
    chi2 : float
        Strength of the charge source in the Poisson equation.
    eta : float
        Robin length divided by the half channel length.
    z, D : sequence of float
        Valence and scaled diffusion coefficient per species.
    phi_minus, phi_plus : float
        Far-field potentials at x = -1 and x = +1.
    eps : float or callable
        Scaled permittivity profile on [-1, 1].
    rho0 : float or callable
        Scaled permanent charge profile on [-1, 1].
    c_init : sequence of float
        Uniform initial concentrations.
    c_ref : sequence of float
        Reference concentrations used by the entropy and chemical potential.
    """

    chi1: float
    chi2: float
    eta: float
    z: tuple
    D: tuple
    phi_minus: float = 0.0
    phi_plus: float = 0.0
    eps: Profile = 1.0
    rho0: Profile = 0.0
    c_init: tuple = None
    c_ref: tuple = None

    def __post_init__(self):
        z = tuple(float(v) for v in self.z)
        D = tuple(float(v) for v in self.D)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "D", D)
        n = len(z)
        if self.c_init is None:
            object.__setattr__(self, "c_init", (1.0,) * n)
        else:
            object.__setattr__(self, "c_init", tuple(float(v) for v in self.c_init))
        if self.c_ref is None:
            object.__setattr__(self, "c_ref", self.c_init)
        else:
            object.__setattr__(self, "c_ref", tuple(float(v) for v in self.c_ref))
        self.validate()

    @property
    def n_species(self) -> int:
        return len(self.z)

    def validate(self):
        n = len(self.z)
        if n == 0:
            raise ParameterError("at least one ion species is required")
        for name in ("D", "c_init", "c_ref"):
            if len(getattr(self, name)) != n:
                raise ParameterError(f"{name} has {len(getattr(self, name))} entries, expected {n}")
        if not (self.chi1 > 0 and math.isfinite(self.chi1)):
            raise ParameterError(f"chi1 must be positive, got {self.chi1!r}")
        if not (self.chi2 >= 0 and math.isfinite(self.chi2)):
            raise ParameterError(f"chi2 must be non-negative, got {self.chi2!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ParameterError(f"eta must be positive, got {self.eta!r}")
        if any(not d > 0 for d in self.D):
            raise ParameterError("every diffusion coefficient must be positive")
        if any(not c > 0 for c in self.c_ref):
            raise ParameterError("every reference concentration must be positive")
        if any(c < 0 for c in self.c_init):
            raise ParameterError("initial concentrations must be non-negative")
        probe = np.linspace(-1.0, 1.0, 65)
        if np.any(evaluate_profile(self.eps, probe) <= 0):
            raise ParameterError("permittivity profile must be positive on [-1, 1]")

    def replace(self, **changes) -> "DimensionlessParameters":
        return dataclasses.replace(self, **changes)


def nondimensionalize(p: PhysicalParameters) -> DimensionlessParameters:
    """Map physical constants onto the dimensionless groups.

    >>> kcsa = PhysicalParameters(T=298.0, L=60.0, c0=1.2044e-3, D0=1e9,
    ...     phi0=0.08, eta=2.78e-3, phi_minus=0.08, phi_plus=-0.08,
    ...     species=[Species(1, 1e9, 1.2044e-3), Species(-1, 1e9, 1.2044e-3)])
    >>> round(nondimensionalize(kcsa).chi1, 3)
    3.115
    """
    p.validate()
    L, phi0, epst = p.L, p.phi0, p.epst
    chi1 = p.e * phi0 / (p.kB * p.T)
    chi2 = p.e * p.c0 * L**2 / (phi0 * epst)
    eps = p.epsr * p.eps0 * F_PER_M_TO_F_PER_ANGSTROM / epst

    rho0 = p.rho0
    if callable(rho0):
        def rho0_scaled(xp, _f=rho0):
            return np.asarray(_f(np.asarray(xp) * L), dtype=float) * L**2 / (phi0 * epst)
    else:
        rho0_scaled = float(rho0) * L**2 / (phi0 * epst)

    c_init = tuple(s.c_init / p.c0 for s in p.species)
    # zero initial data would make a unit reference meaningless; fall back to 1
    c_ref = tuple(c if c > 0 else 1.0 for c in c_init)
    return DimensionlessParameters(
        chi1=chi1,
        chi2=chi2,
        eta=p.eta / L,
        z=tuple(s.z for s in p.species),
        D=tuple(s.D / p.D0 for s in p.species),
        phi_minus=p.phi_minus / phi0,
        phi_plus=p.phi_plus / phi0,
        eps=eps,
        rho0=rho0_scaled,
        c_init=c_init,
        c_ref=c_ref,
    )


def kcsa_parameters(eta: float = 2.78e-3, phi0: float = 0.08) -> PhysicalParameters:
    """KcsA-like channel: 2 M symmetric salt in a 120 angstrom pore."""
    c0 = 1.2044e-3
    D = 1e9
    return PhysicalParameters(
        T=298.0,
        L=60.0,
        c0=c0,
        D0=D,
        phi0=phi0,
        eta=eta,
        phi_minus=phi0,
        phi_plus=-phi0,
        species=(Species(1.0, D, c0), Species(-1.0, D, c0)),
    )


def channel_defaults(**overrides) -> DimensionlessParameters:
    """Dimensionless baseline used by the evolution and comparison studies."""
    base = dict(
        chi1=3.1,
        chi2=125.4,
        eta=4.63e-5,
        z=(1.0, -1.0),
        D=(1.0, 1.0),
        phi_minus=1.0,
        phi_plus=-1.0,
        eps=1.0,
        rho0=0.0,
    )
    base.update(overrides)
    return DimensionlessParameters(**base)


def validation_defaults(eps: float, **overrides) -> DimensionlessParameters:
    """Parameters of the Poisson-Boltzmann validation runs (eta equal to eps)."""
    base = dict(
        chi1=1.0,
        chi2=1.0 / (2.0 * eps),
        eta=eps,
        z=(1.0, -1.0),
        D=(1.0, 1.0),
        phi_minus=-1.0,
        phi_plus=1.0,
        eps=eps,
        rho0=0.0,
    )
    base.update(overrides)
    return DimensionlessParameters(**base)
