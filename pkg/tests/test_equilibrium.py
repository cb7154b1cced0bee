import numpy as np
import pytest
from hypothesis import given, strategies as st

from loggas.core import PotentialModel
from loggas.equilibrium import (classical_locations, density_mass, euler_lagrange_residual,
                                quantile_gamma, semicircle, semicircle_cdf, semicircle_density,
                                solve_equilibrium_density)
from loggas.errors import DomainError, UnsupportedPotentialError


def test_semicircle_density_values():
    assert semicircle_density(0.0) == pytest.approx(1 / np.pi, rel=1e-15)
    assert semicircle_density(2.0) == 0.0
    assert semicircle_density(-2.0) == 0.0
    assert semicircle_density(3.0) == 0.0


def test_semicircle_quantiles():
    sc = semicircle()
    assert quantile_gamma(sc, 50, 100) == pytest.approx(0.0, abs=1e-12)
    assert quantile_gamma(sc, 100, 100) == pytest.approx(2.0, abs=1e-12)
    assert quantile_gamma(sc, 25, 100) == pytest.approx(-0.808, abs=1e-3)
    with pytest.raises(DomainError):
        quantile_gamma(sc, 0, 100)


@given(st.floats(-1.95, 1.95))
def test_quantile_inverts_cdf(x):
    sc = semicircle()
    assert sc.quantile(float(semicircle_cdf(x))) == pytest.approx(x, abs=1e-6)


def test_classical_locations_increasing():
    g = classical_locations(semicircle(), 301)
    assert np.all(np.diff(g) > 0)


def test_numeric_solver_recovers_semicircle():
    d = solve_equilibrium_density(PotentialModel.quadratic())
    x = np.linspace(-1.9, 1.9, 201)
    assert np.max(np.abs(d.density(x) - semicircle_density(x))) < 1e-8
    assert d.support[0] == pytest.approx(-2.0, abs=1e-10)


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_scaling_covariance(s):
    d = solve_equilibrium_density(PotentialModel.quadratic(s))
    x = np.linspace(-1.9 / s, 1.9 / s, 101)
    assert np.max(np.abs(d.density(x) - s * semicircle_density(s * x))) < 1e-6
    assert np.max(np.abs(semicircle(s).density(x) - s * semicircle_density(s * x))) < 1e-14


def test_quartic_density():
    d = solve_equilibrium_density(PotentialModel.quartic())
    assert density_mass(d) == pytest.approx(1.0, abs=1e-10)
    assert d.support[0] == pytest.approx(-d.support[1], abs=1e-10)
    x = np.linspace(0.8 * d.support[0], 0.8 * d.support[1], 7)
    assert np.max(euler_lagrange_residual(d, PotentialModel.quartic(), x)) < 1e-8
    F = d.cdf(np.linspace(*d.support, 50))
    assert np.all(np.diff(F) >= 0)


def test_double_well_is_unsupported():
    V = PotentialModel.polynomial([0, 0, -3.0, 0, 0.25])
    with pytest.raises(UnsupportedPotentialError):
        solve_equilibrium_density(V)
