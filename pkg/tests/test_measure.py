import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from ikernel.errors import DomainError
from ikernel.measure import (
    AnalyticUniformPair,
    Empirical,
    Tabulated,
    composite_grid,
    density_at,
    empirical_measure,
    gauss_legendre_grid,
    ks_distance,
    l2rho_inner,
    l2rho_norm,
)

UNIT = gauss_legendre_grid(0.0, 1.0)


@pytest.mark.parametrize("r, expected", [(0.0, 2.0), (1.0, 0.0), (0.5, 1.0)])
def test_uniform_pair_density_values(r, expected):
    assert density_at(AnalyticUniformPair(), r) == pytest.approx(expected, abs=1e-15)


def test_density_outside_unit_interval_is_domain_error():
    with pytest.raises(DomainError):
        density_at(AnalyticUniformPair(), 1.5)
    with pytest.raises(DomainError):
        density_at(AnalyticUniformPair(), -0.1)


def test_uniform_pair_support_uses_floor():
    assert AnalyticUniformPair().support() == (0.0, 0.95)
    assert AnalyticUniformPair(floor=0.5).support() == (0.0, 0.75)
    with pytest.raises(DomainError):
        AnalyticUniformPair(floor=2.5).support()


def test_uniform_pair_cdf_matches_integral_of_density():
    m = AnalyticUniformPair()
    for r in (0.1, 0.37, 0.8):
        val, _ = integrate.quad(lambda x: 2 * (1 - x), 0, r)
        assert m.cdf(r) == pytest.approx(val, abs=1e-14)


def test_empirical_measure_three_particles_by_hand():
    X = np.array([[[0.0], [0.5], [1.0]]])
    emp = empirical_measure(X)
    assert emp.sample.tolist() == [0.5, 0.5, 0.5, 0.5, 1.0, 1.0]


def test_empirical_measure_two_particles_gives_equal_distances():
    X = np.array([[[0.2], [0.9]]])
    emp = empirical_measure(X)
    assert emp.size == 2 and emp.sample[0] == emp.sample[1]


def test_empirical_histogram_has_unit_mass():
    rng = np.random.default_rng(0)
    emp = Empirical(rng.random(10_000))
    assert emp.bin_width == pytest.approx(1 / 100)
    g = composite_grid(np.linspace(0, 1, 101), 2)
    assert g.integrate(emp.density(g.nodes)) == pytest.approx(1.0, abs=1e-12)


def test_empirical_csv_roundtrip(tmp_path):
    emp = Empirical(np.random.default_rng(1).random(50))
    emp.to_csv(tmp_path / "s.csv")
    back = Empirical.from_csv(tmp_path / "s.csv")
    assert np.array_equal(back.sample, emp.sample)


def test_ks_distance_matches_scipy():
    x = np.random.default_rng(2).random(500)
    cdf = AnalyticUniformPair().cdf
    assert ks_distance(x, cdf) == pytest.approx(stats.kstest(x, cdf).statistic, abs=1e-15)


def test_tabulated_density_interpolates_and_checks_mass(tmp_path):
    tab = Tabulated([0.0, 1.0], [2.0, 0.0])
    assert tab.density(0.25) == pytest.approx(1.5)
    assert tab.cdf(0.5) == pytest.approx(AnalyticUniformPair().cdf(0.5))
    with pytest.raises(ValueError):
        Tabulated([0.0, 1.0], [1.0, 0.0])
    with pytest.raises(ValueError):
        Tabulated([0.0, 1.0], [-1.0, 3.0])
    tab.to_csv(tmp_path / "t.csv")
    back = Tabulated.from_csv(tmp_path / "t.csv")
    assert np.array_equal(back.values, tab.values)


def test_quadrature_grid_invariants():
    g = gauss_legendre_grid(0.0, 0.95, extra_breaks=(0.3, 0.3000000001))
    assert g.weights.sum() == pytest.approx(0.95, abs=1e-12)
    assert np.all(np.diff(g.nodes) > 0)
    assert np.all(g.weights > 0)


@pytest.mark.parametrize("f, g, expected", [
    (lambda r: np.ones_like(r), lambda r: np.ones_like(r), 1.0),
    (lambda r: r, lambda r: np.ones_like(r), 1.0 / 3.0),
    (lambda r: 2.0 * (r >= 0.5), lambda r: 2.0 * (r >= 0.5), 1.0),
])
def test_l2rho_inner_closed_forms(f, g, expected):
    assert l2rho_inner(f, g, AnalyticUniformPair(), UNIT) == pytest.approx(expected, abs=1e-13)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_cauchy_schwarz(a, b):
    m = AnalyticUniformPair()
    f = lambda r: np.polyval(a, r)  # noqa: E731
    g = lambda r: np.cos(b[0] * r) + b[1] * r**2 + b[2]  # noqa: E731
    lhs = abs(l2rho_inner(f, g, m, UNIT))
    rhs = l2rho_norm(f, m, UNIT) * l2rho_norm(g, m, UNIT)
    assert lhs <= rhs * (1 + 1e-12) + 1e-14


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=7))
def test_refinement_is_stable_for_low_degree_polynomials(coef):
    m = AnalyticUniformPair()
    f = lambda r: np.polyval(coef, r)  # noqa: E731
    coarse = l2rho_inner(f, f, m, UNIT)
    fine = l2rho_inner(f, f, m, UNIT.refined(2))
    assert abs(fine - coarse) <= 1e-8 * max(1.0, abs(coarse))


def test_uniform_particles_give_the_uniform_pair_law():
    X = np.random.default_rng(3).random((20_000, 3, 1))
    emp = empirical_measure(X)
    assert emp.size >= 100_000
    assert ks_distance(emp, AnalyticUniformPair().cdf) <= 0.01
