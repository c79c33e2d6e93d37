import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ikernel.basis import (
    dyadic_cells,
    gram_schmidt_basis,
    make_basis,
    normalized_haar,
    resolve_basis,
    weighted_trig,
)
from ikernel.errors import ConfigurationError, DependentSeedsError, UnboundedBasisError
from ikernel.kernels import BasisExpansion
from ikernel.measure import AnalyticUniformPair, Tabulated, gauss_legendre_grid, l2rho_inner

UNIFORM = AnalyticUniformPair()


@pytest.mark.parametrize("kind", ["poly", "haar", "trig"])
def test_orthonormal_under_fresh_quadrature(kind):
    fam = make_basis(kind, 12, UNIFORM)
    assert fam.residual <= 1e-8
    lo, hi = fam.interval
    g = gauss_legendre_grid(lo, hi, panels=256, extra_breaks=fam.breakpoints())
    G = fam.gram(g)
    assert np.max(np.abs(G - np.eye(12))) <= 1e-8


def test_poly_pairwise_products_small_and_refinement_stable():
    fam = make_basis("poly", 20, UNIFORM)
    G = fam.gram()
    off = G - np.diag(np.diag(G))
    assert np.max(np.abs(off)) <= 1e-10
    assert np.max(np.abs(fam.gram(fam.grid.refined(2)) - G)) <= 1e-8


def test_poly_high_dimension_stays_orthonormal():
    fam = make_basis("poly", 120, UNIFORM)
    assert fam.residual <= 1e-8
    assert np.isfinite(fam.cmax())


def test_constant_seed_gives_unit_function():
    g = gauss_legendre_grid(0.0, 1.0)
    fam = gram_schmidt_basis([lambda r: np.ones_like(r)], UNIFORM, g)
    assert np.allclose(fam.values(np.linspace(0, 1, 9))[:, 0], 1.0, atol=1e-14)
    assert fam.cmax() == pytest.approx(1.0, abs=1e-14)


def test_dependent_seeds_raise():
    g = gauss_legendre_grid(0.0, 1.0)
    with pytest.raises(DependentSeedsError):
        gram_schmidt_basis([lambda r: r, lambda r: 2 * r], UNIFORM, g)


def test_haar_functions_are_normalized_indicators():
    fam = normalized_haar(5, UNIFORM)
    edges = dyadic_cells(0.0, 0.95, 5)
    assert len(edges) == 6
    masses = [UNIFORM.cdf(b) - UNIFORM.cdf(a) for a, b in zip(edges[:-1], edges[1:])]
    for k, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        x = 0.5 * (a + b)
        v = fam.values(np.array([x]))[0]
        assert v[k] == pytest.approx(1 / math.sqrt(masses[k]), rel=1e-12)
        assert np.count_nonzero(v) == 1
    assert fam.cmax() == pytest.approx(1 / math.sqrt(min(masses)), rel=1e-12)


def test_trig_with_flat_density_is_the_plain_sine():
    flat = Tabulated([0.0, 1.0], [1.0, 1.0])
    fam = weighted_trig(3, flat, (0.0, 1.0))
    assert fam.values(np.array([0.5]))[0, 0] == pytest.approx(math.sqrt(2), rel=1e-12)


def test_trig_envelope_and_floor():
    fam = weighted_trig(10, UNIFORM)
    lo, hi = fam.interval
    assert fam.cmax() <= math.sqrt(2) / math.sqrt(UNIFORM.floor * (hi - lo)) * (1 + 1e-9)
    with pytest.raises(UnboundedBasisError):
        weighted_trig(3, UNIFORM, (0.0, 1.0))


@pytest.mark.parametrize("kind", ["poly", "haar", "trig"])
def test_cmax_nondecreasing(kind):
    vals = [make_basis(kind, n, UNIFORM).cmax() for n in (1, 2, 4, 8)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_parseval_on_the_span(theta):
    fam = make_basis("poly", 6, UNIFORM)
    f = BasisExpansion(theta, fam)
    norm2 = l2rho_inner(f, f, UNIFORM, fam.grid)
    assert norm2 == pytest.approx(float(np.dot(theta, theta)), abs=1e-8)


def test_with_n_and_ids():
    fam = make_basis("poly", 10, UNIFORM)
    small = fam.with_n(4)
    r = np.linspace(0, 0.95, 13)
    assert np.allclose(small.values(r), make_basis("poly", 4, UNIFORM).values(r), atol=1e-12)
    again = resolve_basis(fam.id)
    assert np.allclose(again.values(r), fam.values(r), atol=1e-14)
    with pytest.raises(ConfigurationError):
        resolve_basis("spline:n=3")
    with pytest.raises(ConfigurationError):
        fam.values(r, 11)


def test_coefficient_table_export(tmp_path):
    fam = make_basis("poly", 3, UNIFORM)
    fam.coefficient_table_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "seed,function,value"
