import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from fraclk.dimension import Lattice, NonLattice, hausdorff_dimension, lambda_of_D
from fraclk.intervals import r_correction_1d
from fraclk.limits import (ClassificationMismatch, CurvatureCurve, GridTooCoarse,
                           NonFractalScaling, Regression, average_limit, curves_1d,
                           epsilon_grid, lattice_points, lattice_sequences,
                           m_infinity_regression, rhs_constant, substitution_check)
from fraclk.rifs import Resolution, sample_tree

from conftest import line_model

tiling = line_model([(1, [(0.5, 0), (0.5, 0.5)])], name="tiling")


def synthetic(values_of_t, delta=1e-6, D=0.5, k=0):
    eps = epsilon_grid(1.0, delta)
    t = -np.log(eps)
    return CurvatureCurve(k, eps, values_of_t(t) * eps ** (k - D), D, 0.0)


@settings(max_examples=50, deadline=None)
@given(eps_max=st.floats(1e-3, 10), span=st.floats(0.1, 20), ppt=st.integers(16, 128))
def test_epsilon_grid_ends(eps_max, span, ppt):
    eps_min = eps_max * math.exp(-span)
    g = epsilon_grid(eps_max, eps_min, ppt)
    assert g[0] == eps_max and g[-1] == eps_min
    assert np.all(np.diff(g) < 0)
    assert (len(g) - 1) / span >= ppt - 1e-9


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-5, 5), delta=st.sampled_from([1e-2, 1e-4, 1e-8]))
def test_average_of_constant(c, delta):
    assert average_limit(synthetic(lambda t: c + 0 * t, delta), delta) == pytest.approx(c, abs=1e-12)


def test_average_of_pure_oscillation():
    c = math.log(3)
    for delta in (1e-4, 1e-8, 1e-16):
        got = average_limit(synthetic(lambda t: np.cos(2 * math.pi * t / c), delta), delta)
        L = math.log(1 / delta)
        exact = math.sin(2 * math.pi * L / c) * c / (2 * math.pi) / L
        # trapezoid bound: h^2 max|f''| / 12 with h = 1/64
        assert got == pytest.approx(exact, abs=(2 * math.pi / c / 64) ** 2 / 12)
        assert abs(got) <= c / (2 * math.pi * L) + 1e-6


def test_grid_too_coarse():
    eps = epsilon_grid(1.0, 1e-4, 4)
    curve = CurvatureCurve(0, eps, np.ones_like(eps), 0.5, 0.0)
    with pytest.raises(GridTooCoarse):
        average_limit(curve, 1e-4)


def test_substitution_identity(random_cantor):
    eps = epsilon_grid(1.0, 1e-4)
    for k, c in curves_1d(random_cantor, 3, 0, eps, (0, 1)).items():
        assert substitution_check(c) <= 1e-12


def test_non_fractal_scaling_tiling():
    eps = epsilon_grid(1.0, 1e-3)
    c = curves_1d(tiling, 0, 0, eps, (1,))[1]
    np.testing.assert_allclose(c.rescaled, 1 + 2 * eps, rtol=1e-12)
    with pytest.raises(NonFractalScaling, match="scaling exponent"):
        rhs_constant(tiling, 1)


def test_empty_realization_curve_is_zero():
    m = line_model([(0.6, []), (0.4, [(1 / 3, 0), (1 / 3, 2 / 3), (1 / 4, 0.4)])])
    eps = epsilon_grid(1.0, 1e-2)
    for rep in range(200):
        if sample_tree(m, 1, rep, Resolution(0.1)).extinct_root:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                c = curves_1d(m, 1, rep, eps, (0, 1))
            assert not c[0].values.any() and not c[1].values.any()
            return
    pytest.fail("no extinct realization")


def test_cantor_integrand_support(cantor):
    t = sample_tree(cantor, 0, 0, Resolution(1e-5))
    rs = np.linspace(1e-3, 1 / 6 - 1e-9, 50)
    assert all(abs(r_correction_1d(t, cantor, r, 1)) <= 1e-12 for r in rs)
    assert r_correction_1d(t, cantor, 0.2, 1) != 0


@pytest.mark.parametrize("k", [0, 1])
def test_rhs_matches_adaptive_quadrature(cantor, k):
    D = hausdorff_dimension(cantor)
    lam = lambda_of_D(cantor, D)
    t = sample_tree(cantor, 0, 0, Resolution(1e-4))
    knots = np.unique(np.concatenate([[1 / 6, 0.5, 1.5], 0.5 / 3 ** np.arange(0, 6)]))
    knots = knots[(knots >= 1 / 6) & (knots <= 1.5)]
    f = lambda r: r ** (D - k - 1) * r_correction_1d(t, cantor, r, k, eta=1e-4 / r)
    total = sum(integrate.quad(f, a, b, limit=200)[0] for a, b in zip(knots[:-1], knots[1:]))
    est = rhs_constant(cantor, k)
    assert est.stderr == 0.0 and len(est.per_replicate) == 1
    assert est.value == pytest.approx(total / lam, rel=1e-7)


def test_lattice_sequences_guard(cantor, random_cantor):
    curve = CurvatureCurve(1, np.array([1.0, 0.5]), np.array([1.0, 1.0]), 0.5, 0.0)
    with pytest.raises(ClassificationMismatch):
        lattice_sequences(curve, NonLattice("x"), [0.1])


def test_cantor_lattice_sequences_settle_by_12(cantor):
    c = math.log(3)
    pts = lattice_points(c, [0.1, 0.5, 0.9], 12)
    curve = curves_1d(cantor, 0, 0, pts, (1,))[1]
    seqs = lattice_sequences(curve, Lattice(c), [0.1, 0.5, 0.9])
    assert all(s.settled for s in seqs)
    assert max(s.limit for s in seqs) / min(s.limit for s in seqs) > 1.005


def test_cesaro_over_one_period(cantor):
    c = math.log(3)
    d1 = 1e-6
    d2 = d1 * math.exp(-c)
    eps = np.unique(np.concatenate([epsilon_grid(1.0, d1), epsilon_grid(d1, d2)]))[::-1]
    curve = curves_1d(cantor, 0, 0, eps, (1,))[1]
    a, b = average_limit(curve, d1), average_limit(curve, d2)
    # averages over whole periods: the extra period moves the mean toward the Cesaro limit
    assert abs(a - b) < 0.01 * abs(a)


def test_regression_deterministic_direct(cantor):
    rep = m_infinity_regression(cantor, 1, 1, 0, 1e-4)
    assert rep.fit is None and rep.x[0] == pytest.approx(1.0)
    assert rep.direct_mean == pytest.approx(rhs_constant(cantor, 1).value, rel=0.02)


def test_regression_recovers_slope():
    rng = np.random.default_rng(0)
    x = rng.gamma(4, 0.25, 500)
    y = 2.0 * x + rng.normal(0, 0.05, 500)
    fit = Regression.fit(x, y)
    assert fit.slope_ci[0] < 2.0 < fit.slope_ci[1]
    assert fit.intercept_ci[0] < 0 < fit.intercept_ci[1]


def test_regression_guards(random_cantor):
    with pytest.raises(ValueError, match="replicates"):
        m_infinity_regression(random_cantor, 1, 10, 0, 1e-3)
