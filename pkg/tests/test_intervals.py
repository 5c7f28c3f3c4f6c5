import math

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from fraclk.intervals import (EmptyRealization, IntervalSet, ResolutionTooCoarse,
                              curvatures_1d, leaf_cover_1d, parallel_1d, r_correction_1d,
                              render_cover_1d)
from fraclk.rifs import Depth, Resolution, sample_tree

from conftest import line_model

coords = st.floats(-100, 100, allow_nan=False)
interval_sets = st.lists(st.tuples(coords, st.floats(0, 10)), min_size=1, max_size=12).map(
    lambda xs: IntervalSet([(a, a + w) for a, w in xs]))
radii = st.floats(0, 20)
# dyadic values keep endpoint arithmetic exact for the identity checks
dyadic = st.integers(-2 ** 10, 2 ** 10).map(lambda n: n / 64)
dyadic_sets = st.lists(st.tuples(dyadic, st.integers(0, 256).map(lambda n: n / 64)),
                       min_size=1, max_size=12).map(lambda xs: IntervalSet([(a, a + w) for a, w in xs]))
dyadic_radii = st.integers(0, 512).map(lambda n: n / 64)


def brute_curvatures(s, eps):
    # independent oracle: explicit parallel set via the merge in parallel_1d
    p = parallel_1d(s, eps)
    return curvatures_1d(p)


def test_parallel_examples():
    s = IntervalSet([[0, 1], [1.5, 2]])
    assert parallel_1d(s, 0.3) == IntervalSet([[-0.3, 2.3]])
    assert parallel_1d(s, 0.2) == IntervalSet([[-0.2, 1.2], [1.3, 2.2]])
    assert parallel_1d(s, 0.0) == s


def test_curvature_examples():
    assert curvatures_1d(IntervalSet([[0, 1], [2, 3]])) == (2, 2.0)
    assert curvatures_1d(IntervalSet.empty()) == (0, 0.0)


def test_touching_intervals_merge():
    assert len(IntervalSet([[0, 1], [1, 2]])) == 1
    c0, c1 = IntervalSet([[0, 1], [2, 3]]).curvatures_at([0.5])
    assert c0[0] == 1 and c1[0] == pytest.approx(4.0)


@settings(max_examples=200, deadline=None)
@given(s=interval_sets, eps=radii)
def test_gap_formula_matches_explicit_parallel_set(s, eps):
    c0, c1 = s.curvatures_at([eps])
    b0, b1 = brute_curvatures(s, eps)
    assert c0[0] == b0
    assert c1[0] == pytest.approx(b1, rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(s=interval_sets, e1=radii, e2=radii)
def test_monotone(s, e1, e2):
    lo, hi = sorted((e1, e2))
    c0, c1 = s.curvatures_at([lo, hi])
    assert c1[0] <= c1[1] + 1e-9
    assert c0[0] >= c0[1]


@settings(max_examples=200, deadline=None)
@given(s=dyadic_sets, eps=dyadic_radii, lam=st.sampled_from([0.25, 0.5, 2.0, 8.0]),
       shift=dyadic)
def test_homogeneity_and_translation(s, eps, lam, shift):
    c0, c1 = s.curvatures_at([eps])
    d0, d1 = s.scale(lam).curvatures_at([lam * eps])
    assert d0[0] == c0[0] and d1[0] == lam * c1[0]
    t0, t1 = s.translate(shift).curvatures_at([eps])
    assert t0[0] == c0[0] and t1[0] == c1[0]


@settings(max_examples=200, deadline=None)
@given(s=dyadic_sets, e1=dyadic_radii, e2=dyadic_radii)
def test_semigroup(s, e1, e2):
    assert parallel_1d(parallel_1d(s, e1), e2) == parallel_1d(s, e1 + e2)


def test_cantor_cover(cantor):
    t = sample_tree(cantor, 0, 0, Resolution(3.0 ** -3))
    cover = render_cover_1d(t, cantor)
    assert len(cover) == 8
    np.testing.assert_allclose(np.diff(cover.intervals, axis=1), 1 / 27, rtol=1e-14)
    c0, c1 = cover.curvatures_at([1e-4])
    assert c0[0] == 8 and c1[0] == pytest.approx(8 * (1 / 27 + 2e-4), rel=1e-14)


def test_tiling_cover_is_interval():
    m = line_model([(1, [(0.5, 0), (0.5, 0.5)])])
    for ell in (0.3, 1e-3):
        cover = render_cover_1d(sample_tree(m, 0, 0, Resolution(ell)), m)
        assert cover == IntervalSet([[0, 1]])


def test_random_cover_canonical_and_idempotent(random_cantor):
    t = sample_tree(random_cantor, 17, 2, Resolution(1e-3))
    a = render_cover_1d(t, random_cantor)
    b = render_cover_1d(sample_tree(random_cantor, 17, 2, Resolution(1e-3)), random_cantor)
    assert a == b and IntervalSet(a.intervals) == a
    assert np.all(np.diff(a.intervals.ravel()) > 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 63 - 1), tight=st.booleans(),
       eps=st.floats(0.01, 0.5))
def test_cover_sandwich(random_cantor, seed, tight, eps):
    ell, fine = 4e-3, 1e-4
    coarse = render_cover_1d(sample_tree(random_cantor, seed, 0, Resolution(ell)), random_cantor, tight)
    deep = render_cover_1d(sample_tree(random_cantor, seed, 0, Resolution(fine)), random_cantor, tight)
    lo = coarse.curvatures_at([eps - ell])[1][0]
    mid = deep.curvatures_at([eps])[1][0]
    hi = coarse.curvatures_at([eps + ell])[1][0]
    assert lo <= mid + 1e-12 and mid <= hi + 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 63 - 1), eps=st.floats(0.005, 0.5))
def test_tight_cover_is_exact_above_half_resolution(random_cantor, seed, eps):
    ell = 1e-2
    coarse = render_cover_1d(sample_tree(random_cantor, seed, 0, Resolution(ell)), random_cantor)
    deep = render_cover_1d(sample_tree(random_cantor, seed, 0, Resolution(1e-6)), random_cantor)
    c = coarse.curvatures_at([eps])
    d = deep.curvatures_at([eps])
    assert c[0][0] == d[0][0]
    assert c[1][0] == pytest.approx(d[1][0], abs=1e-12)


def test_extinct_realization_is_empty():
    m = line_model([(0.6, []), (0.4, [(1 / 3, 0), (1 / 3, 2 / 3), (1 / 4, 0.4)])])
    for rep in range(200):
        t = sample_tree(m, 2, rep, Resolution(1e-2))
        if t.extinct_root:
            with pytest.warns(EmptyRealization):
                cover = leaf_cover_1d(t, m)
            assert len(cover.intervals) == 0
            assert r_correction_1d(t, m, 0.5, 1, eta=1.0) == 0.0
            return
    pytest.fail("no extinct realization found")


def test_correction_vanishes_below_sixth(cantor):
    t = sample_tree(cantor, 0, 0, Resolution(1e-4 / 64))
    for r in np.geomspace(1e-4, 1 / 6 - 1e-6, 60):
        for k in (0, 1):
            assert abs(r_correction_1d(t, cantor, r, k)) <= 1e-12


def test_correction_at_large_radii(cantor):
    t = sample_tree(cantor, 0, 0, Resolution(1e-3))
    # 0.4 <= 1.5/3: both children still subtracted
    assert r_correction_1d(t, cantor, 0.4, 1) == pytest.approx(1.8 - 2 * (1 / 3 + 0.8), abs=1e-12)
    # 0.6 > 1.5/3: indicators vanish and R_1 = C_1(F(0.6))
    assert r_correction_1d(t, cantor, 0.6, 1) == pytest.approx(2.2, abs=1e-12)
    assert r_correction_1d(t, cantor, 0.6, 0) == 1


def test_extinct_child_contributes_nothing():
    m = line_model([(0.5, [(1 / 3, 0)]), (0.5, [(1 / 3, 0), (1 / 3, 2 / 3)])], name="thin")
    for rep in range(100):
        t = sample_tree(m, 5, rep, Resolution(1e-3))
        if len(t.children(0)) == 1:
            cover = leaf_cover_1d(t, m)
            whole = cover.union().curvatures_at([0.1])[1][0]
            assert r_correction_1d(t, m, 0.1, 1, eta=0.1) == pytest.approx(0.0, abs=1e-12)
            assert whole > 0
            return
    pytest.fail("no single-child root found")


def test_resolution_gate(cantor):
    t = sample_tree(cantor, 0, 0, Resolution(1e-2))
    with pytest.raises(ResolutionTooCoarse):
        r_correction_1d(t, cantor, 0.1, 1)
