import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eqforge.cocycle import Constant, Sum, TGeometric, TrigPoly, Zero
from eqforge.errors import NonFiniteWeight
from eqforge.measures import (
    EmpiricalMeasure,
    TestDictionary,
    best_convex_fit,
    cesaro_average,
    dirac,
    fourier_discrepancy,
    haar_cloud,
    integrate,
    integrate_function,
    invariance_defect,
    leaf_midpoints,
    leaf_orbit,
    mass_in_ball,
    mixture,
    pushforward_measure,
    weighted_leaf_measure,
    write_fourier_csv,
    write_measure_csv,
)
from eqforge.systems import apply

TRIG = TrigPoly({(1, 0): 0.3, (0, 1): 0.2})


def _random_measure(rng, n=50):
    w = rng.random(n)
    return EmpiricalMeasure(rng.random((n, 2)), w / w.sum())


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 2)), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros((2, 2)), np.array([1.5, -0.5]))


def test_dictionary():
    d = TestDictionary(3)
    e = d.entries
    assert len(e) == 49
    assert {tuple(k) for k in e} == {tuple(-k) for k in e}
    assert (0, 0) in {tuple(k) for k in e}
    assert len(d.nontrivial) == 48
    with pytest.raises(ValueError):
        TestDictionary(0)


def test_integrate_examples(rng):
    m = _random_measure(rng)
    assert integrate(m, (0, 0)) == 1
    for k in [(1, 0), (3, -2), (-4, 4)]:
        assert integrate(dirac(), k) == pytest.approx(1.0, abs=1e-15)


def test_integrate_uniform_grid():
    assert abs(integrate(haar_cloud(1000), (1, 0))) <= 1e-9


def test_fourier_discrepancy_examples(rng):
    m = _random_measure(rng)
    assert fourier_discrepancy(m, m) == 0.0
    assert fourier_discrepancy(dirac(), haar_cloud(), kmax=1) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_discrepancy_pseudometric(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_measure(rng, 20) for _ in range(3))
    dab, dba = fourier_discrepancy(a, b, 2), fourier_discrepancy(b, a, 2)
    assert dab == pytest.approx(dba, abs=1e-15)
    assert dab <= fourier_discrepancy(a, c, 2) + fourier_discrepancy(c, b, 2) + 1e-12
    assert dab >= 0


def test_mass_in_ball():
    assert mass_in_ball(dirac((0.3, 0.7)), (0.3, 0.7), 0.01) == 1.0
    h = haar_cloud()
    assert mass_in_ball(h, (0.0, 0.0), 0.1) == pytest.approx(math.pi * 0.01, abs=0.003)
    masses = [mass_in_ball(h, (0.2, 0.9), r) for r in (0.01, 0.05, 0.1, 0.3)]
    assert masses == sorted(masses)
    with pytest.raises(ValueError):
        mass_in_ball(h, (0, 0), 0.0)


def test_best_convex_fit():
    a, r = best_convex_fit(haar_cloud())
    assert a == pytest.approx(0.0, abs=0.01) and r <= 1e-6
    assert best_convex_fit(dirac()) == (1.0, 0.0)
    # synthetic half and half, brute-force scan as oracle
    m = mixture(dirac(), haar_cloud(), 0.5)
    a, r = best_convex_fit(m)
    assert a == pytest.approx(0.5, abs=0.01)
    ks = TestDictionary(4).nontrivial
    c = np.array([integrate(m, k) for k in ks])
    brute = min((np.max(np.abs(c - x / 1000)), x / 1000) for x in range(1001))
    assert (a, r) == (brute[1], pytest.approx(brute[0], abs=1e-15))


def test_pushforward(cat, katok, rng):
    m = _random_measure(rng, 200)
    assert pushforward_measure(cat, m, 0).points is m.points
    for sys in (cat, katok):
        p = pushforward_measure(sys, m, 1)
        assert np.array_equal(p.weights, m.weights)
        psi = lambda x: np.cos(2 * np.pi * (x[:, 0] + 2 * x[:, 1])) + x[:, 1] ** 2
        lhs = integrate_function(p, psi)
        rhs = integrate_function(m, lambda x: psi(apply(sys, x)))
        assert abs(lhs - rhs) <= 1e-12
    with pytest.raises(ValueError):
        pushforward_measure(cat, m, -1)


def test_weights_trivial_cases(cat, cat_leaf):
    _, ds, _ = leaf_midpoints(cat, cat_leaf)
    for phi, n in [(TGeometric(1.0), 12), (TRIG, 0), (Zero(), 0)]:
        lam = weighted_leaf_measure(cat, cat_leaf, phi, n)
        np.testing.assert_allclose(lam.weights, ds / ds.sum(), rtol=1e-12)


def test_weights_katok_tgeo_one(katok):
    from eqforge.leaf import seed_leaf
    L = seed_leaf(katok, (0.3, 0.6), 0.2, 2e-3)
    _, ds, _ = leaf_midpoints(katok, L)
    lam = weighted_leaf_measure(katok, L, TGeometric(1.0), 6)
    np.testing.assert_allclose(lam.weights, ds / ds.sum(), rtol=1e-10)


@pytest.mark.parametrize("c", [-3.0, 0.7, 25.0])
def test_shift_invariance_bitwise(cat, cat_leaf, c):
    a = weighted_leaf_measure(cat, cat_leaf, TRIG, 8)
    b = weighted_leaf_measure(cat, cat_leaf, Sum((TRIG, Constant(c))), 8)
    assert np.array_equal(a.weights, b.weights)
    assert np.array_equal(a.points, b.points)


def test_cesaro_structure(cat, cat_leaf):
    one = cesaro_average(cat, cat_leaf, TRIG, 1)
    lam = weighted_leaf_measure(cat, cat_leaf, TRIG, 1)
    np.testing.assert_array_equal(one.points, lam.points)
    np.testing.assert_allclose(one.weights, lam.weights, rtol=1e-14)
    mu = cesaro_average(cat, cat_leaf, TRIG, 5)
    assert len(mu) == 5 * len(lam)
    assert abs(mu.weights.sum() - 1.0) <= 1e-12
    with pytest.raises(ValueError):
        cesaro_average(cat, cat_leaf, TRIG, 0)


@pytest.mark.parametrize("kind", ["cat", "katok"])
def test_invariance_defect_bound(kind, cat, katok):
    from eqforge.leaf import seed_leaf
    sys = cat if kind == "cat" else katok
    leaf = seed_leaf(sys, (0.5, 0.5), 0.2, 2e-3)
    orbit = leaf_orbit(sys, leaf, TRIG, 12)
    for n in (1, 4, 12):
        for k in TestDictionary(4).nontrivial:
            assert invariance_defect(orbit, n, k) <= 2.0 / n + 1e-12


def test_cat_tgeo_discrepancy_decreases(cat):
    from eqforge.leaf import seed_leaf
    leaf = seed_leaf(cat, (0.5, 0.5), 0.3, 1e-4)
    haar = haar_cloud()
    for t in (0.0, 0.5, 1.0):
        orbit = leaf_orbit(cat, leaf, TGeometric(t), 30)
        d = [fourier_discrepancy(orbit.cesaro(n), haar) for n in (10, 20, 30)]
        assert d[0] > d[1] > d[2]


def test_workers_bitwise(cat, cat_leaf):
    mu = cesaro_average(cat, cat_leaf, TRIG, 60)
    assert len(mu) > 4 * (1 << 15)
    for k in [(1, 0), (2, -3), (4, 4)]:
        a = integrate(mu, k, workers=1)
        for w in (2, 4, 7):
            assert integrate(mu, k, workers=w) == a


def test_adaptive_refinement_noop_on_cat(cat, cat_leaf):
    a = leaf_orbit(cat, cat_leaf, TRIG, 10)
    b = leaf_orbit(cat, cat_leaf, TRIG, 10, max_log_jump=2.0)
    assert np.array_equal(a.log_ds, b.log_ds)
    assert np.array_equal(a.birkhoff, b.birkhoff)


def test_adaptive_refinement_resolves_density(cat, cat_leaf):
    # a steep potential forces splitting; the refined measure keeps mass 1
    steep = TrigPoly({(1, 0): 5.0})
    a = leaf_orbit(cat, cat_leaf, steep, 8)
    b = leaf_orbit(cat, cat_leaf, steep, 8, max_log_jump=1.0)
    assert b.log_ds.shape[0] > a.log_ds.shape[0]
    w = b.log_ds[None, :] + b.birkhoff
    heavy = w[8] >= w[8].max() - 30
    assert np.all(np.abs(np.diff(b.birkhoff[8]))[heavy[1:] & heavy[:-1]] <= 1.0 + 1e-12)
    assert abs(b.leaf_measure(8).weights.sum() - 1) <= 1e-12


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nonfinite_weight(cat, cat_leaf):
    with pytest.raises(NonFiniteWeight):
        weighted_leaf_measure(cat, cat_leaf, TrigPoly({(1, 0): np.inf}), 2)


def test_csv_writers(rng):
    m = _random_measure(rng, 5)
    buf = io.StringIO()
    write_measure_csv(m, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "x,y,weight" and len(lines) == 6
    buf = io.StringIO()
    write_fourier_csv(m, buf, kmax=2)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "kx,ky,re,im,abs" and len(lines) == 26
    assert lines[13].startswith("0,0,1.0,0.0,1.0")
