import io
import math

import numpy as np
import pytest

from eqforge.errors import RefinementBlowup
from eqforge.leaf import (
    LeafSegment,
    check_no_hidden_wraps,
    curve_points,
    image_arclengths,
    leaf_arclength,
    leaf_dn,
    pushforward_leaf,
    seed_leaf,
    write_leaf_csv,
)
from eqforge.systems import _touches_disk, apply, lift_apply, lift_apply_inverse, torus_distance, wrap01

GOLDEN = (1 + math.sqrt(5)) / 2
EU = np.array([1.0, GOLDEN - 1]) / math.hypot(1.0, GOLDEN - 1)


def test_cat_seed_example(cat):
    L = seed_leaf(cat, (0.5, 0.5), 0.3, 2.5e-5)
    np.testing.assert_allclose(L.lifts[0], np.array([0.5, 0.5]) - 0.3 * EU, atol=1e-12)
    np.testing.assert_allclose(L.lifts[-1], np.array([0.5, 0.5]) + 0.3 * EU, atol=1e-12)
    assert leaf_arclength(L) == pytest.approx(0.6, abs=1e-9)
    assert L.arclen[0] == 0.0
    assert len(L) >= 20000
    assert np.max(np.diff(L.arclen)) <= 2.5e-5 * (1 + 1e-9)
    assert check_no_hidden_wraps(L) <= 1e-9
    assert L.chart_anchor == (0, 0)


@pytest.mark.parametrize("delta", [0.05, 0.1, 0.3, 0.45])
def test_leaf_ball_length(cat, katok, delta, rng):
    for sys in (cat, katok):
        x = rng.random(2)
        L = seed_leaf(sys, x, delta, delta / 20)
        assert 2 * delta * (1 - 1e-6) <= leaf_arclength(L) <= 2 * delta * (1 + 1e-6)
        assert np.max(np.diff(L.arclen)) <= delta / 20 * (1 + 1e-9)
        assert check_no_hidden_wraps(L) <= 1e-9


def test_katok_seed_contains_base(katok):
    x = np.array([0.05, 0.02])
    L = seed_leaf(katok, x, 0.3, 1e-3)
    c = int(np.argmin(np.abs(L.params)))
    assert L.params[c] == 0.0
    assert np.linalg.norm(L.lifts[c] - x) <= 1e-6
    assert L.arclen[c] == pytest.approx(0.3, abs=1e-9)


def test_katok_seed_off_disk_matches_cat(cat, katok, rng):
    # find a base point whose germ history avoids the slowdown region entirely
    for x in rng.random((400, 2)):
        K = seed_leaf(katok, x, 0.05, 1e-3)
        pts = K.origin + np.linspace(-1e-3, 1e-3, 50)[:, None] * K.direction
        q, clean = pts, True
        for _ in range(K.depth + 30):
            s = (q - np.floor(q + 0.5)) @ katok.P_inv.T
            if np.any(_touches_disk(s, katok.lambda_u, katok.katok_r0**2, False)):
                clean = False
                break
            q = lift_apply_inverse(katok, q)
        q = pts
        for _ in range(K.depth):
            s = (q - np.floor(q + 0.5)) @ katok.P_inv.T
            if np.any(_touches_disk(s, katok.lambda_u, katok.katok_r0**2, True)):
                clean = False
            q = lift_apply(katok, q)
        if clean:
            break
    else:
        pytest.fail("no clean base point found")
    C = seed_leaf(cat, x, 0.05, 1e-3)
    # every Katok sample lies on the straight cat segment, with matching ends
    rel = K.lifts - x
    off_line = np.abs(rel[:, 0] * EU[1] - rel[:, 1] * EU[0])
    assert np.max(off_line) <= 1e-6
    np.testing.assert_allclose(K.lifts[[0, -1]], C.lifts[[0, -1]], atol=1e-6)


def test_pushforward_identity_and_growth(cat, cat_leaf):
    assert pushforward_leaf(cat, cat_leaf, 0, 0.01) is cat_leaf
    for n in (1, 5, 9):
        img = pushforward_leaf(cat, cat_leaf, n, 0.01)
        ratio = leaf_arclength(img) / leaf_arclength(cat_leaf)
        assert ratio == pytest.approx(cat.lambda_u**n, rel=1e-6)
        assert np.max(np.linalg.norm(np.diff(img.lifts, axis=0), axis=1)) <= 0.01


def test_pushforward_spacing_katok(katok):
    L = seed_leaf(katok, (0.02, 0.03), 0.1, 1e-3)
    img = pushforward_leaf(katok, L, 3, 0.005)
    assert np.max(np.linalg.norm(np.diff(img.lifts, axis=0), axis=1)) <= 0.005
    assert np.all(np.diff(img.arclen) > 0)


def test_refinement_consistency(cat, cat_leaf):
    for n in (4, 8):
        a = leaf_arclength(pushforward_leaf(cat, cat_leaf, n, 0.02))
        b = leaf_arclength(pushforward_leaf(cat, cat_leaf, n, 0.01))
        assert b >= a * (1 - 1e-12)
        assert abs(b - a) / a <= 1e-6


def test_refinement_monotone_katok(katok):
    L = seed_leaf(katok, (0.9, 0.05), 0.1, 1e-3)
    a = leaf_arclength(pushforward_leaf(katok, L, 3, 0.02))
    b = leaf_arclength(pushforward_leaf(katok, L, 3, 0.01))
    assert b >= a * (1 - 1e-12)


@pytest.mark.parametrize("kind", ["cat", "katok"])
def test_leaf_invariance(kind, cat, katok):
    sys = cat if kind == "cat" else katok
    L = seed_leaf(sys, (0.3, 0.8), 0.1, 1e-3)
    img = pushforward_leaf(sys, L, 2, 0.01)
    idx = np.searchsorted(img.params, L.params)
    np.testing.assert_array_equal(img.params[idx], L.params)
    direct = apply(sys, apply(sys, wrap01(L.lifts)))
    assert np.max(torus_distance(wrap01(img.lifts[idx]), direct)) <= 1e-6
    # inserted samples are exact curve points
    exact = curve_points(sys, L, img.params, depth=img.depth)
    np.testing.assert_allclose(img.lifts, exact, atol=1e-12)


def test_leaf_dn_examples(cat, cat_leaf):
    assert leaf_dn(cat, cat_leaf, 10, 10, 5) == 0.0
    sep = cat_leaf.arclen[40] - cat_leaf.arclen[10]
    assert leaf_dn(cat, cat_leaf, 10, 40, 1) == pytest.approx(sep, rel=1e-12)
    for n in (2, 6, 10):
        assert leaf_dn(cat, cat_leaf, 10, 40, n) == pytest.approx(cat.lambda_u**(n - 1) * sep,
                                                                 rel=1e-6)


def test_leaf_dn_monotone(cat, cat_leaf, rng):
    tab = image_arclengths(cat, cat_leaf, 8)
    for i, j in rng.integers(0, len(cat_leaf), size=(10, 2)):
        sep = np.abs(tab[:, j] - tab[:, i])
        assert np.all(np.diff(np.maximum.accumulate(sep)) >= 0)
        assert np.all(np.diff(sep) >= -1e-12)


def test_refinement_cap(cat, cat_leaf):
    with pytest.raises(RefinementBlowup):
        pushforward_leaf(cat, cat_leaf, 10, 0.01, cap=10_000)


def test_arclength_must_increase(cat_leaf):
    with pytest.raises(AssertionError):
        LeafSegment(base=cat_leaf.base, radius=0.3, params=np.array([0.0, 0.0]),
                    lifts=np.zeros((2, 2)), arclen=np.array([0.0, 0.0]), chart_anchor=(0, 0),
                    origin=np.zeros(2), direction=EU, depth=0)


def test_seed_rejects_bad_arguments(cat):
    with pytest.raises(ValueError):
        seed_leaf(cat, (0.5, 0.5), 0.6, 0.01)
    with pytest.raises(ValueError):
        seed_leaf(cat, (0.5, 0.5), 0.3, 0.1)


def test_leaf_csv(cat):
    L = seed_leaf(cat, (0.9, 0.9), 0.1, 0.01)
    buf = io.StringIO()
    write_leaf_csv(L, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "arclen,x,y"
    assert len(lines) == len(L) + 1
    vals = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    assert np.all((vals[:, 1:] >= 0) & (vals[:, 1:] < 1))
    np.testing.assert_array_equal(vals[:, 0], L.arclen)
