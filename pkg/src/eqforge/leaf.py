"""Unstable leaf segments: seeding, pushforward with refinement, arclength, d_n.

A leaf is stored as an exact image of a straight generator line
``origin + t * direction`` under ``depth`` applications of the lifted map.  Every
sample keeps its generator parameter ``t``, so refinement inserts genuine curve
points (bisect ``t``, map forward) instead of interpolating, and the images of
the original samples can always be located on later image curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cocycle import unstable_direction
from .errors import RefinementBlowup, SeedFailure
from .systems import CAT, SystemSpec, apply_inverse, lift_apply, torus_distance, wrap01

SAMPLE_CAP = 10**7
GERM_HALF_LENGTH = 1e-3


@dataclass(frozen=True, eq=False)
class LeafSegment:
    base: np.ndarray
    radius: float
    params: np.ndarray
    lifts: np.ndarray
    arclen: np.ndarray
    chart_anchor: tuple[int, int]
    origin: np.ndarray
    direction: np.ndarray
    depth: int

    def __post_init__(self):
        if not np.all(np.diff(self.arclen) > 0):
            raise AssertionError("leaf arclength parameters must strictly increase")

    def __len__(self):
        return self.params.shape[0]

    @property
    def samples(self):
        """(lift, arclen) pairs in curve order."""
        return list(zip(self.lifts, self.arclen))

    def projected(self) -> np.ndarray:
        return wrap01(self.lifts)

    def midpoint_params(self) -> np.ndarray:
        return 0.5 * (self.params[1:] + self.params[:-1])

    def spacings(self) -> np.ndarray:
        return np.diff(self.arclen)


def polyline_arclength(lifts: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(lifts, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def curve_points(sys: SystemSpec, leaf: LeafSegment, t, depth: int | None = None) -> np.ndarray:
    """Exact curve points (lifts) at generator parameters ``t``."""
    depth = leaf.depth if depth is None else depth
    t = np.asarray(t, dtype=float)
    pts = leaf.origin + t[..., None] * leaf.direction
    for _ in range(depth):
        pts = lift_apply(sys, pts)
    return pts


def _generator_points(sys, origin, direction, t, depth):
    pts = origin + np.asarray(t, dtype=float)[..., None] * direction
    for _ in range(depth):
        pts = lift_apply(sys, pts)
    return pts


def _refine(sys, params, lifts, origin, direction, depth, tol, cap):
    while True:
        gaps = np.linalg.norm(np.diff(lifts, axis=0), axis=1)
        bad = np.nonzero(gaps > tol)[0]
        if bad.size == 0:
            return params, lifts
        if params.shape[0] + bad.size > cap:
            raise RefinementBlowup(
                f"leaf refinement needs more than {cap} samples (tol={tol:g})")
        tm = 0.5 * (params[bad] + params[bad + 1])
        if np.any((tm <= params[bad]) | (tm >= params[bad + 1])):
            raise RefinementBlowup("generator parameters exhausted floating-point resolution")
        new = _generator_points(sys, origin, direction, tm, depth)
        params = np.insert(params, bad + 1, tm)
        lifts = np.insert(lifts, bad + 1, new, axis=0)


def _make_leaf(base, radius, params, lifts, origin, direction, depth):
    anchor = np.floor(lifts[np.argmin(np.abs(params))])
    return LeafSegment(
        base=wrap01(base), radius=float(radius), params=params, lifts=lifts,
        arclen=polyline_arclength(lifts), chart_anchor=(int(anchor[0]), int(anchor[1])),
        origin=origin, direction=direction, depth=depth)


def seed_leaf(sys: SystemSpec, x, delta: float, max_spacing: float,
              back_steps: int | None = None) -> LeafSegment:
    """The leaf ball W^u(x, delta) sampled with spacing <= max_spacing.

    For the linear map this is the straight segment ``x +- delta e_u``.  For the
    Katok map a short germ along E^u at f^-m(x) is grown forward m steps and
    trimmed to leaf radius delta around x.
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 0.5)")
    if not 0.0 < max_spacing <= delta / 10:
        raise ValueError("max_spacing must lie in (0, delta/10]")
    x = wrap01(x)
    if sys.kind == CAT:
        n = int(math.ceil(2 * delta / max_spacing)) + 1
        params = np.linspace(-delta, delta, n)
        e_u = sys.e_u
        lifts = x + params[:, None] * e_u
        return _make_leaf(x, delta, params, lifts, x.copy(), e_u, 0)
    return _seed_germ(sys, x, delta, max_spacing, back_steps)


def _seed_germ(sys, x, delta, max_spacing, back_steps):
    m0 = max(1, int(math.ceil(math.log(delta / GERM_HALF_LENGTH) / math.log(sys.lambda_u))))
    for m in range(m0, m0 + 12):
        y = x
        for _ in range(m):
            y = apply_inverse(sys, y)
        u = unstable_direction(sys, y, back_steps).vector
        # choose the lift of y whose m-th image lands on the lift x of the base
        end = _generator_points(sys, y, u, np.zeros(1), m)[0]
        shift = np.round(end - x)
        a_inv_m = np.linalg.matrix_power(np.rint(sys.A_inv).astype(np.int64), m)
        origin = y - a_inv_m @ shift
        params = np.linspace(-GERM_HALF_LENGTH, GERM_HALF_LENGTH, 3)
        lifts = origin + params[:, None] * u
        for d in range(1, m + 1):
            lifts = lift_apply(sys, lifts)
            params, lifts = _refine(sys, params, lifts, origin, u, d, max_spacing, SAMPLE_CAP)
        center = int(np.nonzero(params == 0.0)[0][0])
        if np.linalg.norm(lifts[center] - x) > 1e-6:
            raise SeedFailure(f"germ image misses the base point by "
                              f"{np.linalg.norm(lifts[center] - x):.3g}")
        arc = polyline_arclength(lifts)
        a0 = arc[center]
        if a0 < delta or arc[-1] - a0 < delta:
            continue
        return _trim(sys, x, delta, params, lifts, arc, center, origin, u, m)
    raise SeedFailure("germ did not grow to the requested leaf radius")


def _bisect(fn, lo, hi, iters=200):
    flo = fn(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _trim(sys, x, delta, params, lifts, arc, center, origin, u, depth):
    a0 = arc[center]
    pt = lambda t: _generator_points(sys, origin, u, np.array([t]), depth)[0]

    hi = int(np.searchsorted(arc, a0 + delta, side="left"))
    t_hi = _bisect(lambda t: arc[hi - 1] - a0 + np.linalg.norm(pt(t) - lifts[hi - 1]) - delta,
                   params[hi - 1], params[hi])
    lo = int(np.searchsorted(arc, a0 - delta, side="right")) - 1
    t_lo = _bisect(lambda t: a0 - arc[lo + 1] + np.linalg.norm(lifts[lo + 1] - pt(t)) - delta,
                   params[lo], params[lo + 1])
    if t_lo >= params[lo + 1] or t_hi <= params[hi - 1]:
        raise SeedFailure("could not locate the leaf-ball endpoints")
    keep = slice(lo + 1, hi)
    new_params = np.concatenate([[t_lo], params[keep], [t_hi]])
    new_lifts = np.concatenate([pt(t_lo)[None], lifts[keep], pt(t_hi)[None]])
    return _make_leaf(x, delta, new_params, new_lifts, origin, u, depth)


def pushforward_leaf(sys: SystemSpec, leaf: LeafSegment, steps: int, refine_tol: float,
                     cap: int = SAMPLE_CAP) -> LeafSegment:
    """f^steps of the leaf, refined so adjacent image samples are <= refine_tol apart."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if refine_tol <= 0:
        raise ValueError("refine_tol must be > 0")
    params, lifts, depth = leaf.params, leaf.lifts, leaf.depth
    base = leaf.base
    for _ in range(steps):
        lifts = lift_apply(sys, lifts)
        depth += 1
        params, lifts = _refine(sys, params, lifts, leaf.origin, leaf.direction, depth,
                                refine_tol, cap)
        base = wrap01(lift_apply(sys, base))
    if steps == 0:
        return leaf
    anchor = np.floor(_generator_points(sys, leaf.origin, leaf.direction, np.zeros(1), depth)[0])
    return replace(leaf, base=base, params=params, lifts=lifts,
                   arclen=polyline_arclength(lifts), depth=depth,
                   chart_anchor=(int(anchor[0]), int(anchor[1])))


def leaf_arclength(leaf: LeafSegment) -> float:
    return float(leaf.arclen[-1])


def image_arclengths(sys: SystemSpec, leaf: LeafSegment, n: int, refine_tol: float = 0.01,
                     cap: int = SAMPLE_CAP) -> np.ndarray:
    """Arclength positions of the original samples on the image curves f^m(leaf), m < n."""
    table = np.empty((n, len(leaf)))
    cur = leaf
    for m in range(n):
        if m:
            cur = pushforward_leaf(sys, cur, 1, refine_tol, cap)
        idx = np.searchsorted(cur.params, leaf.params)
        table[m] = cur.arclen[idx]
    return table


def leaf_dn(sys: SystemSpec, leaf: LeafSegment, i: int, j: int, n: int,
            refine_tol: float = 0.01) -> float:
    """Leafwise Bowen distance: max over m < n of the image arclength separation."""
    if i == j:
        return 0.0
    tab = image_arclengths(sys, leaf, n, refine_tol)
    return float(np.max(np.abs(tab[:, j] - tab[:, i])))


def check_no_hidden_wraps(leaf: LeafSegment, tol: float = 1e-9) -> float:
    """Largest disagreement between lift spacing and torus spacing of neighbours."""
    proj = leaf.projected()
    lift_d = np.linalg.norm(np.diff(leaf.lifts, axis=0), axis=1)
    torus_d = torus_distance(proj[1:], proj[:-1])
    return float(np.max(np.abs(lift_d - torus_d), initial=0.0))


def write_leaf_csv(leaf: LeafSegment, fh) -> None:
    proj = leaf.projected()
    fh.write("arclen,x,y\n")
    for s, (px, py) in zip(leaf.arclen, proj):
        fh.write(f"{float(s)!r},{float(px)!r},{float(py)!r}\n")
