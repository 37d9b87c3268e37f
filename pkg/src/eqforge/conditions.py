"""Numerical checks of the contraction modulus (C2) and the covering time (C3).

Stable pairs are built backwards: two points a tiny distance apart along E^s
at time W are pulled back W steps, which spreads them along the stable leaf
while squeezing any unstable error.  Reading the backward orbits in reverse
gives forward trajectories of genuine stable pairs, something direct forward
iteration cannot provide because round-off grows along E^u.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cocycle import stable_direction
from .errors import RefinementBlowup
from .leaf import pushforward_leaf, seed_leaf
from .pressure import regression_slope
from .systems import SystemSpec, apply_with_jacobian, lift_apply_inverse, torus_distance, wrap01

LADDER = tuple(2.0**k for k in range(11))
BACKWARD_WINDOW = 20


@dataclass(frozen=True)
class ContractionReport:
    eps: float
    rows: tuple
    sample_count: int

    @property
    def ns(self):
        return np.array([r[0] for r in self.rows])

    @property
    def g_min(self):
        return np.array([r[1] for r in self.rows])


@dataclass(frozen=True)
class CoveringReport:
    """rows are (n, h, mesh); h is None when the image never became mesh-dense."""

    x: tuple
    delta: float
    mesh: float
    rows: tuple

    @property
    def covered(self) -> bool:
        return all(r[1] is not None for r in self.rows)


@dataclass(frozen=True)
class CheckResult:
    passed: bool
    value: float
    summary: str

    def __bool__(self):
        return self.passed


# ---------------------------------------------------------------------------
# (C2)


def _pull_back(sys, pts, steps):
    """Backward orbit, out[k] = f^-(steps-k)(pts), so out reads forward in time."""
    out = np.empty((steps + 1,) + pts.shape)
    out[steps] = pts
    q = pts
    for k in range(steps - 1, -1, -1):
        q = wrap01(lift_apply_inverse(sys, q))
        out[k] = q
    return out


def _stable_growth(sys, y, es, steps):
    """||Df^-steps e_s|| along the backward orbit of y."""
    growth = np.ones(y.shape[0])
    v = es.copy()
    q = y
    for _ in range(steps):
        q, dinv = lift_apply_inverse(sys, q, with_jacobian=True)
        q = wrap01(q)
        v = np.einsum("nij,nj->ni", dinv, v)
        nv = np.linalg.norm(v, axis=1)
        growth *= nv
        v /= nv[:, None]
    return growth


def _forward_stable_factors(sys, y, es, steps):
    """Per-step stable contraction factors along the forward orbit of y."""
    out = np.empty((steps, y.shape[0]))
    v = es.copy()
    q = y
    for k in range(steps):
        q, J = apply_with_jacobian(sys, q)
        v = np.einsum("nij,nj->ni", J, v)
        nv = np.linalg.norm(v, axis=1)
        out[k] = nv
        v /= nv[:, None]
    return out


def stable_pair_separations(sys: SystemSpec, eps: float, n_max: int, pairs: int,
                            seed: int = 0, window: int = BACKWARD_WINDOW):
    """Separations s[k, j] of sampled stable pairs for k = 0..n_max, with start targets.

    Every base point is paired at each ladder value g, with start separation
    calibrated to just under eps / g.
    """
    rng = np.random.default_rng(seed)
    nbase = math.ceil(pairs / len(LADDER))
    w = min(window, n_max)
    ends = rng.random((nbase, 2))
    es = stable_direction(sys, ends).vector
    growth = _stable_growth(sys, ends, es, w)
    y_orb = _pull_back(sys, ends, w)
    tail = None
    if n_max > w:
        tail = _forward_stable_factors(sys, ends, es, n_max - w)
    seps, targets = [], []
    for g in LADDER:
        target = 0.999 * eps / g
        eta = target / growth
        for _ in range(2):
            z_orb = _pull_back(sys, ends + eta[:, None] * es, w)
            s0 = torus_distance(z_orb[0], y_orb[0])
            # secant correction on the (nearly linear) start separation
            eta = eta * target / s0
        z_orb = _pull_back(sys, ends + eta[:, None] * es, w)
        s = torus_distance(z_orb, y_orb)
        if tail is not None:
            ext = s[w] * np.cumprod(tail, axis=0)
            s = np.concatenate([s, ext], axis=0)
        seps.append(s)
        targets.append(np.full(nbase, target))
    return np.concatenate(seps, axis=1), np.concatenate(targets)


def estimate_contraction(sys: SystemSpec, eps: float, n_max: int, pairs: int = 1000,
                         seed: int = 0) -> ContractionReport:
    """g_min(n): smallest ladder g such that every pair starting within eps/g stays eps-close."""
    if not 0.0 < eps < 0.2:
        raise ValueError("eps must lie in (0, 0.2)")
    if pairs < 1000:
        raise ValueError("pairs must be >= 1000")
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    s, _ = stable_pair_separations(sys, eps, n_max, pairs, seed)
    start = s[0]
    running = np.maximum.accumulate(s, axis=0)
    rows = []
    for n in range(1, n_max + 1):
        g_min = math.inf
        for g in LADDER:
            sel = start <= eps / g
            if np.all(running[n, sel] <= eps):
                g_min = g
                break
        rows.append((n, g_min))
    return ContractionReport(eps, tuple(rows), s.shape[1])


def check_C2(report: ContractionReport, threshold: float = 0.01) -> CheckResult:
    """Subexponential modulus: slope of log g_min over the last half of the rows."""
    if len(report.rows) < 8:
        raise ValueError("report needs at least 8 rows")
    ns = report.ns
    g = report.g_min.astype(float)
    half = ns[len(ns) // 2:]
    lg = np.log(g[len(ns) // 2:])
    if not np.all(np.isfinite(lg)):
        return CheckResult(False, math.inf, "g_min exceeded the ladder")
    slope = regression_slope(half, lg)
    ok = slope <= threshold
    return CheckResult(ok, slope, f"slope of log g_min over n in [{half[0]}, {half[-1]}] "
                                  f"is {slope:.3g} (threshold {threshold})")


# ---------------------------------------------------------------------------
# (C3)


@njit(cache=True)
def _seg_box_dist2(px, py, qx, qy, x0, y0, x1, y1):
    """Squared distance between segment pq and the box [x0,x1] x [y0,y1]."""
    # Liang-Barsky clip: intersection means distance zero
    dx = qx - px
    dy = qy - py
    t0 = 0.0
    t1 = 1.0
    hit = True
    for k in range(4):
        if k == 0:
            p, q = -dx, px - x0
        elif k == 1:
            p, q = dx, x1 - px
        elif k == 2:
            p, q = -dy, py - y0
        else:
            p, q = dy, y1 - py
        if p == 0.0:
            if q < 0.0:
                hit = False
                break
        else:
            r = q / p
            if p < 0.0:
                if r > t1:
                    hit = False
                    break
                if r > t0:
                    t0 = r
            else:
                if r < t0:
                    hit = False
                    break
                if r < t1:
                    t1 = r
    if hit:
        return 0.0
    best = np.inf
    # endpoints to box
    for ex, ey in ((px, py), (qx, qy)):
        cx = min(max(ex, x0), x1)
        cy = min(max(ey, y0), y1)
        d = (ex - cx) ** 2 + (ey - cy) ** 2
        if d < best:
            best = d
    # box corners to segment
    ll = dx * dx + dy * dy
    for cx, cy in ((x0, y0), (x0, y1), (x1, y0), (x1, y1)):
        if ll > 0.0:
            t = ((cx - px) * dx + (cy - py) * dy) / ll
            t = min(max(t, 0.0), 1.0)
        else:
            t = 0.0
        d = (px + t * dx - cx) ** 2 + (py + t * dy - cy) ** 2
        if d < best:
            best = d
    return best


@njit(cache=True)
def _rasterize(lifts, g, radius, grid):
    h = 1.0 / g
    r2 = radius * radius
    for s in range(lifts.shape[0] - 1):
        px, py = lifts[s, 0], lifts[s, 1]
        qx, qy = lifts[s + 1, 0], lifts[s + 1, 1]
        i0 = int(np.floor((min(px, qx) - radius) * g))
        i1 = int(np.floor((max(px, qx) + radius) * g))
        j0 = int(np.floor((min(py, qy) - radius) * g))
        j1 = int(np.floor((max(py, qy) + radius) * g))
        for i in range(i0, i1 + 1):
            for j in range(j0, j1 + 1):
                if _seg_box_dist2(px, py, qx, qy, i * h, j * h, (i + 1) * h, (j + 1) * h) <= r2:
                    grid[i % g, j % g] = True


def occupancy(lifts: np.ndarray, mesh: float, radius: float | None = None) -> np.ndarray:
    """Cells of the round(1/mesh)^2 grid meeting the radius-tube around the polyline.

    radius=0 marks exactly the cells the polyline crosses.
    """
    g = max(1, int(round(1.0 / mesh)))
    radius = mesh if radius is None else radius
    grid = np.zeros((g, g), dtype=np.bool_)
    lifts = np.ascontiguousarray(np.atleast_2d(lifts), dtype=float)
    if lifts.shape[0] == 1:
        lifts = np.concatenate([lifts, lifts])
    _rasterize(lifts, g, float(radius), grid)
    return grid


def covering_time(sys: SystemSpec, x, delta: float, mesh: float, n_cap: int,
                  refine_tol: float = 0.01, max_spacing: float | None = None,
                  radius: float | None = None):
    """First h <= n_cap with f^h(W^u(x, delta)) mesh-dense, else None."""
    if not 0.0 < mesh < 0.1:
        raise ValueError("mesh must lie in (0, 0.1)")
    if n_cap < 1:
        raise ValueError("n_cap must be >= 1")
    tol = min(refine_tol, mesh / 2)
    leaf = seed_leaf(sys, x, delta, max_spacing or min(tol, delta / 10))
    for h in range(n_cap + 1):
        if h:
            try:
                leaf = pushforward_leaf(sys, leaf, 1, tol)
            except RefinementBlowup:
                return None
        if occupancy(leaf.lifts, mesh, radius).all():
            return h
    return None


def covering_report(sys: SystemSpec, x, delta: float, contraction: ContractionReport,
                    n_cap: int, refine_tol: float = 0.01, mesh_cap: float | None = None,
                    ns=None) -> CoveringReport:
    """Rows (n, h(mesh(n)), mesh(n)) with mesh(n) = eps / g_min(n), optionally capped."""
    cache = {}
    rows = []
    g_of = dict(contraction.rows)
    ns = sorted(g_of) if ns is None else ns
    for n in ns:
        mesh = contraction.eps / g_of[n]
        if mesh_cap is not None:
            mesh = min(mesh, mesh_cap)
        if mesh not in cache:
            cache[mesh] = covering_time(sys, x, delta, mesh, n_cap, refine_tol)
        rows.append((int(n), cache[mesh], mesh))
    base = min(r[2] for r in rows)
    return CoveringReport(tuple(map(float, wrap01(x))), float(delta), base, tuple(rows))


def check_C3(report: CoveringReport, n_probe: int, threshold: float = 0.2) -> CheckResult:
    """h(mesh(n))/n at the largest probed n <= n_probe."""
    rows = [r for r in report.rows if r[0] <= n_probe]
    if not rows:
        raise ValueError("report does not cover the probe range")
    n, h = rows[-1][0], rows[-1][1]
    if h is None:
        return CheckResult(False, math.inf, f"not covered within cap at n={n}")
    ratio = h / n
    return CheckResult(ratio <= threshold, ratio, f"h/n = {h}/{n} = {ratio:.3g} "
                                                  f"(threshold {threshold})")


def write_c2_csv(report: ContractionReport, result: CheckResult, fh) -> None:
    fh.write("n,g_min\n")
    for n, g in report.rows:
        fh.write(f"{n},{float(g)!r}\n")
    fh.write(f"# pass={str(bool(result)).lower()} slope={float(result.value)!r}\n")


def write_c3_csv(report: CoveringReport, result: CheckResult, fh) -> None:
    fh.write("n,h\n")
    for n, h, _ in report.rows:
        fh.write(f"{n},{'' if h is None else h}\n")
    fh.write(f"# pass={str(bool(result)).lower()} slope={float(result.value)!r}\n")
