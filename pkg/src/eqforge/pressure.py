"""Topological pressure estimators.

Three independent routes: the growth rate of the leaf-volume integral
Z_n = int exp(S_n(phi - Phi^u)) dlambda, greedy spanning/separated sets for the
leafwise Bowen metric, and an Ulam discretisation of the transfer operator
whose Perron data also give a reference Gibbs measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from numba import njit
from scipy.special import logsumexp

from .cocycle import Potential, geometric_potential, potential_orbit
from .errors import NoConvergence, NonFiniteWeight
from .leaf import LeafSegment, curve_points, polyline_arclength, pushforward_leaf, seed_leaf
from .measures import EmpiricalMeasure, LeafOrbit, leaf_orbit, _pairwise_sum
from .systems import CAT, SystemSpec, apply, lift_apply, wrap01


@dataclass(frozen=True)
class PressureEstimate:
    """log-partition rows with the regression-slope extrapolation over ``window``."""

    rows: tuple
    extrapolated: float
    window: tuple

    @classmethod
    def from_rows(cls, ns, log_partitions, window=None) -> "PressureEstimate":
        ns = [int(n) for n in ns]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("rows must be strictly increasing in n")
        logz = [float(z) for z in log_partitions]
        rows = tuple((n, z, z / n if n else math.nan) for n, z in zip(ns, logz))
        if window is None:
            window = (math.ceil(ns[-1] / 2), ns[-1])
        return cls(rows, _window_slope(rows, window), tuple(window))

    def recompute(self) -> float:
        return _window_slope(self.rows, self.window)

    @property
    def ns(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    @property
    def log_partitions(self) -> np.ndarray:
        return np.array([r[1] for r in self.rows])

    @property
    def final_running(self) -> float:
        return self.rows[-1][2]


def regression_slope(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        raise ValueError("need at least two points for a slope")
    xc = x - x.mean()
    return float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))


def _window_slope(rows, window) -> float:
    lo, hi = window
    sel = [(n, z) for n, z, _ in rows if lo <= n <= hi]
    return regression_slope([s[0] for s in sel], [s[1] for s in sel])


def write_pressure_csv(est: PressureEstimate, fh) -> None:
    fh.write("n,log_partition,running,extrapolated\n")
    for n, z, r in est.rows:
        fh.write(f"{n},{z!r},{r!r},{est.extrapolated!r}\n")


# ---------------------------------------------------------------------------
# leaf-volume integral


def _checked_logsumexp(values) -> float:
    if not np.all(np.isfinite(values)):
        raise NonFiniteWeight("partition exponent is not finite")
    return float(logsumexp(values))


def orbit_log_partitions(orbit: LeafOrbit, phi: Potential) -> np.ndarray:
    """log Z_n for n = 0..n_max from one transported midpoint orbit."""
    c = phi.constant
    return np.array([_checked_logsumexp(orbit.log_weights(n)) + n * c
                     for n in range(orbit.n_max + 1)])


def log_partition(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int,
                  back_steps: int | None = None) -> float:
    """log of the midpoint-rule value of int exp(S_n(phi - Phi^u)) over the leaf."""
    if n < 0:
        raise ValueError("n must be >= 0")
    orb = leaf_orbit(sys, leaf, phi, n, back_steps)
    return _checked_logsumexp(orb.log_weights(n)) + n * phi.constant


def pressure_integral(sys: SystemSpec, x, delta: float, phi: Potential, n_max: int,
                      back_steps: int | None = None, max_spacing: float = 2.5e-5,
                      leaf: LeafSegment | None = None) -> PressureEstimate:
    """Growth rate of log Z_n, rows n = 1..n_max, slope over [ceil(n_max/2), n_max]."""
    if n_max < 4:
        raise ValueError("n_max must be >= 4")
    if leaf is None:
        leaf = seed_leaf(sys, x, delta, max_spacing, back_steps)
    orb = leaf_orbit(sys, leaf, phi, n_max, back_steps)
    logz = orbit_log_partitions(orb, phi)
    ns = np.arange(1, n_max + 1)
    return PressureEstimate.from_rows(ns, logz[1:])


def change_of_variables_check(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int,
                              refine_tol: float = 0.05, back_steps: int | None = None) -> float:
    """Relative gap between the image-curve and leaf quadratures of the same integral.

    The left side integrates exp(S_n phi o f^-n) over the refined image curve
    (nodes at parameter midpoints, whose preimages are known exactly); the right
    side integrates exp(S_n(phi - Phi^u)) over the leaf itself.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        return 0.0
    img = pushforward_leaf(sys, leaf, n, refine_tol)
    log_ds_img = np.log(np.diff(img.arclen))
    pre = curve_points(sys, leaf, img.midpoint_params())
    s_img = _birkhoff_points(sys, phi, pre, n, back_steps, _tangents(img, leaf, sys))
    lhs = _checked_logsumexp(log_ds_img + s_img)
    rhs = _checked_logsumexp(leaf_orbit(sys, leaf, phi, n, back_steps).log_weights(n))
    return float(abs(math.expm1(lhs - rhs)))


def _tangents(img, leaf, sys):
    if sys.kind == CAT:
        return None
    pts = curve_points(sys, leaf, img.params)
    ch = np.diff(pts, axis=0)
    return ch / np.linalg.norm(ch, axis=1)[:, None]


def _birkhoff_points(sys, phi, pts, n, back_steps, tangents=None):
    """S_n of the non-constant part of phi at base points (lifts)."""
    var = phi.variable()
    if var.uses_geometric:
        u0 = np.broadcast_to(sys.e_u, pts.shape) if sys.kind == CAT else tangents
        orb = potential_orbit(sys, pts, n, back_steps, geometric=True, u0=u0)
        return np.sum(var(orb.points[:n], orb.phi_u), axis=0)
    orb = potential_orbit(sys, pts, n, geometric=False)
    return np.sum(var(orb.points[:n]), axis=0)


# ---------------------------------------------------------------------------
# spanning and separated sets


@njit(cache=True)
def _separated_walk(hi):
    out = np.empty(hi.shape[0], dtype=np.int64)
    k = 0
    c = 0
    while c < hi.shape[0]:
        out[k] = c
        k += 1
        c = hi[c] + 1
    return out[:k]


@njit(cache=True)
def _spanning_walk(lo, hi):
    out = np.empty(hi.shape[0], dtype=np.int64)
    k = 0
    u = 0
    n = hi.shape[0]
    c = 0
    while u < n:
        # farthest sample whose ball still reaches back to u
        if c < u:
            c = u
        while c + 1 < n and lo[c + 1] <= u:
            c += 1
        out[k] = c
        k += 1
        u = hi[c] + 1
    return out[:k]


def _cover_rows(sys, leaf, phi, eps, n_max, method, refine_tol, back_steps, cap=10**7):
    if eps <= 0:
        raise ValueError("epsilon must be > 0")
    if n_max < 1:
        raise ValueError("n must be >= 1")
    if method not in ("spanning", "separated"):
        raise ValueError(f"unknown covering method {method!r}")
    tol = min(refine_tol, eps / 4)
    if len(leaf) > 1:
        params = pushforward_leaf(sys, leaf, n_max - 1, tol, cap).params
    else:
        params = leaf.params
    lifts = curve_points(sys, leaf, params)
    npts = params.shape[0]
    var = phi.variable()
    phi_u = None
    if var.uses_geometric:
        if sys.kind == CAT:
            u0 = np.broadcast_to(sys.e_u, lifts.shape)
        elif npts > 1:
            g = np.gradient(lifts, axis=0)
            u0 = g / np.linalg.norm(g, axis=1)[:, None]
        else:
            u0 = None
        phi_u = potential_orbit(sys, lifts, n_max, back_steps, geometric=True, u0=u0).phi_u
    lo = np.zeros(npts, dtype=np.int64)
    hi = np.full(npts, npts - 1, dtype=np.int64)
    s = np.zeros(npts)
    logz = []
    for m in range(n_max):
        if m:
            lifts = lift_apply(sys, lifts)
        a = polyline_arclength(lifts)
        hi = np.minimum(hi, np.searchsorted(a, a + eps, side="right") - 1)
        lo = np.maximum(lo, np.searchsorted(a, a - eps, side="left"))
        s = s + var(wrap01(lifts), None if phi_u is None else phi_u[m])
        if method == "spanning":
            centers = _spanning_walk(lo, hi)
        else:
            centers = _separated_walk(hi)
        logz.append(_checked_logsumexp(s[centers]) + (m + 1) * phi.constant)
    return np.arange(1, n_max + 1), np.array(logz)


def pressure_spanning(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int, eps: float,
                      refine_tol: float = 0.01, back_steps: int | None = None) -> float:
    """(1/n) log sum over a greedy (n, eps) spanning set of exp(S_n phi)."""
    ns, logz = _cover_rows(sys, leaf, phi, eps, n, "spanning", refine_tol, back_steps)
    return float(logz[-1] / n)


def pressure_separated(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int, eps: float,
                       refine_tol: float = 0.01, back_steps: int | None = None) -> float:
    """(1/n) log sum over a greedy maximal (n, eps) separated set of exp(S_n phi)."""
    ns, logz = _cover_rows(sys, leaf, phi, eps, n, "separated", refine_tol, back_steps)
    return float(logz[-1] / n)


def covering_estimate(sys: SystemSpec, leaf: LeafSegment, phi: Potential, eps: float,
                      n_max: int, method: str = "spanning", refine_tol: float = 0.01,
                      back_steps: int | None = None) -> PressureEstimate:
    """Spanning or separated log-sums for n = 1..n_max with slope extrapolation."""
    ns, logz = _cover_rows(sys, leaf, phi, eps, n_max, method, refine_tol, back_steps)
    return PressureEstimate.from_rows(ns, logz)


# ---------------------------------------------------------------------------
# Ulam oracle


@dataclass
class UlamOracle:
    """Ulam transfer operator L = F diag(w) on a grid_n x grid_n partition.

    F holds the transition fractions (column j: where the samples of cell j
    land) and w_j = exp(phi_var(c_j) - Phi^u(c_j)).  The constant part of phi is
    kept aside so shifting phi shifts the pressure exactly.
    """

    grid_n: int
    samples_per_cell: int
    fractions: sp.csr_matrix
    weights: np.ndarray
    constant: float = 0.0
    pressure: float = math.nan
    gibbs: EmpiricalMeasure | None = None
    iterations: int = 0
    spectral_residual: float = math.inf
    eigenvalue: float = math.nan
    right: np.ndarray | None = field(default=None, repr=False)
    left: np.ndarray | None = field(default=None, repr=False)
    log_growth: list = field(default_factory=list, repr=False)

    @property
    def centers(self) -> np.ndarray:
        return _cell_centers(self.grid_n)

    def operator(self) -> sp.csr_matrix:
        return (self.fractions @ sp.diags(self.weights)).tocsr()


def _cell_centers(g):
    c = (np.arange(g) + 0.5) / g
    x, y = np.meshgrid(c, c, indexing="ij")
    return np.stack([x.ravel(), y.ravel()], axis=1)


def _cell_index(p, g):
    ij = np.minimum(np.floor(p * g).astype(np.int64), g - 1)
    return ij[:, 0] * g + ij[:, 1]


def ulam_build(sys: SystemSpec, phi: Potential, grid_n: int = 200, samples_per_cell: int = 64,
               back_steps: int | None = None) -> UlamOracle:
    """Transition fractions from a stratified s x s subgrid of every cell."""
    if grid_n < 32:
        raise ValueError("grid_n must be >= 32")
    s = math.isqrt(samples_per_cell)
    if s * s != samples_per_cell:
        raise ValueError("samples_per_cell must be a perfect square")
    g = grid_n
    ncell = g * g
    centers = _cell_centers(g)
    sub = (np.arange(s) + 0.5) / (s * g) - 0.5 / g
    ox, oy = np.meshgrid(sub, sub, indexing="ij")
    offsets = np.stack([ox.ravel(), oy.ravel()], axis=1)
    src = np.repeat(np.arange(ncell), samples_per_cell)
    cols, rows = [], []
    chunk = max(1, (1 << 20) // samples_per_cell)
    for a in range(0, ncell, chunk):
        c = centers[a:a + chunk]
        pts = wrap01((c[:, None, :] + offsets[None, :, :]).reshape(-1, 2))
        rows.append(_cell_index(apply(sys, pts), g))
    rows = np.concatenate(rows)
    data = np.full(rows.shape[0], 1.0 / samples_per_cell)
    frac = sp.coo_matrix((data, (rows, src)), shape=(ncell, ncell)).tocsr()
    frac.sum_duplicates()
    frac.sort_indices()
    if sys.kind == CAT:
        phi_u = np.full(ncell, -math.log(sys.lambda_u))
    else:
        phi_u = np.asarray(geometric_potential(sys, centers, back_steps))
    logw = phi.variable()(centers, phi_u) - phi_u
    if not np.all(np.isfinite(logw)):
        raise NonFiniteWeight("Ulam weights are not finite")
    return UlamOracle(g, samples_per_cell, frac, np.exp(logw), constant=phi.constant)


def _power(apply_op, n, iters, tol):
    v = np.full(n, 1.0 / n)
    resid = math.inf
    rho = math.nan
    history = []
    for it in range(1, iters + 1):
        y = apply_op(v)
        rho = float(_pairwise_sum(y))
        if not (np.isfinite(rho) and rho > 0):
            raise NoConvergence("power iteration lost positivity")
        history.append(math.log(rho))
        resid = float(_pairwise_sum(np.abs(y - rho * v))) / rho
        v = y / rho
        if resid <= tol:
            break
    return v, rho, resid, len(history), history


def ulam_pressure(oracle: UlamOracle, iters: int = 2000, tol: float = 1e-10) -> UlamOracle:
    """Perron eigenvalue and eigenvectors by power iteration from the all-ones vector."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    F = oracle.fractions
    Ft = F.T.tocsr()
    w = oracle.weights
    n = w.shape[0]
    h, rho, res_r, it_r, hist = _power(lambda v: F @ (w * v), n, iters, tol)
    ell, rho_l, res_l, it_l, _ = _power(lambda v: w * (Ft @ v), n, iters, tol)
    resid = max(res_r, res_l)
    if resid > tol:
        raise NoConvergence(f"Ulam power iteration residual {resid:.3g} > tol {tol:.3g} "
                            f"after {iters} iterations")
    dens = h * ell
    dens = dens / _pairwise_sum(dens)
    gibbs = EmpiricalMeasure(_cell_centers(oracle.grid_n), dens)
    oracle.eigenvalue = rho
    oracle.pressure = math.log(rho) + oracle.constant
    oracle.gibbs = gibbs
    oracle.iterations = max(it_r, it_l)
    oracle.spectral_residual = resid
    oracle.right = h
    oracle.left = ell
    oracle.log_growth = hist
    return oracle


def ulam_estimate(oracle: UlamOracle) -> PressureEstimate:
    """Rows log ||L^n 1||_1 (start vector of unit mass) for the completed power iteration."""
    if not oracle.log_growth:
        raise ValueError("run ulam_pressure first")
    logz = np.cumsum(oracle.log_growth) + oracle.constant * np.arange(1, len(oracle.log_growth) + 1)
    ns = np.arange(1, len(logz) + 1)
    if len(ns) < 2:
        return PressureEstimate(((1, float(logz[0]), float(logz[0])),), oracle.pressure, (1, 1))
    return PressureEstimate.from_rows(ns, logz)
