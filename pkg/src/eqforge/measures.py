"""Weighted leaf measures, their pushforwards and Cesaro averages.

The measure lambda_n lives on a leaf segment with density proportional to
exp(S_n(phi - Phi^u)) against leaf arclength, discretised by the midpoint rule.
Its pushforwards are obtained by transporting the quadrature atoms, so a single
orbit of the midpoints of length n_max serves every n <= n_max.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cocycle import Potential, potential_orbit
from .errors import NonFiniteWeight, RefinementBlowup
from .leaf import LeafSegment, curve_points
from .systems import CAT, SystemSpec, apply, torus_distance, wrap01

CHUNK = 1 << 15
ALPHA_STEP = 0.001


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 1 or self.points.shape != (w.shape[0], 2):
            raise ValueError("points must be (N, 2) and weights (N,)")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(_pairwise_sum(w) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")

    def __len__(self):
        return self.weights.shape[0]

    @property
    def atoms(self):
        return list(zip(map(tuple, self.points), self.weights))


@dataclass(frozen=True)
class TestDictionary:
    """Integer frequencies k with max-norm <= kmax."""

    __test__ = False
    kmax: int

    def __post_init__(self):
        if self.kmax < 1:
            raise ValueError("kmax must be >= 1")

    @property
    def entries(self) -> np.ndarray:
        r = np.arange(-self.kmax, self.kmax + 1)
        kx, ky = np.meshgrid(r, r, indexing="ij")
        return np.stack([kx.ravel(), ky.ravel()], axis=1)

    @property
    def nontrivial(self) -> np.ndarray:
        e = self.entries
        return e[np.any(e != 0, axis=1)]


# ---------------------------------------------------------------------------
# deterministic reductions


def _pairwise_sum(values: np.ndarray, workers: int = 1):
    """Sum in fixed chunks combined by a fixed binary tree.

    The chunking depends only on the length, so the result does not depend
    on how many workers evaluate the chunks.
    """
    n = values.shape[0]
    if n == 0:
        return values.dtype.type(0)
    bounds = range(0, n, CHUNK)
    if workers > 1 and n > CHUNK:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda a: np.sum(values[a:a + CHUNK]), bounds))
    else:
        parts = [np.sum(values[a:a + CHUNK]) for a in bounds]
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _normalize_log_weights(logw: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(logw)):
        raise NonFiniteWeight("leaf measure exponent is not finite")
    w = np.exp(logw - np.max(logw))
    return w / _pairwise_sum(w)


# ---------------------------------------------------------------------------
# leaf measures


@dataclass
class LeafOrbit:
    """Orbit of the quadrature midpoints of a leaf.

    points[k] = f^k(midpoints) for k <= n_max; birkhoff[k] = S_k(phi - Phi^u)
    with the constant part of phi dropped (it cancels in the normalisation).
    """

    points: np.ndarray
    log_ds: np.ndarray
    birkhoff: np.ndarray

    @property
    def n_max(self) -> int:
        return self.points.shape[0] - 1

    def log_weights(self, n: int) -> np.ndarray:
        return self.log_ds + self.birkhoff[n]

    def leaf_measure(self, n: int) -> EmpiricalMeasure:
        self._check(n)
        return EmpiricalMeasure(self.points[0], _normalize_log_weights(self.log_weights(n)))

    def cesaro(self, n: int) -> EmpiricalMeasure:
        self._check(n)
        if n < 1:
            raise ValueError("n must be >= 1")
        w = _normalize_log_weights(self.log_weights(n))
        pts = self.points[:n].reshape(-1, 2)
        weights = np.tile(w / n, n)
        return EmpiricalMeasure(pts, weights / _pairwise_sum(weights))

    def _check(self, n):
        if not 0 <= n <= self.n_max:
            raise ValueError(f"n must lie in [0, {self.n_max}]")


def leaf_midpoints(sys: SystemSpec, leaf: LeafSegment):
    """Exact curve points at the parameter midpoints, with cell lengths and chord tangents."""
    if len(leaf) < 2:
        raise ValueError("leaf needs at least two samples")
    return _cells(sys, leaf, leaf.params, leaf.lifts)


def _cells(sys, leaf, params, lifts):
    mids = curve_points(sys, leaf, 0.5 * (params[1:] + params[:-1]))
    chords = np.diff(lifts, axis=0)
    ds = np.linalg.norm(chords, axis=1)
    return mids, ds, chords / ds[:, None]



def _cell_orbits(sys, phi, mids, tangents, n_max, back_steps):
    if sys.kind == CAT:
        u0 = np.broadcast_to(sys.e_u, mids.shape)
    elif back_steps:
        u0 = None
    else:
        u0 = tangents
    orb = potential_orbit(sys, mids, n_max, back_steps, geometric=True, u0=u0)
    incr = phi.variable()(orb.points[:n_max], orb.phi_u) - orb.phi_u
    birk = np.zeros((n_max + 1, mids.shape[0]))
    np.cumsum(incr, axis=0, out=birk[1:])
    return orb.points, birk


def leaf_orbit(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n_max: int,
               back_steps: int | None = None, max_log_jump: float | None = None,
               max_rounds: int = 80, cap: int = 10**6) -> LeafOrbit:
    """Transport the quadrature atoms n_max steps and accumulate S_k(phi - Phi^u).

    For the linear map E^u is the constant eigendirection.  Otherwise the
    tangent at a midpoint is the chord of its cell unless ``back_steps`` asks
    for a cocycle estimate instead.

    With ``max_log_jump`` set, cells carrying non-negligible weight whose log
    density differs from a neighbour's by more than that amount (for some
    k <= n_max) are bisected until the density is resolved.  This matters for
    potentials whose density concentrates on very short leaf pieces.
    """
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    params, lifts = leaf.params, leaf.lifts
    mids, ds, tangents = leaf_midpoints(sys, leaf)
    points, birk = _cell_orbits(sys, phi, mids, tangents, n_max, back_steps)
    if max_log_jump is not None:
        for _ in range(max_rounds):
            split = _cells_to_split(np.log(ds), birk, max_log_jump)
            if split.size == 0:
                break
            if params.shape[0] + 2 * split.size > cap:
                raise RefinementBlowup(f"density refinement needs more than {cap} samples")
            tm = 0.5 * (params[split] + params[split + 1])
            shift = np.arange(split.size)
            params = np.insert(params, split + 1, tm)
            lifts = np.insert(lifts, split + 1, curve_points(sys, leaf, tm), axis=0)
            # cell split[j] becomes cells split[j] + j and split[j] + j + 1
            new_cells = np.sort(np.concatenate([split + shift, split + shift + 1]))
            keep = np.ones(params.shape[0] - 1, dtype=bool)
            keep[new_cells] = False
            chords = np.diff(lifts, axis=0)
            ds2 = np.linalg.norm(chords, axis=1)
            m_new = curve_points(sys, leaf, 0.5 * (params[new_cells] + params[new_cells + 1]))
            p_new, b_new = _cell_orbits(sys, phi, m_new, chords[new_cells] / ds2[new_cells, None],
                                        n_max, back_steps)
            old = np.delete(np.arange(ds.shape[0]), split)
            pts = np.empty((n_max + 1, params.shape[0] - 1, 2))
            bb = np.empty((n_max + 1, params.shape[0] - 1))
            pts[:, keep], bb[:, keep] = points[:, old], birk[:, old]
            pts[:, new_cells], bb[:, new_cells] = p_new, b_new
            points, birk, ds = pts, bb, ds2
    return LeafOrbit(points, np.log(ds), birk)


def _cells_to_split(log_ds, birk, max_jump, negligible=30.0):
    dens = birk
    logw = log_ds[None, :] + birk
    heavy = logw >= np.max(logw, axis=1, keepdims=True) - negligible
    jump = np.zeros_like(dens)
    d = np.abs(np.diff(dens, axis=1))
    jump[:, 1:] = d
    jump[:, :-1] = np.maximum(jump[:, :-1], d)
    bad = np.any(heavy & (jump > max_jump), axis=0)
    return np.nonzero(bad)[0]


def weighted_leaf_measure(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int,
                          back_steps: int | None = None,
                          max_log_jump: float | None = None) -> EmpiricalMeasure:
    """lambda_n: midpoint atoms with weight proportional to ds * exp(S_n(phi - Phi^u))."""
    if n < 0:
        raise ValueError("n must be >= 0")
    return leaf_orbit(sys, leaf, phi, n, back_steps, max_log_jump).leaf_measure(n)


def pushforward_measure(sys: SystemSpec, m: EmpiricalMeasure, k: int) -> EmpiricalMeasure:
    if k < 0:
        raise ValueError("k must be >= 0")
    pts = m.points
    for _ in range(k):
        pts = apply(sys, pts)
    return EmpiricalMeasure(pts, m.weights)


def cesaro_average(sys: SystemSpec, leaf: LeafSegment, phi: Potential, n: int,
                   back_steps: int | None = None,
                   max_log_jump: float | None = None) -> EmpiricalMeasure:
    """mu_n = (1/n) sum_{k<n} f^k_* lambda_n."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return leaf_orbit(sys, leaf, phi, n, back_steps, max_log_jump).cesaro(n)


# ---------------------------------------------------------------------------
# reference measures


def haar_cloud(m: int = 256) -> EmpiricalMeasure:
    """Uniform m x m grid of cell centres; its characters vanish for 0 < |k| < m."""
    c = (np.arange(m) + 0.5) / m
    x, y = np.meshgrid(c, c, indexing="ij")
    pts = np.stack([x.ravel(), y.ravel()], axis=1)
    return EmpiricalMeasure(pts, np.full(m * m, 1.0 / (m * m)))


def dirac(point=(0.0, 0.0)) -> EmpiricalMeasure:
    return EmpiricalMeasure(wrap01(np.array([point], dtype=float)), np.ones(1))


def mixture(a: EmpiricalMeasure, b: EmpiricalMeasure, alpha: float) -> EmpiricalMeasure:
    """alpha * a + (1 - alpha) * b."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    w = np.concatenate([alpha * a.weights, (1.0 - alpha) * b.weights])
    return EmpiricalMeasure(np.concatenate([a.points, b.points]), w / _pairwise_sum(w))


# ---------------------------------------------------------------------------
# probes


def integrate(m: EmpiricalMeasure, k, workers: int = 1) -> complex:
    """Fourier coefficient sum_j w_j exp(2 pi i k . p_j)."""
    k1, k2 = int(k[0]), int(k[1])
    if k1 == 0 and k2 == 0:
        return complex(1.0, 0.0)
    phase = 2 * np.pi * (k1 * m.points[:, 0] + k2 * m.points[:, 1])
    re = _pairwise_sum(m.weights * np.cos(phase), workers)
    im = _pairwise_sum(m.weights * np.sin(phase), workers)
    return complex(float(re), float(im))


def integrate_function(m: EmpiricalMeasure, psi, workers: int = 1) -> float:
    return float(_pairwise_sum(m.weights * psi(m.points), workers))


def fourier_coefficients(m: EmpiricalMeasure, kmax: int = 4, workers: int = 1):
    """(ks, values) over the full dictionary, in a fixed order."""
    ks = TestDictionary(kmax).entries
    return ks, np.array([integrate(m, k, workers) for k in ks])


def fourier_discrepancy(m1: EmpiricalMeasure, m2: EmpiricalMeasure, kmax: int = 4,
                        workers: int = 1) -> float:
    ks = TestDictionary(kmax).nontrivial
    return float(max(abs(integrate(m1, k, workers) - integrate(m2, k, workers)) for k in ks))


def mass_in_ball(m: EmpiricalMeasure, center, r: float) -> float:
    if r <= 0:
        raise ValueError("r must be > 0")
    d = torus_distance(m.points, np.asarray(center, dtype=float))
    return float(_pairwise_sum(np.where(d <= r, m.weights, 0.0)))


def best_convex_fit(m: EmpiricalMeasure, kmax: int = 4, workers: int = 1):
    """Best alpha for m ~ alpha * delta_0 + (1 - alpha) * Haar in the character sup-norm."""
    ks = TestDictionary(kmax).nontrivial
    c = np.array([integrate(m, k, workers) for k in ks])
    alphas = np.round(np.arange(0, 1001) * ALPHA_STEP, 3)
    resid = np.max(np.abs(c[None, :] - alphas[:, None]), axis=1)
    i = int(np.argmin(resid))
    return float(alphas[i]), float(resid[i])


def invariance_defect(orbit: LeafOrbit, n: int, k, workers: int = 1) -> float:
    """|int psi o f dmu_n - int psi dmu_n| for the character psi = e_k."""
    mu = orbit.cesaro(n)
    shifted = EmpiricalMeasure(orbit.points[1:n + 1].reshape(-1, 2), mu.weights)
    return abs(integrate(shifted, k, workers) - integrate(mu, k, workers))


def write_measure_csv(m: EmpiricalMeasure, fh) -> None:
    fh.write("x,y,weight\n")
    for (px, py), w in zip(m.points, m.weights):
        fh.write(f"{float(px)!r},{float(py)!r},{float(w)!r}\n")


def write_fourier_csv(m: EmpiricalMeasure, fh, kmax: int = 4, workers: int = 1) -> None:
    ks, vals = fourier_coefficients(m, kmax, workers)
    fh.write("kx,ky,re,im,abs\n")
    for (kx, ky), v in zip(ks, vals):
        fh.write(f"{int(kx)},{int(ky)},{float(v.real)!r},{float(v.imag)!r},{float(abs(v))!r}\n")
