"""Torus phase space and the two concrete diffeomorphisms.

Points are numpy arrays with a trailing axis of length 2, so every map below
accepts a single point ``(2,)`` or a batch ``(N, 2)``.  Leaves work on lifts in
the universal cover (``lift_apply``); everything else on points reduced to
``[0, 1)^2``.

The Katok map is realized as a slowdown of the linear map near the origin.  In
eigen-coordinates ``s = (s1, s2)`` of the matrix the linear map is the time-one
map of the hyperbolic flow generated by the Hamiltonian ``L s1 s2`` with
``L = log(lambda_u)``.  Inside the disk ``|s| < r0`` the Hamiltonian is replaced
by ``L s1 s2 psi(s1^2 + s2^2)``; ``psi`` behaves like ``(u / r0^2)^alpha`` near
the origin, equals 1 outside the disk and is blended with a C^3 smoothstep in
between.  A Hamiltonian vector field is divergence free, so the time-one map
preserves area, and the axes stay invariant so the origin remains the only
fixed point of the perturbation, now neutral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numba import njit

from .errors import IntegratorDivergence, RangeError

CAT = "cat"
KATOK = "katok"

# psi is exactly (u/r0^2)^alpha below this fraction of r0^2
_BLEND_START = 0.25


@dataclass(frozen=True)
class SystemSpec:
    """A torus diffeomorphism: linear Anosov (``kind="cat"``) or Katok slowdown."""

    kind: str = CAT
    matrix: tuple[int, int, int, int] = (2, 1, 1, 1)
    katok_r0: float = 0.1
    katok_alpha: float = 0.5
    ode_step: float = 1e-3

    def __post_init__(self):
        if self.kind not in (CAT, KATOK):
            raise RangeError(f"unknown system kind {self.kind!r}")
        a, b, c, d = self.matrix
        if any(int(v) != v for v in self.matrix):
            raise RangeError("matrix entries must be integers")
        det = a * d - b * c
        tr = a + d
        if abs(det) != 1:
            raise RangeError(f"matrix must be unimodular, got det={det}")
        if tr * tr <= 4 * det:
            raise RangeError(f"matrix {self.matrix} is not hyperbolic (trace^2 <= 4 det)")
        if abs(tr) <= 2 and det == 1:
            raise RangeError(f"matrix {self.matrix} is not hyperbolic")
        if self.kind == KATOK:
            if det != 1 or tr <= 2:
                raise RangeError("Katok slowdown needs det = 1 and trace > 2")
            if not 0.0 < self.katok_r0 <= 0.2:
                raise RangeError("katok_r0 must lie in (0, 0.2]")
            if not 0.0 < self.katok_alpha < 1.0:
                raise RangeError("katok_alpha must lie in (0, 1)")
            if not 0.0 < self.ode_step <= 0.1:
                raise RangeError("ode_step must lie in (0, 0.1]")

    @cached_property
    def A(self) -> np.ndarray:
        a, b, c, d = self.matrix
        return np.array([[a, b], [c, d]], dtype=float)

    @cached_property
    def A_inv(self) -> np.ndarray:
        a, b, c, d = self.matrix
        det = a * d - b * c
        return np.array([[d, -b], [-c, a]], dtype=float) / det

    @cached_property
    def _eigen(self):
        a, b, c, d = self.matrix
        tr, det = a + d, a * d - b * c
        disc = math.sqrt(tr * tr - 4 * det)
        roots = [(tr + disc) / 2, (tr - disc) / 2]
        roots.sort(key=lambda v: -abs(v))
        vecs = []
        for lam in roots:
            v = np.array([b, lam - a]) if b != 0 else np.array([lam - d, c])
            v = v / np.linalg.norm(v)
            if v[0] < 0 or (v[0] == 0 and v[1] < 0):
                v = -v
            vecs.append(v)
        return roots[0], roots[1], vecs[0], vecs[1]

    @property
    def lambda_u(self) -> float:
        return self._eigen[0]

    @property
    def lambda_s(self) -> float:
        return self._eigen[1]

    @property
    def e_u(self) -> np.ndarray:
        return self._eigen[2].copy()

    @property
    def e_s(self) -> np.ndarray:
        return self._eigen[3].copy()

    @cached_property
    def P(self) -> np.ndarray:
        """Columns are the unstable and stable eigenvectors."""
        return np.column_stack([self._eigen[2], self._eigen[3]])

    @cached_property
    def P_inv(self) -> np.ndarray:
        return np.linalg.inv(self.P)

    @property
    def default_back_steps(self) -> int:
        return 40 if self.kind == CAT else 80

    @cached_property
    def geometric_bound(self) -> float:
        """Upper bound for |Phi^u|.

        Exact for the linear map; for the Katok map a Gronwall bound
        ``sup ||DV||`` sampled on a fine polar grid over the slowdown disk.
        """
        base = math.log(abs(self.lambda_u))
        if self.kind == CAT:
            return base
        r = np.linspace(0.0, self.katok_r0, 400)[1:]
        th = np.linspace(0.0, 2 * math.pi, 361)
        rr, tt = np.meshgrid(r, th)
        s = np.stack([(rr * np.cos(tt)).ravel(), (rr * np.sin(tt)).ravel()], axis=1)
        jac = _field_jacobians(s, base, self.katok_r0**2, self.katok_alpha)
        norms = np.linalg.norm(jac, ord=2, axis=(1, 2))
        return max(base, float(norms.max()))


def cat_map(matrix=(2, 1, 1, 1)) -> SystemSpec:
    return SystemSpec(kind=CAT, matrix=tuple(matrix))


def katok_map(r0=0.1, alpha=0.5, ode_step=1e-3, matrix=(2, 1, 1, 1)) -> SystemSpec:
    return SystemSpec(kind=KATOK, matrix=tuple(matrix), katok_r0=r0,
                      katok_alpha=alpha, ode_step=ode_step)


# ---------------------------------------------------------------------------
# slowdown vector field


@njit(cache=True)
def _psi(u, r0sq, alpha):
    """psi and its first two derivatives with respect to u."""
    if u <= 0.0:
        return 0.0, 0.0, 0.0
    v = u / r0sq
    if v >= 1.0:
        return 1.0, 0.0, 0.0
    p = v**alpha
    p1 = alpha * p / v
    p2 = alpha * (alpha - 1.0) * p / (v * v)
    if v <= _BLEND_START:
        return p, p1 / r0sq, p2 / (r0sq * r0sq)
    w = 1.0 - _BLEND_START
    t = (1.0 - v) / w
    # septic smoothstep: S(0)=0, S(1)=1, derivatives up to order 3 vanish at both ends
    S = t**4 * (35.0 - 84.0 * t + 70.0 * t * t - 20.0 * t**3)
    dS = 140.0 * t**3 * (1.0 - t) ** 3
    d2S = 420.0 * t * t * (1.0 - t) ** 2 * (1.0 - 2.0 * t)
    b = S
    b1 = -dS / w
    b2 = d2S / (w * w)
    g = 1.0 - (1.0 - p) * b
    g1 = p1 * b - (1.0 - p) * b1
    g2 = p2 * b + 2.0 * p1 * b1 - (1.0 - p) * b2
    return g, g1 / r0sq, g2 / (r0sq * r0sq)


@njit(cache=True)
def _field(s1, s2, L, r0sq, alpha):
    """Slowed vector field and its derivative (trace free, so J22 = -J11)."""
    u = s1 * s1 + s2 * s2
    g, g1, g2 = _psi(u, r0sq, alpha)
    v1 = L * s1 * (g + 2.0 * s2 * s2 * g1)
    v2 = -L * s2 * (g + 2.0 * s1 * s1 * g1)
    j11 = L * (g + 2.0 * u * g1 + 4.0 * s1 * s1 * s2 * s2 * g2)
    j12 = L * s1 * s2 * (6.0 * g1 + 4.0 * s2 * s2 * g2)
    j21 = -L * s1 * s2 * (6.0 * g1 + 4.0 * s1 * s1 * g2)
    return v1, v2, j11, j12, j21


@njit(cache=True)
def _field_jacobians(s, L, r0sq, alpha):
    out = np.empty((s.shape[0], 2, 2))
    for i in range(s.shape[0]):
        _, _, j11, j12, j21 = _field(s[i, 0], s[i, 1], L, r0sq, alpha)
        out[i, 0, 0] = j11
        out[i, 0, 1] = j12
        out[i, 1, 0] = j21
        out[i, 1, 1] = -j11
    return out


@njit(cache=True)
def _rhs(y, sign, L, r0sq, alpha, out):
    v1, v2, j11, j12, j21 = _field(y[0], y[1], L, r0sq, alpha)
    out[0] = sign * v1
    out[1] = sign * v2
    # dM/dt = sign * DV(s) M, M stored row-major in y[2:6]
    out[2] = sign * (j11 * y[2] + j12 * y[4])
    out[3] = sign * (j11 * y[3] + j12 * y[5])
    out[4] = sign * (j21 * y[2] - j11 * y[4])
    out[5] = sign * (j21 * y[3] - j11 * y[5])


@njit(cache=True)
def _flow(s, sign, nsteps, L, r0sq, alpha, with_jac):
    """Classical RK4 for unit time; returns end points and the variational matrices."""
    n = s.shape[0]
    h = 1.0 / nsteps
    out = np.empty((n, 2))
    jac = np.empty((n, 2, 2))
    y = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    m = 6 if with_jac else 2
    for i in range(n):
        y[0] = s[i, 0]
        y[1] = s[i, 1]
        y[2] = 1.0
        y[3] = 0.0
        y[4] = 0.0
        y[5] = 1.0
        for _ in range(nsteps):
            _rhs(y, sign, L, r0sq, alpha, k1)
            for c in range(m):
                tmp[c] = y[c] + 0.5 * h * k1[c]
            _rhs(tmp, sign, L, r0sq, alpha, k2)
            for c in range(m):
                tmp[c] = y[c] + 0.5 * h * k2[c]
            _rhs(tmp, sign, L, r0sq, alpha, k3)
            for c in range(m):
                tmp[c] = y[c] + h * k3[c]
            _rhs(tmp, sign, L, r0sq, alpha, k4)
            for c in range(m):
                y[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c])
        out[i, 0] = y[0]
        out[i, 1] = y[1]
        jac[i, 0, 0] = y[2]
        jac[i, 0, 1] = y[3]
        jac[i, 1, 0] = y[4]
        jac[i, 1, 1] = y[5]
    return out, jac


def _touches_disk(s: np.ndarray, lam: float, r0sq: float, forward: bool) -> np.ndarray:
    """Whether the unperturbed hyperbolic flow line of ``s`` meets the disk in unit time.

    Along the linear flow ``r^2 = a w + b / w`` with ``w = lam^(2t)``; the
    minimum over the admissible ``w`` range is found in closed form.
    """
    a = s[:, 0] ** 2
    b = s[:, 1] ** 2
    lo, hi = (1.0, lam * lam) if forward else (1.0 / (lam * lam), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.sqrt(np.where(a > 0, b / a, np.inf))
    w = np.clip(w, lo, hi)
    rmin = a * w + b / w
    return rmin < r0sq


def _nsteps(sys: SystemSpec) -> int:
    return max(1, int(round(1.0 / sys.ode_step)))


def _local_katok(sys: SystemSpec, x_rep: np.ndarray, forward: bool, with_jac: bool):
    """Katok map on representatives in [-0.5, 0.5)^2 that touch the slowdown disk."""
    L = math.log(sys.lambda_u)
    r0sq = sys.katok_r0**2
    s = x_rep @ sys.P_inv.T
    if forward:
        s_out, M = _flow(np.ascontiguousarray(s), 1.0, _nsteps(sys), L, r0sq,
                         sys.katok_alpha, with_jac)
    else:
        s_out, _ = _flow(np.ascontiguousarray(s), -1.0, _nsteps(sys), L, r0sq,
                         sys.katok_alpha, False)
        s_out, M = _newton_polish(sys, s_out, s, with_jac)
    if not np.all(np.isfinite(s_out)):
        raise IntegratorDivergence("slowdown flow produced non-finite values")
    x_out = s_out @ sys.P.T
    if with_jac:
        M = sys.P @ M @ sys.P_inv
    return x_out, (M if with_jac else None)


def _newton_polish(sys: SystemSpec, guess: np.ndarray, target: np.ndarray, with_jac: bool,
                   max_iter: int = 4):
    """Refine a reverse-flow estimate so that the forward map hits ``target``.

    Returns the preimage and the inverse Jacobian in eigen-coordinates.
    """
    L = math.log(sys.lambda_u)
    r0sq = sys.katok_r0**2
    s = guess.copy()
    M = None
    for _ in range(max_iter):
        fwd, M = _flow(np.ascontiguousarray(s), 1.0, _nsteps(sys), L, r0sq, sys.katok_alpha, True)
        resid = fwd - target
        if not np.all(np.isfinite(resid)):
            raise IntegratorDivergence("reverse slowdown flow diverged")
        if np.max(np.abs(resid), initial=0.0) <= 1e-13:
            break
        s = s - np.linalg.solve(M, resid[:, :, None])[:, :, 0]
    else:
        fwd, M = _flow(np.ascontiguousarray(s), 1.0, _nsteps(sys), L, r0sq, sys.katok_alpha, True)
        if np.max(np.abs(fwd - target), initial=0.0) > 1e-11:
            raise IntegratorDivergence("Newton refinement of the inverse did not converge")
    Minv = np.linalg.inv(M) if with_jac else None
    return s, Minv


# ---------------------------------------------------------------------------
# public maps


def wrap01(p: np.ndarray) -> np.ndarray:
    """Reduce coordinates mod 1 into [0, 1)."""
    p = np.asarray(p, dtype=float)
    r = p - np.floor(p)
    return np.where(r >= 1.0, 0.0, r)


def _as_batch(p):
    arr = np.asarray(p, dtype=float)
    single = arr.ndim == 1
    return np.atleast_2d(arr), single


def _lift_map(sys: SystemSpec, lifts, forward: bool, with_jac: bool):
    x, single = _as_batch(lifts)
    mat = sys.A if forward else sys.A_inv
    out = x @ mat.T
    jac = np.broadcast_to(mat, (x.shape[0], 2, 2)).copy() if with_jac else None
    if sys.kind == KATOK and x.shape[0]:
        k = np.floor(x + 0.5)
        rep = x - k
        s = rep @ sys.P_inv.T
        hit = _touches_disk(s, sys.lambda_u, sys.katok_r0**2, forward)
        if np.any(hit):
            local, M = _local_katok(sys, rep[hit], forward, with_jac)
            out[hit] = k[hit] @ mat.T + local
            if with_jac:
                jac[hit] = M
    if single:
        out = out[0]
        jac = jac[0] if with_jac else None
    return (out, jac) if with_jac else out


def lift_apply(sys: SystemSpec, lifts, with_jacobian: bool = False):
    """Lift of the map to the universal cover (equivariant: F(x + k) = F(x) + A k)."""
    return _lift_map(sys, lifts, True, with_jacobian)


def lift_apply_inverse(sys: SystemSpec, lifts, with_jacobian: bool = False):
    return _lift_map(sys, lifts, False, with_jacobian)


def apply(sys: SystemSpec, p) -> np.ndarray:
    return wrap01(lift_apply(sys, wrap01(p)))


def apply_inverse(sys: SystemSpec, p) -> np.ndarray:
    return wrap01(lift_apply_inverse(sys, wrap01(p)))


def apply_with_jacobian(sys: SystemSpec, p):
    """Image point and Jacobian from a single integration."""
    q, J = lift_apply(sys, wrap01(p), with_jacobian=True)
    return wrap01(q), J


def jacobian(sys: SystemSpec, p) -> np.ndarray:
    return apply_with_jacobian(sys, p)[1]


def inverse_jacobian(sys: SystemSpec, p) -> np.ndarray:
    """Derivative of the inverse map at ``p``."""
    return lift_apply_inverse(sys, wrap01(p), with_jacobian=True)[1]


def torus_distance(p, q) -> np.ndarray | float:
    d = np.abs(wrap01(p) - wrap01(q))
    d = np.minimum(d, 1.0 - d)
    out = np.sqrt(np.sum(d * d, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


def orbit(sys: SystemSpec, p, n: int) -> np.ndarray:
    """Points p, f(p), ..., f^n(p) stacked on a leading axis."""
    pts = [wrap01(p)]
    for _ in range(n):
        pts.append(apply(sys, pts[-1]))
    return np.stack(pts)
