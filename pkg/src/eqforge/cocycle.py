"""Potentials, unstable/stable directions and Birkhoff sums.

Directions come from power iteration of the Jacobian cocycle.  Along an orbit
the unstable direction is carried forward by the derivative, which is both
cheaper than re-running the backward iteration at every orbit point and
numerically stable (forward iteration pulls any error towards E^u).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCocycle
from .systems import (
    SystemSpec,
    apply,
    apply_with_jacobian,
    lift_apply_inverse,
    wrap01,
)

_SEED = np.array([1.0, 0.0])


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """A continuous potential on the torus.

    ``phi_u`` carries precomputed values of the geometric potential at the
    evaluation points; it is only needed when ``uses_geometric`` is true.
    """

    uses_geometric = False

    def __call__(self, points, phi_u=None) -> np.ndarray:
        raise NotImplementedError

    def bound(self, sys: SystemSpec | None = None) -> float:
        raise NotImplementedError

    @property
    def constant(self) -> float:
        """Constant part, split off so shifts can be handled exactly."""
        return 0.0

    def variable(self) -> "Potential":
        """The potential minus its constant part."""
        return self

    def __add__(self, other: "Potential") -> "Sum":
        return Sum((self, other))


@dataclass(frozen=True)
class Zero(Potential):
    def __call__(self, points, phi_u=None):
        return np.zeros(np.shape(points)[:-1])

    def bound(self, sys=None):
        return 0.0


@dataclass(frozen=True)
class Constant(Potential):
    c: float

    def __call__(self, points, phi_u=None):
        return np.full(np.shape(points)[:-1], float(self.c))

    def bound(self, sys=None):
        return abs(self.c)

    @property
    def constant(self):
        return float(self.c)

    def variable(self):
        return Zero()


@dataclass(frozen=True)
class TGeometric(Potential):
    """t * Phi^u, the geometric t-potential."""

    t: float
    uses_geometric = True

    def __call__(self, points, phi_u=None):
        if phi_u is None:
            raise ValueError("TGeometric needs geometric potential values")
        return self.t * np.asarray(phi_u)

    def bound(self, sys=None):
        if sys is None:
            raise ValueError("bound of a geometric potential depends on the system")
        return abs(self.t) * sys.geometric_bound


@dataclass(frozen=True)
class TrigPoly(Potential):
    """sum of amp * cos(2 pi k . p) over integer frequency pairs k."""

    coeffs: tuple = ()

    def __post_init__(self):
        items = self.coeffs.items() if isinstance(self.coeffs, dict) else self.coeffs
        norm = tuple(sorted(((int(k[0]), int(k[1])), float(a)) for k, a in items))
        object.__setattr__(self, "coeffs", norm)

    def __call__(self, points, phi_u=None):
        p = np.asarray(points, dtype=float)
        out = np.zeros(p.shape[:-1])
        for (k1, k2), amp in self.coeffs:
            if k1 == 0 and k2 == 0:
                out += amp
            else:
                out += amp * np.cos(2 * np.pi * (k1 * p[..., 0] + k2 * p[..., 1]))
        return out

    def bound(self, sys=None):
        return float(sum(abs(a) for _, a in self.coeffs))

    @property
    def constant(self):
        return float(sum(a for k, a in self.coeffs if k == (0, 0)))

    def variable(self):
        rest = tuple((k, a) for k, a in self.coeffs if k != (0, 0))
        return TrigPoly(rest) if rest else Zero()


@dataclass(frozen=True)
class Sum(Potential):
    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def uses_geometric(self):
        return any(t.uses_geometric for t in self.terms)

    def __call__(self, points, phi_u=None):
        out = np.zeros(np.shape(points)[:-1])
        for t in self.terms:
            out = out + t(points, phi_u)
        return out

    def bound(self, sys=None):
        return float(sum(t.bound(sys) for t in self.terms))

    @property
    def constant(self):
        return float(sum(t.constant for t in self.terms))

    def variable(self):
        rest = tuple(v for v in (t.variable() for t in self.terms) if not isinstance(v, Zero))
        if not rest:
            return Zero()
        return rest[0] if len(rest) == 1 else Sum(rest)


# ---------------------------------------------------------------------------
# directions


@dataclass
class DirectionEstimate:
    vector: np.ndarray
    back_steps: int
    # angle between the estimates from back_steps and back_steps - 1 iterations
    residual: np.ndarray | float


def _orient(v: np.ndarray) -> np.ndarray:
    flip = (v[..., 0] < 0) | ((v[..., 0] == 0) & (v[..., 1] < 0))
    return np.where(flip[..., None], -v, v)


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1)
    if not np.all(np.isfinite(n)) or np.any(n < 1e-300):
        raise DegenerateCocycle("cocycle image norm degenerated during power iteration")
    return v / n[..., None]


def _angle(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    dot = np.abs(np.sum(a * b, axis=-1))
    return np.arctan2(cross, dot)


def _push(jacs, start, stop, n):
    v = np.broadcast_to(_SEED, (n, 2)).copy()
    for j in range(start, stop - 1, -1):
        v = _normalize(np.einsum("nij,nj->ni", jacs[j], v))
    return v


def unstable_direction(sys: SystemSpec, p, back_steps: int | None = None) -> DirectionEstimate:
    """E^u(p) by pushing (1, 0) through the cocycle along f^-m(p) -> p."""
    m = sys.default_back_steps if back_steps is None else int(back_steps)
    if m < 1:
        raise ValueError("back_steps must be >= 1")
    pts = np.atleast_2d(wrap01(p))
    single = np.ndim(p) == 1
    n = pts.shape[0]
    # jacs[j-1] = Df at f^-j(p)
    jacs = np.empty((m, n, 2, 2))
    q = pts
    for j in range(m):
        q, dinv = lift_apply_inverse(sys, q, with_jacobian=True)
        q = wrap01(q)
        jacs[j] = np.linalg.inv(dinv)
    v = _orient(_push(jacs, m - 1, 0, n))
    v_prev = _orient(_push(jacs, m - 2, 0, n)) if m > 1 else np.broadcast_to(_SEED, (n, 2))
    resid = _angle(v, v_prev)
    if single:
        return DirectionEstimate(v[0], m, float(resid[0]))
    return DirectionEstimate(v, m, resid)


def stable_direction(sys: SystemSpec, p, fwd_steps: int | None = None) -> DirectionEstimate:
    """E^s(p) by pulling (1, 0) back through the inverse cocycle along p -> f^m(p)."""
    m = sys.default_back_steps if fwd_steps is None else int(fwd_steps)
    if m < 1:
        raise ValueError("fwd_steps must be >= 1")
    pts = np.atleast_2d(wrap01(p))
    single = np.ndim(p) == 1
    n = pts.shape[0]
    inv_jacs = np.empty((m, n, 2, 2))
    q = pts
    for j in range(m):
        q_next, J = apply_with_jacobian(sys, q)
        inv_jacs[j] = np.linalg.inv(J)
        q = q_next
    v = _orient(_push(inv_jacs, m - 1, 0, n))
    v_prev = _orient(_push(inv_jacs, m - 2, 0, n)) if m > 1 else np.broadcast_to(_SEED, (n, 2))
    resid = _angle(v, v_prev)
    if single:
        return DirectionEstimate(v[0], m, float(resid[0]))
    return DirectionEstimate(v, m, resid)


def geometric_potential(sys: SystemSpec, p, back_steps: int | None = None):
    """Phi^u(p) = -log ||Df_p u|| with u the unit unstable direction."""
    u = unstable_direction(sys, p, back_steps).vector
    J = apply_with_jacobian(sys, p)[1]
    w = np.einsum("...ij,...j->...i", J, u)
    out = -np.log(np.linalg.norm(w, axis=-1))
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# orbits and Birkhoff sums


@dataclass
class OrbitData:
    """points[i] = f^i(p) for i <= n; phi_u[i] = Phi^u(f^i p) for i < n."""

    points: np.ndarray
    phi_u: np.ndarray | None


def potential_orbit(sys: SystemSpec, p, n: int, back_steps: int | None = None,
                    geometric: bool = True, u0=None) -> OrbitData:
    """Orbit of a batch of points, optionally with Phi^u along it.

    The unstable direction is estimated once at the start (or taken from
    ``u0``) and then transported forward by the derivative.
    """
    q = np.atleast_2d(wrap01(p))
    npts = q.shape[0]
    points = np.empty((n + 1, npts, 2))
    points[0] = q
    if not geometric:
        for i in range(n):
            q = apply(sys, q)
            points[i + 1] = q
        return OrbitData(points, None)
    u = unstable_direction(sys, q, back_steps).vector if u0 is None else np.atleast_2d(u0)
    phi_u = np.empty((n, npts))
    for i in range(n):
        q, J = apply_with_jacobian(sys, q)
        w = np.einsum("nij,nj->ni", J, u)
        nrm = np.linalg.norm(w, axis=-1)
        if not np.all(np.isfinite(nrm)) or np.any(nrm < 1e-300):
            raise DegenerateCocycle("tangent cocycle degenerated along orbit")
        phi_u[i] = -np.log(nrm)
        u = w / nrm[:, None]
        points[i + 1] = q
    return OrbitData(points, phi_u)


def orbit_potential_values(phi: Potential, orb: OrbitData, n: int | None = None) -> np.ndarray:
    """phi evaluated at f^i(p) for i < n, shape (n, N)."""
    n = orb.points.shape[0] - 1 if n is None else n
    phi_u = None if orb.phi_u is None else orb.phi_u[:n]
    return phi(orb.points[:n], phi_u)


def birkhoff_sum(sys: SystemSpec, phi: Potential, p, n: int, back_steps: int | None = None):
    """S_n phi(p) = sum_{i<n} phi(f^i p); S_0 phi = 0."""
    if n < 0:
        raise ValueError("n must be >= 0")
    orb = potential_orbit(sys, p, n, back_steps, geometric=phi.uses_geometric)
    out = np.sum(orbit_potential_values(phi, orb, n), axis=0)
    return float(out[0]) if np.ndim(p) == 1 else out
