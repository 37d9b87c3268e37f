"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from . import __version__
from .cocycle import Constant, Potential, TGeometric, TrigPoly, Zero
from .errors import ParseError, RangeError, UnknownKey
from .systems import SystemSpec

# keys that do not influence results and are therefore not echoed
_NOT_ECHOED = ("out", "workers")


@dataclass(frozen=True)
class RunConfig:
    system: str = "cat"
    matrix: str = "2,1,1,1"
    katok_r0: float = 0.1
    katok_alpha: float = 0.5
    ode_step: float = 1e-3
    potential: str = "zero"
    x0: str = "0.5,0.5"
    delta: float = 0.3
    n_max: int = 25
    max_spacing: float = 2.5e-5
    refine_tol: float = 0.01
    back_steps: int = 0
    kmax: int = 4
    epsilon: float = 0.05
    mesh: float = 0.02
    grid_n: int = 200
    samples_per_cell: int = 64
    iters: int = 2000
    tol: float = 1e-10
    seed: int = 0
    out: str = "out"
    workers: int = 1
    ns: str = "10,20,30"
    ball_radius: float = 0.1
    n_cap: int = 40
    span_n_max: int = 12
    pairs: int = 1000
    max_log_jump: float = 2.0

    # -- derived objects ---------------------------------------------------

    def system_spec(self) -> SystemSpec:
        return SystemSpec(kind=self.system, matrix=_ints(self.matrix, 4, "matrix"),
                          katok_r0=self.katok_r0, katok_alpha=self.katok_alpha,
                          ode_step=self.ode_step)

    def potential_spec(self) -> Potential:
        return parse_potential(self.potential)

    @property
    def base_point(self) -> tuple:
        return _floats(self.x0, 2, "x0")

    @property
    def n_list(self) -> list:
        return sorted(set(_ints(self.ns, None, "ns")))

    @property
    def back_steps_or_none(self):
        return self.back_steps or None

    def echo(self) -> str:
        lines = [f"# eqforge v{__version__}"]
        for f in fields(self):
            if f.name in _NOT_ECHOED:
                continue
            v = getattr(self, f.name)
            lines.append(f"# {f.name} = {v!r}" if isinstance(v, float) else f"# {f.name} = {v}")
        return "\n".join(lines) + "\n"


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _ints(text, count, key):
    try:
        vals = [int(v) for v in str(text).split(",")]
    except ValueError:
        raise RangeError(f"{key}: expected comma-separated integers, got {text!r}") from None
    if count is not None and len(vals) != count:
        raise RangeError(f"{key}: expected {count} integers, got {len(vals)}")
    return tuple(vals)


def _floats(text, count, key):
    try:
        vals = tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise RangeError(f"{key}: expected comma-separated reals, got {text!r}") from None
    if len(vals) != count or not all(math.isfinite(v) for v in vals):
        raise RangeError(f"{key}: expected {count} finite reals")
    return vals


def parse_potential(text: str) -> Potential:
    """zero | constant:<c> | tgeo:<t> | trig:<k1,k2,amp>[;...]"""
    text = text.strip()
    kind, _, arg = text.partition(":")
    kind = kind.strip().lower()
    try:
        if kind == "zero" and not arg:
            return Zero()
        if kind == "constant":
            return Constant(_finite(arg))
        if kind == "tgeo":
            return TGeometric(_finite(arg))
        if kind == "trig":
            coeffs = {}
            for term in arg.split(";"):
                k1, k2, amp = term.split(",")
                coeffs[(int(k1), int(k2))] = coeffs.get((int(k1), int(k2)), 0.0) + _finite(amp)
            return TrigPoly(coeffs)
    except ValueError:
        pass
    raise RangeError(f"potential: cannot parse {text!r}")


def _finite(s):
    v = float(s)
    if not math.isfinite(v):
        raise ValueError("not finite")
    return v


def parse_config(text: str) -> RunConfig:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ParseError("expected 'key = value'", lineno)
        if key not in _TYPES:
            raise UnknownKey(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ParseError(f"duplicate key {key!r}", lineno)
        typ = _TYPES[key]
        try:
            if typ == "int":
                values[key] = int(value)
            elif typ == "float":
                values[key] = float(value)
            else:
                values[key] = value
        except ValueError:
            raise ParseError(f"{key}: cannot read {value!r} as {typ}", lineno) from None
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def _require(cond, msg):
    if not cond:
        raise RangeError(msg)


def validate(cfg: RunConfig) -> None:
    _require(cfg.system in ("cat", "katok"), "system must be cat or katok")
    cfg.system_spec()
    cfg.potential_spec()
    x = cfg.base_point
    _require(all(0.0 <= v < 1.0 for v in x), "x0 must lie in [0, 1)^2")
    _require(0.0 < cfg.delta < 0.5, "delta must lie in (0, 0.5)")
    _require(cfg.n_max >= 4, "n_max must be >= 4")
    _require(0.0 < cfg.max_spacing <= cfg.delta / 10, "max_spacing must lie in (0, delta/10]")
    _require(cfg.refine_tol > 0, "refine_tol must be > 0")
    _require(cfg.back_steps >= 0, "back_steps must be >= 0 (0 selects the default)")
    _require(cfg.kmax >= 1, "kmax must be >= 1")
    _require(0.0 < cfg.epsilon < 0.2, "epsilon must lie in (0, 0.2)")
    _require(0.0 < cfg.mesh < 0.1, "mesh must lie in (0, 0.1)")
    _require(cfg.grid_n >= 32, "grid_n must be >= 32")
    s = math.isqrt(max(cfg.samples_per_cell, 0))
    _require(cfg.samples_per_cell >= 1 and s * s == cfg.samples_per_cell,
             "samples_per_cell must be a positive perfect square")
    _require(cfg.iters >= 1, "iters must be >= 1")
    _require(cfg.tol > 0, "tol must be > 0")
    _require(cfg.seed >= 0, "seed must be >= 0")
    _require(cfg.workers >= 1, "workers must be >= 1")
    _require(len(cfg.n_list) >= 1 and min(cfg.n_list) >= 1, "ns must be positive integers")
    _require(cfg.ball_radius > 0, "ball_radius must be > 0")
    _require(cfg.n_cap >= 8, "n_cap must be >= 8")
    _require(cfg.span_n_max >= 2, "span_n_max must be >= 2")
    _require(cfg.pairs >= 1000, "pairs must be >= 1000")
    _require(cfg.max_log_jump > 0, "max_log_jump must be > 0")
