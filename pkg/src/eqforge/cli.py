"""Command-line entry point.

    eqforge [--config PATH] [--out DIR] [--workers K] construct
    eqforge ... pressure --method {integral,spanning,separated,ulam}
    eqforge ... compare --reference {haar,dirac,ulam}
    eqforge ... conditions --check {c2,c3}
"""

from __future__ import annotations

import argparse
import io
import sys
from dataclasses import replace
from pathlib import Path

from . import conditions, measures, pressure
from .config import RunConfig, parse_config
from .errors import ConfigError, EqforgeError
from .leaf import seed_leaf

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Output:
    """Collects one output file and writes it with the config echo header."""

    def __init__(self, cfg: RunConfig, name: str):
        self.cfg = cfg
        self.path = Path(cfg.out) / name
        self.buf = io.StringIO()
        self.buf.write(cfg.echo())

    def __enter__(self):
        return self.buf

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text(self.buf.getvalue(), encoding="utf-8")
        return False


def _leaf_orbit(cfg: RunConfig, n_max: int):
    sys_ = cfg.system_spec()
    phi = cfg.potential_spec()
    leaf = seed_leaf(sys_, cfg.base_point, cfg.delta, cfg.max_spacing, cfg.back_steps_or_none)
    return measures.leaf_orbit(sys_, leaf, phi, n_max, cfg.back_steps_or_none,
                               max_log_jump=cfg.max_log_jump)


def cmd_construct(cfg: RunConfig) -> None:
    ns = cfg.n_list
    orbit = _leaf_orbit(cfg, max(ns))
    last = None
    rows = []
    for n in ns:
        mu = orbit.cesaro(n)
        with _Output(cfg, f"measure_n{n}.csv") as fh:
            measures.write_measure_csv(mu, fh)
        rows.append((n, measures.mass_in_ball(mu, (0.0, 0.0), cfg.ball_radius)))
        last = mu
    with _Output(cfg, "fourier.csv") as fh:
        measures.write_fourier_csv(last, fh, cfg.kmax, cfg.workers)
    with _Output(cfg, "mass_ball.csv") as fh:
        fh.write("n,mass\n")
        for n, m in rows:
            fh.write(f"{n},{m!r}\n")


def _ulam(cfg: RunConfig):
    oracle = pressure.ulam_build(cfg.system_spec(), cfg.potential_spec(), cfg.grid_n,
                                 cfg.samples_per_cell, cfg.back_steps_or_none)
    return pressure.ulam_pressure(oracle, cfg.iters, cfg.tol)


def cmd_pressure(cfg: RunConfig, method: str) -> None:
    sys_ = cfg.system_spec()
    phi = cfg.potential_spec()
    bs = cfg.back_steps_or_none
    if method == "integral":
        est = pressure.pressure_integral(sys_, cfg.base_point, cfg.delta, phi, cfg.n_max, bs,
                                         cfg.max_spacing)
    elif method in ("spanning", "separated"):
        leaf = seed_leaf(sys_, cfg.base_point, cfg.delta, cfg.max_spacing, bs)
        est = pressure.covering_estimate(sys_, leaf, phi, cfg.epsilon,
                                         min(cfg.n_max, cfg.span_n_max), method,
                                         cfg.refine_tol, bs)
    elif method == "ulam":
        est = pressure.ulam_estimate(_ulam(cfg))
    else:
        raise ConfigError(f"unknown pressure method {method!r}")
    with _Output(cfg, f"pressure_{method}.csv") as fh:
        pressure.write_pressure_csv(est, fh)


def cmd_compare(cfg: RunConfig, reference: str) -> None:
    if reference == "haar":
        ref = measures.haar_cloud()
    elif reference == "dirac":
        ref = measures.dirac((0.0, 0.0))
    elif reference == "ulam":
        ref = _ulam(cfg).gibbs
    else:
        raise ConfigError(f"unknown reference {reference!r}")
    ns = cfg.n_list
    orbit = _leaf_orbit(cfg, max(ns))
    with _Output(cfg, "compare.csv") as fh:
        fh.write("n,discrepancy,mass_in_ball,alpha,residual\n")
        for n in ns:
            mu = orbit.cesaro(n)
            d = measures.fourier_discrepancy(mu, ref, cfg.kmax, cfg.workers)
            mass = measures.mass_in_ball(mu, (0.0, 0.0), cfg.ball_radius)
            alpha, resid = measures.best_convex_fit(mu, cfg.kmax, cfg.workers)
            fh.write(f"{n},{d!r},{mass!r},{alpha!r},{resid!r}\n")


def cmd_conditions(cfg: RunConfig, check: str) -> None:
    sys_ = cfg.system_spec()
    if check not in ("c2", "c3"):
        raise ConfigError(f"unknown check {check!r}")
    c2 = conditions.estimate_contraction(sys_, cfg.epsilon, cfg.n_cap, cfg.pairs, cfg.seed)
    if check == "c2":
        with _Output(cfg, "c2.csv") as fh:
            conditions.write_c2_csv(c2, conditions.check_C2(c2), fh)
        return
    rep = conditions.covering_report(sys_, cfg.base_point, cfg.delta, c2, cfg.n_cap,
                                     cfg.refine_tol, mesh_cap=cfg.mesh)
    with _Output(cfg, "c3.csv") as fh:
        conditions.write_c3_csv(rep, conditions.check_C3(rep, cfg.n_cap), fh)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="config file (key = value)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("--workers", type=int, default=argparse.SUPPRESS,
                        help="cap on parallel workers")
    p = argparse.ArgumentParser(prog="eqforge", parents=[common],
                                description="Equilibrium states from unstable leaves.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("construct", parents=[common], help="leaf measures and Cesaro averages")
    sp = sub.add_parser("pressure", parents=[common], help="pressure estimates")
    sp.add_argument("--method", required=True,
                    choices=["integral", "spanning", "separated", "ulam"])
    sc = sub.add_parser("compare", parents=[common], help="compare mu_n with a reference")
    sc.add_argument("--reference", required=True, choices=["haar", "dirac", "ulam"])
    sk = sub.add_parser("conditions", parents=[common], help="check (C2) or (C3)")
    sk.add_argument("--check", required=True, choices=["c2", "c3"])
    return p


def load_config(path: str | None) -> RunConfig:
    if path is None:
        return parse_config("")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    return parse_config(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(getattr(args, "config", None))
        over = {}
        if hasattr(args, "out"):
            over["out"] = args.out
        if hasattr(args, "workers"):
            if args.workers < 1:
                raise ConfigError("--workers must be >= 1")
            over["workers"] = args.workers
        cfg = replace(cfg, **over)
        if args.command == "construct":
            cmd_construct(cfg)
        elif args.command == "pressure":
            cmd_pressure(cfg, args.method)
        elif args.command == "compare":
            cmd_compare(cfg, args.reference)
        else:
            cmd_conditions(cfg, args.check)
    except ConfigError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except EqforgeError as e:
        print(f"{type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
