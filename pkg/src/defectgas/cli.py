"""Command line front end.

    defectgas simulate-paths  --offset integer --keep-prob 0.7 --displacement ball 0.3 --radius 1e-3 ...
    defectgas sample-limit    --offset irrational 0.7071 0.5774 --samples 100000 ...
    defectgas verify          siegel tail --samples 100000
    defectgas estimate-mixing --field mdep 2 --separation 1 10

Curves are written as CSV (``PREFIX.csv``) with a JSON metadata file
(``PREFIX.json``); without ``--out`` the CSV goes to stdout.  A JSON config
file (``--config``) supplies defaults that explicit flags override.  ``verify``
exits with status 1 when any check fails.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import _kernels
from .errors import ConfigError, DefectGasError
from .free_path import BetaFunction, DirectionLaw, empirical_F_averaged, empirical_F_fixed_field
from .geometry import Annulus, Box, Cylinder, DefectScene
from .lattice import AffineLattice, OffsetClass, UnimodularMatrix
from .limit_process import (
    LimitLawSpec,
    comparison_lemma_check,
    estimate_F,
    estimate_Fbar,
    siegel_check,
    siegel_veech_check,
    tail_bound_check,
)
from .random_field import Displacement, FieldSpec, MarkLaw, estimate_beta_xi, estimate_theta_k
from .stats import RandomnessHandle

CHECKS = ("siegel", "siegel-veech", "tail", "comparison", "mixing")
DEFAULT_GRID = "0,0.5,1,2,4,8"


# -- argument parsing helpers ---------------------------------------------


def parse_offset(tokens, d: int):
    """``integer`` | ``rational s m1 .. md`` | ``irrational x1 .. xd`` -> (class, xi)."""
    tokens = [str(t) for t in (tokens or ["integer"])]
    kind = tokens[0]
    if kind == "integer":
        return OffsetClass.integer(), np.zeros(d)
    if kind == "rational":
        if len(tokens) != d + 2:
            raise ConfigError(f"--offset rational needs s and {d} integers")
        s = int(tokens[1])
        m = [int(x) for x in tokens[2:]]
        oc = OffsetClass.rational(s, m)
        return oc, np.array(m, dtype=float) / s
    if kind == "irrational":
        if len(tokens) != d + 1:
            raise ConfigError(f"--offset irrational needs {d} reals")
        return OffsetClass.irrational(), np.array([float(x) for x in tokens[1:]])
    raise ConfigError(f"unknown offset kind {kind!r}")


def parse_displacement(tokens):
    tokens = [str(t) for t in (tokens or ["none"])]
    kind = tokens[0]
    if kind == "none":
        return Displacement.none()
    if kind == "ball":
        if len(tokens) != 2:
            raise ConfigError("--displacement ball needs r_max")
        return Displacement.ball(float(tokens[1]))
    if kind == "fixed":
        return Displacement.fixed([float(x) for x in tokens[1:]])
    raise ConfigError(f"unknown displacement {kind!r}")


def parse_lambda(tokens, d: int) -> DirectionLaw:
    tokens = [str(t) for t in (tokens or ["sphere"])]
    if tokens[0] == "sphere":
        return DirectionLaw.sphere(d)
    if tokens[0] == "cap":
        if len(tokens) != d + 2:
            raise ConfigError(f"--lambda cap needs {d} axis components and an angle")
        return DirectionLaw.cap([float(x) for x in tokens[1 : d + 1]], float(tokens[d + 1]))
    raise ConfigError(f"unknown direction law {tokens[0]!r}")


def parse_grid(text) -> np.ndarray:
    if isinstance(text, (list, tuple)):
        vals = [float(x) for x in text]
    else:
        vals = [float(x) for x in str(text).replace(" ", ",").split(",") if x]
    g = np.array(sorted(vals))
    if g.size == 0 or np.any(g < 0):
        raise ConfigError("--grid needs non-negative values")
    return g


def build_field(args, seed: int) -> FieldSpec:
    law = MarkLaw(args.keep_prob, parse_displacement(args.displacement))
    tokens = [str(t) for t in (args.field or ["iid"])]
    kind = tokens[0]
    if kind == "iid":
        return FieldSpec.iid(law, seed)
    if kind == "mdep":
        if len(tokens) != 2:
            raise ConfigError("--field mdep needs the window radius R")
        return FieldSpec.mdependent(int(tokens[1]), law, seed)
    if kind == "origin-special":
        olaw = MarkLaw(args.origin_keep_prob, parse_displacement(args.origin_displacement))
        return FieldSpec.origin_special(olaw, law, seed)
    raise ConfigError(f"unknown field kind {kind!r}")


def _common(p, *, paths=False):
    p.add_argument("--config", help="JSON file with defaults for any of these flags")
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--offset", nargs="+", default=["integer"], metavar="TOKEN",
                   help="integer | rational s m1 .. md | irrational x1 .. xd")
    p.add_argument("--keep-prob", type=float, default=1.0)
    p.add_argument("--displacement", nargs="+", default=["none"], metavar="TOKEN", help="none | ball r_max | fixed w1 .. wd")
    p.add_argument("--field", nargs="+", default=["iid"], metavar="TOKEN", help="iid | origin-special | mdep R")
    p.add_argument("--origin-keep-prob", type=float, default=1.0)
    p.add_argument("--origin-displacement", nargs="+", default=["none"], metavar="TOKEN")
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--grid", default=DEFAULT_GRID, help="comma separated T values")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--beta", choices=["zero", "forward"], default="forward")
    p.add_argument("--lambda", dest="lam", nargs="+", default=["sphere"], metavar="TOKEN", help="sphere | cap a1 .. ad angle")
    p.add_argument("--out", help="output prefix: writes PREFIX.csv and PREFIX.json")
    p.add_argument("--workers", type=int, default=None)
    if paths:
        p.add_argument("--radius", type=float, default=1e-3)
        p.add_argument("--tmax", type=float, default=50.0, help="censoring threshold for r^(d-1) tau")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="defectgas", description="Free path statistics of defect Lorentz gases.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate-paths", help="empirical free path survival in a defect scene")
    _common(p, paths=True)
    p.add_argument("--averaged", action="store_true", help="fresh marking per ray instead of one fixed marking")
    p.add_argument("--basis", nargs="+", type=float, help="d*d lattice basis entries, row-major (default identity)")

    p = sub.add_parser("sample-limit", help="Monte Carlo survival of the limiting process")
    _common(p)
    p.add_argument("--unmarked", action="store_true", help="plain Haar lattice (no marks)")
    p.add_argument("--tmax", type=float, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("verify", help="run named statistical checks")
    _common(p)
    p.add_argument("checks", nargs="*", default=list(CHECKS), help=f"any of {', '.join(CHECKS)}")
    p.add_argument("--tmax", type=float, default=100.0, help="T for the tail check")
    p.add_argument("--separation", type=float, default=10.0, help="s for the mixing check")

    p = sub.add_parser("estimate-mixing", help="mixing coefficient estimates of a field")
    _common(p)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--separation", nargs="+", type=float, default=[1.0, 2.0, 5.0, 10.0])
    p.add_argument("--tmax", type=float, default=None, help=argparse.SUPPRESS)
    return parser


def _load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    return cfg, text


def parse_args(argv=None):
    """Parse flags, layering a JSON config file underneath them."""
    parser = make_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        cfg, text = _load_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        lines = text.splitlines()
        defaults = {}
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            dest = "lam" if dest == "lambda" else dest
            if dest not in known or dest in ("config", "help"):
                line = next((i + 1 for i, ln in enumerate(lines) if f'"{key}"' in ln), 1)
                raise ConfigError(f"{args.config}:{line}: unknown option {key!r} for {args.command}")
            defaults[dest] = value
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def config_dict(args) -> dict:
    out = {k: v for k, v in vars(args).items() if k != "config"}
    out["backend"] = _kernels.BACKEND
    return out


# -- commands ---------------------------------------------------------------


def _emit(args, cdf, meta, stdout):
    stdout = stdout or sys.stdout
    meta = dict(meta)
    meta["config"] = config_dict(args)
    meta["n"] = cdf.n
    meta["censored_count"] = cdf.censored_count
    csv_text = cdf.to_csv()
    if args.out:
        with open(args.out + ".csv", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(csv_text)
        with open(args.out + ".json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
    else:
        stdout.write(csv_text)


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(f"not serialisable: {type(x).__name__}")


def cmd_simulate_paths(args, stdout=None) -> int:
    d = args.dim
    _, xi = parse_offset(args.offset, d)
    basis = UnimodularMatrix(np.eye(d) if args.basis is None else np.array(args.basis).reshape(d, d))
    spec = AffineLattice(basis, xi)
    root = RandomnessHandle(args.seed)
    field = build_field(args, root.split(0).key())
    beta = BetaFunction(args.beta)
    scene = DefectScene(spec, field, args.radius, beta)
    lam = parse_lambda(args.lam, d)
    fn = empirical_F_averaged if args.averaged else empirical_F_fixed_field
    cdf = fn(scene, lam, args.samples, parse_grid(args.grid), T_max_scaled=args.tmax, randomness=root.split(1), workers=args.workers)
    _emit(args, cdf, cdf.metadata, stdout)
    return 0


def _limit_law(args) -> LimitLawSpec:
    d = args.dim
    oc, _ = parse_offset(args.offset, d)
    law = MarkLaw(args.keep_prob, parse_displacement(args.displacement))
    lam = parse_lambda(args.lam, d)
    if oc.kind == "integer":
        origin = MarkLaw(args.origin_keep_prob, parse_displacement(args.origin_displacement))
        return LimitLawSpec(oc, law, origin, lam, BetaFunction(args.beta), d)
    return LimitLawSpec(oc, law, None, lam, None, d)


def cmd_sample_limit(args, stdout=None) -> int:
    grid = parse_grid(args.grid)
    root = RandomnessHandle(args.seed)
    if args.unmarked:
        oc, _ = parse_offset(args.offset, args.dim)
        cdf = estimate_Fbar(oc, grid, args.samples, root, args.dim, args.workers)
    else:
        cdf = estimate_F(_limit_law(args), grid, args.samples, root, args.workers)
    _emit(args, cdf, cdf.metadata, stdout)
    return 0


def _run_check(name, args, root):
    d = args.dim
    n = args.samples
    if name == "siegel":
        regions = {
            "box": Box([0.25, 0.5] + [0.0] * (d - 2), [1.25, 1.5] + [1.0] * (d - 2)),
            "annulus": Annulus(1.0, 2.0, d=d),
            "cylinder": Cylinder(3.0, 1.0, d=d),
        }
        reps = {k: siegel_check(A, n, d, randomness=root.split(i), workers=args.workers) for i, (k, A) in enumerate(regions.items())}
        return {
            "check": name,
            "passed": all(r.passed for r in reps.values()),
            "regions": {k: r.to_dict() for k, r in reps.items()},
        }
    if name == "siegel-veech":
        law = _limit_law(args)
        rep = siegel_veech_check(law, Cylinder(5.0, 1.0, d=d), n, root, args.workers)
        return {"check": name, **rep.to_dict()}
    if name == "tail":
        rep = tail_bound_check(d, parse_displacement(args.displacement).r_max, args.tmax, n, root, args.workers,
                               keep_prob=args.keep_prob)
        return {"check": name, **rep.to_dict()}
    if name == "comparison":
        law = _limit_law(args)
        rep = comparison_lemma_check(law, [g for g in parse_grid(args.grid) if g > 0] or [1.0], n, root, args.workers)
        return {"check": name, **rep.to_dict()}
    if name == "mixing":
        tokens = [str(t) for t in args.field]
        field = build_field(args, args.seed) if tokens[0] == "mdep" else FieldSpec.mdependent(2, MarkLaw(args.keep_prob), args.seed)
        est = estimate_theta_k(field, 2, args.separation, max(n, 100), d=d)
        return {
            "check": name,
            "order": est.order,
            "separation": est.separation,
            "estimate": est.estimate,
            "std_error": est.std_error,
            "passed": bool(est.bounded_by(3.0)),
        }
    raise ConfigError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")


def cmd_verify(args, stdout=None) -> int:
    unknown = [c for c in args.checks if c not in CHECKS]
    if unknown:
        raise ConfigError(f"unknown check(s) {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    root = RandomnessHandle(args.seed)
    results = [_run_check(c, args, root.split(i)) for i, c in enumerate(args.checks)]
    report = {"checks": results, "passed": all(r["passed"] for r in results), "config": config_dict(args)}
    text = json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"
    stdout = stdout or sys.stdout
    if args.out:
        with open(args.out + ".json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0 if report["passed"] else 1


def cmd_estimate_mixing(args, stdout=None) -> int:
    field = build_field(args, args.seed)
    _, xi = parse_offset(args.offset, args.dim)
    rows = []
    for s in args.separation:
        th = estimate_theta_k(field, args.order, s, args.samples, d=args.dim)
        be = estimate_beta_xi(field, xi, s, args.samples)
        rows.append({
            "separation": s,
            "theta": th.estimate,
            "theta_std_error": th.std_error,
            "theta_sites": th.sites,
            "beta": be.estimate,
            "beta_std_error": be.std_error,
        })
    report = {"field": field.to_dict(), "order": args.order, "estimates": rows, "config": config_dict(args)}
    text = json.dumps(report, indent=2, sort_keys=True, default=_jsonable) + "\n"
    stdout = stdout or sys.stdout
    if args.out:
        with open(args.out + ".json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        stdout.write(text)
    return 0


COMMANDS = {
    "simulate-paths": cmd_simulate_paths,
    "sample-limit": cmd_sample_limit,
    "verify": cmd_verify,
    "estimate-mixing": cmd_estimate_mixing,
}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
        return COMMANDS[args.command](args)
    except DefectGasError as exc:
        print(f"defectgas: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
