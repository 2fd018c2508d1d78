"""Command-line front end.

Exit codes: 0 success (or all checks pass), 2 a check failed, 3 a check
was inconclusive, 64 bad usage or unreadable input, 70 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io as _io
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .errors import (
    AsymmetricBodyError,
    BudgetExceededError,
    DegenerateCellError,
    EmptyCellError,
    GreatSubsphereError,
    InvalidBodyError,
    ReplicationError,
    SolverError,
    UnboundedDirectionError,
    WindowError,
)
from .geometry import Hyperplane, VPolytope
from .poisson import ProcessParams, estimate_functionals
from .sepbody import (
    SeparationQuery,
    boundary_sweep,
    ellipse_params,
    k_phi,
    m_value,
    psi_value,
    support_sepbody,
)
from . import verify as _verify

EXIT_OK, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3, 64, 70

USAGE_ERRORS = (ValueError, KeyError, FileNotFoundError, json.JSONDecodeError,
                GreatSubsphereError, InvalidBodyError, AsymmetricBodyError)
NUMERIC_ERRORS = (SolverError, WindowError, EmptyCellError, UnboundedDirectionError,
                  BudgetExceededError, DegenerateCellError, ArithmeticError)

DEFAULTS = {
    "seed": 0,
    "reps": None,
    "method": "lp",
    "rays": 360,
    "level": 0.99,
    "workers": 1,
    "check": "thm32",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _vec(text: str) -> np.ndarray:
    try:
        v = np.array([float(t) for t in text.split(",")])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not np.all(np.isfinite(v)):
        raise argparse.ArgumentTypeError("coordinates must be finite")
    return v


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _common(p: argparse.ArgumentParser, body=True, phi=True):
    p.add_argument("--config", help="JSON file of option values; flags override it")
    if body:
        p.add_argument("--body", help="body JSON file {\"vertices\": [...]}")
    if phi:
        p.add_argument("--phi", help="axes2d, axes3d, sigma2d:<order>, sigma3d:<order>, facets:<file> or a JSON file")
    p.add_argument("--out", help="write the primary output here instead of stdout")
    p.add_argument("--format", choices=["json", "csv"], default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sepkit", description="Separation bodies and Poisson hyperplane cells")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("mfun", help="measure of hyperplanes separating the body and a point")
    _common(p)
    p.add_argument("--point", type=_vec)

    p = sub.add_parser("psi", help="minimum of m over the hyperplane <x,u> = tau")
    _common(p)
    p.add_argument("--normal", type=_vec)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("sepbody-support", help="support function of the separation body")
    _common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--direction", type=_vec)
    p.add_argument("--method", choices=["lp", "bisection"], default=None)

    p = sub.add_parser("sepbody-boundary", help="boundary points along rays (CSV polyline)")
    _common(p)
    p.add_argument("--delta", type=float)
    p.add_argument("--rays", type=int, default=None)
    p.add_argument("--origin", type=_vec, help="ray origin inside the body (default: centroid)")

    p = sub.add_parser("kphi", help="halfspaces of the atom polytope K_phi")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo functionals of the K-cell (or zero cell)")
    _common(p)
    p.add_argument("--zero-cell", action="store_true", help="simulate the zero cell instead of a K-cell")
    p.add_argument("--dim", type=int, help="dimension for --zero-cell without --body")
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--radius", type=float)
    p.add_argument("--probe", type=_vec, action="append")
    p.add_argument("--samples", help="write one JSON record per replication to this file")
    p.add_argument("--workers", type=int)

    p = sub.add_parser("verify", help="statistical check of a bound; exit 0 pass, 2 fail, 3 inconclusive")
    _common(p)
    p.add_argument("--check", choices=["thm31", "thm32", "thm33", "eq313", "conditional", "suite"])
    p.add_argument("--n", type=int)
    p.add_argument("--reps", type=int)
    p.add_argument("--seed", type=_u64)
    p.add_argument("--radius", type=float)
    p.add_argument("--probe", type=_vec, action="append")
    p.add_argument("--level", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--timing", action="store_true", help="include wall-clock runtime in reports")

    p = sub.add_parser("ellipse", help="foci and axis sum of the elliptic boundary arc near a point")
    _common(p, phi=False)
    p.add_argument("--delta", type=float)
    p.add_argument("--point", type=_vec)
    return parser


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            cfg = json.load(fh)
        if not isinstance(cfg, dict):
            raise ValueError("config file must hold a JSON object")
        for key, value in cfg.items():
            key = key.replace("-", "_")
            if not hasattr(args, key):
                raise ValueError(f"unknown config key {key!r} for {args.command}")
            current = getattr(args, key)
            if current is None or current is False:
                if key in ("point", "normal", "direction", "origin"):
                    value = np.asarray(value, dtype=float)
                elif key == "probe":
                    value = [np.asarray(v, dtype=float) for v in value]
                setattr(args, key, value)
    for key, value in DEFAULTS.items():
        if getattr(args, key, "absent") is None:
            setattr(args, key, value)
    return args


def _need(args, *names):
    for name in names:
        if getattr(args, name, None) is None:
            raise UsageError(f"--{name.replace('_', '-')} is required for {args.command}")


def _load(args, need_phi=True):
    _need(args, "body")
    K = io.load_body(args.body)
    phi = None
    if need_phi:
        _need(args, "phi")
        phi = io.resolve_phi(args.phi, K.dim)
    return K, phi


def _num(x: float) -> str:
    return repr(float(x))


def _emit(args, text: str) -> None:
    if args.out:
        Path(args.out).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)


# ---------------------------------------------------------------- subcommands

def _cmd_mfun(args):
    K, phi = _load(args)
    _need(args, "point")
    v = m_value(K, phi, args.point)
    _emit(args, _dump({"m": v}) if args.format == "json" else _num(v))
    return EXIT_OK


def _cmd_psi(args):
    K, phi = _load(args)
    _need(args, "normal", "tau")
    res = psi_value(Hyperplane.through(args.normal, args.tau), K, phi)
    if args.format == "csv":
        _emit(args, ",".join(_num(t) for t in [res.value, *res.minimizer]))
    else:
        _emit(args, _dump({"psi": res.value, "minimizer": res.minimizer.tolist()}))
    return EXIT_OK


def _cmd_support(args):
    K, phi = _load(args)
    _need(args, "delta", "direction")
    v = support_sepbody(SeparationQuery(K, phi, args.delta), args.direction, method=args.method)
    _emit(args, _dump({"support": v}) if args.format == "json" else _num(v))
    return EXIT_OK


def _fibonacci_sphere(k: int) -> np.ndarray:
    i = np.arange(k) + 0.5
    z = 1 - 2 * i / k
    a = math.pi * (1 + 5 ** 0.5) * i
    r = np.sqrt(1 - z ** 2)
    return np.column_stack([r * np.cos(a), r * np.sin(a), z])


def _cmd_boundary(args):
    K, phi = _load(args)
    _need(args, "delta")
    q = SeparationQuery(K, phi, args.delta)
    origin = K.centroid if args.origin is None else args.origin
    if K.dim == 2:
        ang = 2 * np.pi * np.arange(args.rays) / args.rays
        dirs = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        dirs = _fibonacci_sphere(args.rays)
        ang = np.arctan2(dirs[:, 1], dirs[:, 0])
    pts = boundary_sweep(q, origin, dirs)
    if args.format == "json":
        _emit(args, _dump({"angle": ang.tolist(), "points": pts.tolist()}))
        return EXIT_OK
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["angle", "x", "y", "z"][: 1 + K.dim])
    for a, p in zip(ang, pts):
        w.writerow([_num(a), *(_num(t) for t in p)])
    _emit(args, buf.getvalue())
    return EXIT_OK


def _cmd_kphi(args):
    K, phi = _load(args)
    P = k_phi(K, phi)
    rows = io.hpolytope_to_list(P)
    if args.format == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"u{j}" for j in range(K.dim)] + ["tau", "orientation"])
        for r in rows:
            w.writerow([*(_num(t) for t in r["u"]), _num(r["tau"]), r["orientation"]])
        _emit(args, buf.getvalue())
    else:
        _emit(args, _dump(rows))
    return EXIT_OK


def _cell_body(args):
    if args.zero_cell:
        if args.body:
            d = io.load_body(args.body).dim
        else:
            _need(args, "dim")
            d = args.dim
        return VPolytope(np.zeros((1, d)))
    _need(args, "body")
    return io.load_body(args.body)


def _cmd_simulate(args):
    _need(args, "phi", "n", "reps")
    K = _cell_body(args)
    phi = io.resolve_phi(args.phi, K.dim)
    params = ProcessParams(args.n, phi, args.radius, args.seed)
    probes = args.probe or [phi.atoms[0]]
    est = estimate_functionals(K, params, args.reps, probes, workers=args.workers)
    if args.samples:
        est.write_jsonl(args.samples)
    summary = {
        "n": args.n,
        "phi": phi.describe(),
        "seed": args.seed,
        "reps": args.reps,
        "probes": [np.asarray(u).tolist() for u in est.probes],
        "Eh": [est.Eh(j).to_dict() for j in range(len(est.probes))],
        "EW": est.EW.to_dict(),
        "EV": est.EV.to_dict(),
        "hit_window": int(est.hit_window.sum()),
    }
    if args.format == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["functional", "mean", "se", "ci_low", "ci_high", "n"])
        rows = [(f"h[{j}]", est.Eh(j)) for j in range(len(est.probes))] + [("W", est.EW), ("V", est.EV)]
        for name, e in rows:
            w.writerow([name, _num(e.mean), _num(e.se), _num(e.ci[0]), _num(e.ci[1]), e.n])
        _emit(args, buf.getvalue())
    else:
        _emit(args, _dump(summary))
    return EXIT_OK


def _cmd_verify(args):
    _need(args, "n")
    K, phi = _load(args)
    common = dict(seed=args.seed, R=args.radius, level=args.level, workers=args.workers)
    probes = args.probe or [phi.atoms[0]]
    check = args.check
    if check == "conditional":
        reports = [_verify.check_conditional(K, phi, args.n, args.reps or 2000, seed=args.seed)]
    else:
        reps = args.reps or (10_000 if K.dim == 2 else 3_000)
        if check == "eq313":
            reports = [_verify.check_eq313(K, phi, args.n, reps, **common)]
        elif check == "thm32":
            est = _verify.simulate(K, phi, args.n, reps, probes, **common)
            reports = [_verify.check_thm32(K, phi, args.n, u, reps, estimates=est, **common) for u in probes]
        elif check == "thm33":
            reports = [_verify.check_thm33(K, phi, args.n, reps, **common)]
        elif check == "thm31":
            reports = [_verify.check_thm31(K, phi, args.n, reps, **common)]
        else:
            reports = _verify.run_suite(K, phi, args.n, probes, reps, **common)
    if args.format == "csv":
        buf = _io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["theorem", "n", "lower", "upper", "mean", "se", "verdict"])
        for r in reports:
            est = r.estimate
            w.writerow([r.theorem, r.n, r.lower, r.upper, est.get("mean", est.get("acceptance_rate")),
                        est.get("se", ""), r.verdict])
        _emit(args, buf.getvalue())
    else:
        body = [r.to_dict(timing=args.timing) for r in reports]
        _emit(args, _dump(body[0] if len(body) == 1 else body))
    verdicts = {r.verdict for r in reports}
    if "fail" in verdicts:
        return EXIT_FAIL
    if "inconclusive" in verdicts:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _cmd_ellipse(args):
    K, _ = _load(args, need_phi=False)
    _need(args, "delta", "point")
    e = ellipse_params(K, args.point, args.delta)
    _emit(args, _dump({"p": e.p.tolist(), "q": e.q.tolist(), "axis_sum": e.axis_sum}))
    return EXIT_OK


COMMANDS = {
    "mfun": _cmd_mfun,
    "psi": _cmd_psi,
    "sepbody-support": _cmd_support,
    "sepbody-boundary": _cmd_boundary,
    "kphi": _cmd_kphi,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "ellipse": _cmd_ellipse,
}


def run(argv=None) -> int:
    """Parse ``argv``, dispatch, and return the exit code."""
    try:
        args = build_parser().parse_args(argv)
        args = _merge_config(args)
        return COMMANDS[args.command](args)
    except ReplicationError as exc:
        # classified by the failure inside the replication
        print(f"sepkit: {exc}", file=sys.stderr)
        if isinstance(exc.cause, NUMERIC_ERRORS):
            return EXIT_NUMERIC
        if isinstance(exc.cause, USAGE_ERRORS):
            return EXIT_USAGE
        raise
    except UsageError as exc:
        print(f"sepkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"sepkit: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except USAGE_ERRORS as exc:
        print(f"sepkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
