"""Command-line interface.

Exit codes: 0 success (or WBCP refuted), 2 constructive route inapplicable,
3 verification failed, 1 any error.

  carnot-bcp refute --group free_nilpotent_2_3 --gauge euclidean --N 20 --out fam.json
  carnot-bcp verify fam.json
  carnot-bcp dist --group heisenberg1 --gauge euclidean --q 1 0 0
  carnot-bcp dist --plane 2 2 3 --q 1 1
  carnot-bcp sphere --count 1000 --seed 7 --out sphere.csv
  carnot-bcp quotient --group free_nilpotent_2_3 --gauge euclidean --samples 1000 --seed 7
  carnot-bcp validate --group free_nilpotent_2_3
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import serialize
from .besicovitch import verify_family, wbcp_refutation_pipeline
from .errors import CarnotError
from .gauge import GaugeBall, QuasiDistance, gauge_from_dict, plane_metric, unit_sphere_sample
from .groups import BUILTIN_NAMES, PlaneModel, builtin, group_from_dict, group_to_dict, validate
from .quotient import derive_quotient, quotient_to_dict, submetry_check

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INAPPLICABLE = 2
EXIT_FAIL = 3

SEED_ENV = "CARNOT_GAUGE_SEED"


class UsageError(Exception):
    pass


def _load_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _group(args, default: str | None = None):
    if args.group and args.group_file:
        raise UsageError("give exactly one of --group and --group-file")
    if args.group_file:
        return group_from_dict(_load_json(args.group_file), name=Path(args.group_file).stem)
    name = args.group or default
    if name is None:
        raise UsageError("a group is required (--group NAME or --group-file PATH)")
    try:
        return builtin(name)
    except KeyError:
        raise UsageError(f"unknown group {name!r}; built-ins are {', '.join(BUILTIN_NAMES)}") from None


def _gauge(args, group, default: str | None = None) -> GaugeBall:
    inline = args.form is not None or args.c is not None or args.gamma is not None
    sources = sum([args.gauge is not None, args.gauge_file is not None, inline])
    if sources > 1:
        raise UsageError("give exactly one gauge source: --gauge, --gauge-file or --form/--c/--gamma")
    if args.gauge_file:
        return gauge_from_dict(_load_json(args.gauge_file))
    if inline:
        if args.c is None or args.gamma is None:
            raise UsageError("inline gauges need both --c and --gamma")
        return GaugeBall(args.form or "coordinate", tuple(args.c), tuple(args.gamma))
    name = args.gauge or default
    if name == "euclidean":
        return GaugeBall.euclidean(group.n)
    if name is None:
        raise UsageError("a gauge is required (--gauge euclidean, --gauge-file or --form/--c/--gamma)")
    raise UsageError(f"unknown gauge {name!r}; the only named gauge is 'euclidean'")


def _metric(args, default_group=None, default_gauge=None) -> QuasiDistance:
    if getattr(args, "plane", None):
        if args.group or args.group_file:
            raise UsageError("--plane cannot be combined with a group source")
        vals = args.plane
        if len(vals) not in (3, 5):
            raise UsageError("--plane takes A B S or A B S ALPHA BETA")
        a, b, s = vals[:3]
        alpha, beta = vals[3:] if len(vals) == 5 else (1.0, 1.0)
        return plane_metric(PlaneModel(s=s, a=a, b=b, alpha=alpha, beta=beta))
    g = _group(args, default_group)
    return QuasiDistance(g, _gauge(args, g, default_gauge))


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {env!r}") from None


def _emit(doc, path=None) -> None:
    text = serialize.dumps(doc)
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_refute(args) -> int:
    if args.N < 1:
        raise UsageError("--N must be >= 1")
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    m = _metric(args)
    rep = wbcp_refutation_pipeline(
        m.group, m.ball, args.N, r=args.r, margin=args.margin,
        search_budget=args.search_budget, seed=_seed(args), tol=args.tol,
    )
    doc = serialize.pipeline_to_dict(rep)
    if rep.family is not None:
        if args.out:
            serialize.write_family(args.out, rep.family, m)
            doc["family_path"] = str(args.out)
        if args.csv:
            Path(args.csv).write_text(serialize.family_to_csv(rep.family), encoding="utf-8")
    _emit(doc, args.report)
    if rep.verdict == "refuted":
        return EXIT_OK
    if rep.verdict == "inapplicable":
        print(rep.message, file=sys.stderr)
        return EXIT_INAPPLICABLE
    return EXIT_FAIL


def cmd_verify(args) -> int:
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    fam, metric = serialize.read_family(args.family)
    if args.plane or args.group or args.group_file:
        metric = _metric(args)
    if metric is None:
        raise UsageError("the family file names no metric; pass --group/--gauge or --plane")
    rep = verify_family(metric, fam, tol=args.tol)
    _emit(rep.to_dict(), args.report)
    if not rep.passed:
        print(f"verification failed: balls {rep.failing_balls}, pairs (center, ball) {rep.failing_pairs}",
              file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_dist(args) -> int:
    m = _metric(args)
    q = np.array(args.q, dtype=float)
    p = np.zeros(m.n) if args.p is None else np.array(args.p, dtype=float)
    print(f"{m(p, q):#.15g}")
    return EXIT_OK


def cmd_sphere(args) -> int:
    m = _metric(args, default_group="heisenberg1", default_gauge="euclidean")
    pts = unit_sphere_sample(m, args.count, _seed(args))
    text = serialize.points_to_csv(pts) if len(pts) else ",".join(f"x_{k}" for k in range(1, m.n + 1)) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_quotient(args) -> int:
    m = _metric(args)
    qs = derive_quotient(m.group, m.ball)
    seed = _seed(args)
    rep = submetry_check(qs, args.samples, seed, tol=args.tol)
    vrep = validate(qs.group, samples=min(args.samples, 1000), seed=seed)
    doc = {"quotient": quotient_to_dict(qs), "validation": vrep.to_dict(), "submetry": rep.to_dict()}
    if args.out:
        _emit(quotient_to_dict(qs), args.out)
    _emit(doc, args.report)
    return EXIT_OK if rep.passed and vrep.passed else EXIT_FAIL


def cmd_validate(args) -> int:
    g = _group(args)
    rep = validate(g, samples=args.samples, seed=_seed(args), tol=args.tol)
    _emit({"group": group_to_dict(g), **rep.to_dict()}, args.report)
    return EXIT_OK if rep.passed else EXIT_FAIL


def _add_group(p, plane=False):
    p.add_argument("--group", help=f"built-in group ({', '.join(BUILTIN_NAMES)})")
    p.add_argument("--group-file", help="group spec JSON")
    if plane:
        p.add_argument("--plane", type=float, nargs="+", metavar="X",
                       help="plane model A B S [ALPHA BETA] instead of a group")


def _add_gauge(p):
    p.add_argument("--gauge", help="named gauge ('euclidean')")
    p.add_argument("--gauge-file", help="gauge JSON {form, c, gamma}")
    p.add_argument("--form", choices=("coordinate", "layer"))
    p.add_argument("--c", type=float, nargs="+", help="gauge coefficients")
    p.add_argument("--gamma", type=float, nargs="+", help="gauge exponents")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carnot-bcp", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("refute", help="build and verify a Besicovitch family refuting WBCP")
    _add_group(p)
    _add_gauge(p)
    p.add_argument("--N", type=int, default=20, help="family size (default 20)")
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--search-budget", type=int, default=0, help="heuristic search proposals when inapplicable")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="write the lifted family JSON here")
    p.add_argument("--csv", help="write the lifted family as CSV here")
    p.add_argument("--report", help="write the report JSON here instead of stdout")
    p.set_defaults(func=cmd_refute)

    p = sub.add_parser("verify", help="check a family file")
    p.add_argument("family")
    _add_group(p, plane=True)
    _add_gauge(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("dist", help="distance between two points")
    _add_group(p, plane=True)
    _add_gauge(p)
    p.add_argument("--p", type=float, nargs="+", help="first point (default origin)")
    p.add_argument("--q", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("sphere", help="seeded unit-sphere samples as CSV")
    _add_group(p, plane=True)
    _add_gauge(p)
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sphere)

    p = sub.add_parser("quotient", help="quotient by the third layer and sampled submetry check")
    _add_group(p)
    _add_gauge(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--out", help="write the quotient spec JSON here")
    p.add_argument("--report")
    p.set_defaults(func=cmd_quotient)

    p = sub.add_parser("validate", help="check antisymmetry, grading, Jacobi and associativity")
    _add_group(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--report")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, CarnotError, IndexError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
