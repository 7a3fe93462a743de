"""Command-line entry point: ``mmconv <group> <command> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import core, harness, metrics, sampling, treegen
from .errors import MMError, SizeLimitExceeded, ValidationError

EXIT_VALIDATION = 2
EXIT_SIZE = 3


def _load_json(path: str):
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read JSON from {path}: {exc}") from exc


def _space(path: str) -> core.FiniteMMSpace:
    return core.space_from_json(_load_json(path))


def _emit(obj, out: str | None, fmt: str = "json"):
    text = obj if isinstance(obj, str) else core.dumps(obj) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _search(args) -> metrics.SearchParams:
    if getattr(args, "search", None):
        return metrics.SearchParams.from_json(_load_json(args.search))
    return metrics.SearchParams()


# -- handlers -----------------------------------------------------------------

def cmd_space_validate(args):
    s = _space(args.space)
    _emit({"valid": True, "points": s.point_count, "support": core.support_indices(s),
           "total_mass": s.total_mass}, args.out)


def cmd_space_restrict(args):
    _emit(core.space_to_json(core.restrict(_space(args.space), args.R)), args.out)


def cmd_space_dmd(args):
    s = _space(args.space)
    if args.samples:
        d = sampling.dmd_sample(s, args.m, args.samples, args.seed)
    else:
        d = sampling.dmd_exact(s, args.m)
    _emit(d.to_json(), args.out)


def cmd_space_lowmass(args):
    s = _space(args.space)
    if args.delta is not None:
        v = (core.global_lower_mass(s, args.delta) if args.R is None
             else core.lower_mass(s, args.delta, args.R))
        _emit({"delta": args.delta, "R": args.R, "value": v}, args.out)
        return
    p = core.lower_mass_profile(s, args.R)
    _emit({"R": args.R, "breakpoints": p.breakpoints.tolist(), "values": p.values.tolist()},
          args.out)


def _two(args):
    return _space(args.a), _space(args.b)


def cmd_dist_pr(args):
    obj = _load_json(args.input)
    try:
        mu, nu, dist = obj["mu"], obj["nu"], obj["dist"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("expected {\"mu\", \"nu\", \"dist\"}") from exc
    v = metrics.prohorov_oracle(mu, nu, dist) if args.oracle else metrics.prohorov(mu, nu, dist)
    _emit({"value": v, "certificate": "exact"}, args.out)


def cmd_dist_hausdorff(args):
    obj = _load_json(args.input)
    try:
        a, b, dist = obj["a"], obj["b"], obj["dist"]
    except (KeyError, TypeError) as exc:
        raise ValidationError("expected {\"a\", \"b\", \"dist\"}") from exc
    _emit({"value": metrics.hausdorff(a, b, dist), "certificate": "exact"}, args.out)


def cmd_dist_gp(args):
    a, b = _two(args)
    _emit(metrics.gp_search(a, b, _search(args)).to_json(), args.out)


def cmd_dist_ghp(args):
    a, b = _two(args)
    _emit(metrics.ghp_search(a, b, _search(args)).to_json(), args.out)


def cmd_dist_sghp(args):
    a, b = _two(args)
    v = metrics.sghp(a, b, _search(args))
    _emit({"value": v, "certificate": "exact" if v == 0 else "upper_bound", "pairing": []},
          args.out)


def cmd_dist_localized(args):
    a, b = _two(args)
    v = metrics.localized(args.inner, a, b, _search(args))
    _emit({"value": v, "certificate": "exact" if v == 0 else "upper_bound", "pairing": []},
          args.out)


def cmd_gen_gw(args):
    p = treegen.geometric_offspring() if args.offspring is None else json.loads(args.offspring)
    sample = treegen.gw_tree(p, args.seed, args.node_cap)
    obj = sample.tree.to_json()
    obj.update(truncated=sample.truncated, extinct=sample.extinct)
    _emit(obj, args.out)


def cmd_gen_kallenberg(args):
    if args.continuum:
        s = treegen.continuum_kallenberg_sample(args.horizon, args.n_grid, args.seed, args.R,
                                                args.h)
    else:
        s = treegen.kallenberg_discrete(args.n, args.steps, args.seed, args.R)
    _emit(core.space_to_json(s), args.out)


def cmd_gen_brownian(args):
    path = treegen.brownian_path(args.n_grid, args.horizon, args.seed)
    if args.pitman:
        path = treegen.pitman_transform(path)
    lines = ["t,value"] + [f"{t!r},{v!r}" for t, v in zip(path.times.tolist(),
                                                          path.values.tolist())]
    _emit("\n".join(lines) + "\n", args.out)


def _run(kind):
    def handler(args):
        cfg = _load_json(args.config) if args.config else {}
        if args.seed is not None:
            cfg["seed"] = args.seed
        report = harness.RUNNERS[kind](cfg, workers=args.workers)
        fmt = args.format or ("json" if (args.out or "").endswith(".json") else "csv")
        _emit(report.to_csv() if fmt == "csv" else report.to_json(), args.out)
    return handler


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmconv", description=__doc__)
    groups = p.add_subparsers(dest="group", required=True)

    def common(sp, seed_default=0):
        sp.add_argument("--out", help="write output here instead of stdout")
        sp.add_argument("--seed", type=int, default=seed_default)
        return sp

    sp = groups.add_parser("space", help="inspect a single space").add_subparsers(
        dest="cmd", required=True)
    c = common(sp.add_parser("validate"))
    c.add_argument("space")
    c.set_defaults(fn=cmd_space_validate)
    c = common(sp.add_parser("restrict"))
    c.add_argument("space")
    c.add_argument("R", type=float)
    c.set_defaults(fn=cmd_space_restrict)
    c = common(sp.add_parser("dmd"))
    c.add_argument("space")
    c.add_argument("m", type=int)
    c.add_argument("--samples", type=int, help="Monte Carlo estimate with this many draws")
    c.set_defaults(fn=cmd_space_dmd)
    c = common(sp.add_parser("lowmass"))
    c.add_argument("space")
    c.add_argument("--delta", type=float)
    c.add_argument("--R", type=float)
    c.set_defaults(fn=cmd_space_lowmass)

    dp = groups.add_parser("dist", help="distances").add_subparsers(dest="cmd", required=True)
    c = common(dp.add_parser("pr", help='Prohorov; input {"mu", "nu", "dist"}'))
    c.add_argument("input")
    c.add_argument("--oracle", action="store_true", help="use subset enumeration")
    c.set_defaults(fn=cmd_dist_pr)
    c = common(dp.add_parser("hausdorff", help='input {"a", "b", "dist"}'))
    c.add_argument("input")
    c.set_defaults(fn=cmd_dist_hausdorff)
    for name, fn in (("gp", cmd_dist_gp), ("ghp", cmd_dist_ghp), ("sghp", cmd_dist_sghp)):
        c = common(dp.add_parser(name))
        c.add_argument("a")
        c.add_argument("b")
        c.add_argument("--search", help="SearchParams JSON file")
        c.set_defaults(fn=fn)
    c = common(dp.add_parser("localized"))
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--inner", choices=["GP", "SGHP"], default="GP")
    c.add_argument("--search", help="SearchParams JSON file")
    c.set_defaults(fn=cmd_dist_localized)

    gp = groups.add_parser("gen", help="generators").add_subparsers(dest="cmd", required=True)
    c = common(gp.add_parser("gw"))
    c.add_argument("--offspring", help="JSON probability vector (default geometric 1/2)")
    c.add_argument("--node-cap", type=int, default=1000)
    c.set_defaults(fn=cmd_gen_gw)
    c = common(gp.add_parser("kallenberg"))
    c.add_argument("--n", type=int, default=8)
    c.add_argument("--steps", type=int, default=4096)
    c.add_argument("--R", type=float, default=1.0)
    c.add_argument("--continuum", action="store_true")
    c.add_argument("--horizon", type=float, default=8.0)
    c.add_argument("--n-grid", type=int, default=100_000)
    c.add_argument("--h", type=float, default=0.01)
    c.set_defaults(fn=cmd_gen_kallenberg)
    c = common(gp.add_parser("brownian"))
    c.add_argument("--n-grid", type=int, default=1000)
    c.add_argument("--horizon", type=float, default=1.0)
    c.add_argument("--pitman", action="store_true")
    c.set_defaults(fn=cmd_gen_brownian)

    rp = groups.add_parser("run", help="experiments").add_subparsers(dest="cmd", required=True)
    for kind in harness.RUNNERS:
        c = common(rp.add_parser(kind), seed_default=None)
        c.add_argument("--config", help="experiment config JSON")
        c.add_argument("--workers", type=int, default=1)
        c.add_argument("--format", choices=["csv", "json"])
        c.set_defaults(fn=_run(kind))
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except SizeLimitExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SIZE
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
