"""Command-line entry point: ``genwave run | list-scenarios | compare``."""
from __future__ import annotations

import argparse
import sys

from . import harness

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_ERROR = 0, 1, 2, 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="genwave", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write a result bundle")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", metavar="PATH", help="INI config file")
    src.add_argument("--scenario", metavar="NAME", help="run a scenario with its defaults")
    run.add_argument("--out", metavar="DIR",
                     help=f"bundle directory (default: ${harness.OUTPUT_ENV}/<scenario>)")
    run.add_argument("--seed", type=int, help="override the config seed")
    run.add_argument("--grid", metavar="EPS0,Q,J", help="override the eps grid")
    run.add_argument("--svg", action="store_true", help="also render SVG line plots")

    ls = sub.add_parser("list-scenarios", help="list scenarios and their parameters")
    ls.add_argument("--verbose", "-v", action="store_true", help="show parameters")

    cmp_ = sub.add_parser("compare", help="diff two bundles of the same scenario")
    cmp_.add_argument("bundle_a")
    cmp_.add_argument("bundle_b")
    return p


def _cmd_run(args) -> int:
    try:
        grid = harness.parse_grid_option(args.grid) if args.grid else None
        if args.config:
            cfg = harness.load_config(args.config, seed=args.seed, grid=grid)
        else:
            cfg = harness.default_config(args.scenario, seed=args.seed or 0, grid=grid)
    except (harness.ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    bundle = harness.run_scenario(cfg, out=args.out, svg=args.svg)
    for c in bundle.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark}  {c.name:<32} {c.value:<14.6g} target {c.target}")
    for err in bundle.manifest["errors"]:
        print(f"ERROR {err['type']}: {err['message']}", file=sys.stderr)
    print(f"{bundle.status}: bundle written to {bundle.root}")
    if bundle.status == "error":
        return EXIT_ERROR
    return EXIT_OK if bundle.passed else EXIT_FAIL


def _cmd_list(args) -> int:
    for name, sc in sorted(harness.SCENARIOS.items()):
        eps0, q, count = sc.grid
        print(f"{name:<18} {sc.summary}  [grid {eps0:g},{q:g},{count}]")
        if args.verbose:
            for key, prm in sorted(sc.params.items()):
                default = ",".join(map(str, prm.default)) if isinstance(prm.default, tuple) \
                    else prm.default
                extra = f"  {prm.help}" if prm.help else ""
                print(f"    {key} ({prm.kind}) = {default}{extra}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    try:
        rep = harness.compare_runs(args.bundle_a, args.bundle_b)
    except (ValueError, FileNotFoundError) as exc:
        print(f"compare error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if rep.empty:
        print("no differences")
        return EXIT_OK
    for r in rep.rows:
        delta = "" if r["delta"] is None else f"{r['delta']:+.4g}"
        flag = "  VERDICT FLIP" if r["flip"] else ""
        print(f"{r['kind']:<6} {r['name']:<34} {r['a']!s:<18} -> {r['b']!s:<18} {delta}"
              f"{flag} {r['note']}")
    return EXIT_FAIL if rep.flips else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "list-scenarios": _cmd_list, "compare": _cmd_compare}
    return handler[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
