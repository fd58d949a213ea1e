"""Command line: ``dupinlab list``, ``dupinlab run CONFIG`` and shorthand flags.

Exit codes: 0 when every requested assertion passes, 1 when a stage fails
or an assertion does not hold, 2 for usage or config errors.
"""
from __future__ import annotations

import argparse
import sys

from . import registry
from .pipeline import STAGE_OPTIONS, ConfigError, load_config, parse_config, run
from .reporting import dumps

# shorthand surface parameters: flag -> config key
PARAM_FLAGS = {
    "R": "R",
    "r": "r",
    "eps": "eps",
    "a": "a",
    "b": "b",
    "c": "c",
    "radius": "radius",
    "n": "n",
    "half_width": "half_width",
    "inv_radius": "inv_radius",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(
        prog="dupinlab",
        description="Principal curvature, Dupin and focal-set analysis of catalog hypersurfaces.",
    )
    sub = p.add_subparsers(dest="command")
    ls = sub.add_parser("list", help="list catalog surfaces")
    ls.add_argument("--json", action="store_true", help="print the listing as JSON")
    rp = sub.add_parser("run", help="run a YAML pipeline config")
    rp.add_argument("config")
    rp.add_argument("--out", help="override output_dir")
    rp.add_argument("--seed", type=int, help="override seed")

    g = p.add_argument_group("shorthand run (no subcommand)")
    g.add_argument("--surface", choices=list(registry.SURFACES))
    g.add_argument(
        "--stage",
        action="append",
        help=f"stage to run; repeat or comma-separate ({', '.join(STAGE_OPTIONS)})",
    )
    g.add_argument("--out", dest="shorthand_out", default="dupinlab-out", metavar="DIR")
    g.add_argument("--seed", dest="shorthand_seed", type=int, default=0, metavar="N")
    for flag in PARAM_FLAGS:
        kind = int if flag == "n" else float
        g.add_argument(f"--{flag.replace('_', '-')}", dest=f"p_{flag}", type=kind, metavar="VALUE")
    return p


def _shorthand_config(args):
    stages = []
    for item in args.stage or ["analyze"]:
        stages.extend(s.strip() for s in item.split(",") if s.strip())
    params = {
        PARAM_FLAGS[k]: getattr(args, f"p_{k}")
        for k in PARAM_FLAGS
        if getattr(args, f"p_{k}") is not None
    }
    raw = {
        "surface": {"name": args.surface, "params": params},
        "seed": args.shorthand_seed,
        "output_dir": args.shorthand_out,
        "pipeline": [{"stage": s} for s in stages],
    }
    return parse_config(raw)


def _print_listing(as_json):
    rows = registry.catalog_list()
    if as_json:
        sys.stdout.write(dumps(rows))
        return
    for row in rows:
        params = ", ".join(f"{k}={v}" for k, v in row["params"].items())
        degree = row["implicit_degree"] if row["implicit_degree"] is not None else "-"
        print(
            f"{row['name']:<16} R^{row['ambient_dim']}  betti={tuple(row['betti_z2'])}  "
            f"implicit degree={degree}  ({params})  {row['description']}"
        )


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "list":
        _print_listing(args.json)
        return 0
    try:
        if args.command == "run":
            config = load_config(args.config, args.out, args.seed)
        elif args.surface:
            config = _shorthand_config(args)
        else:
            parser.print_usage(sys.stderr)
            print("dupinlab: error: give a subcommand or --surface", file=sys.stderr)
            return 2
    except ConfigError as exc:
        print(f"dupinlab: config error: {exc}", file=sys.stderr)
        return 2
    result = run(config, log=lambda msg: print(msg, file=sys.stderr))
    if result.failed_stage:
        print(f"dupinlab: stage {result.failed_stage} failed", file=sys.stderr)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
