"""Command-line entry point.

    mmmesh gen-topology --kind medium-48 --seed 3 --out topo.txt
    mmmesh gen-traffic --topology medium-48 --workload uniform --out traffic.csv
    mmmesh run --config run.yaml [--out DIR] [--seed N] [--threads K]
    mmmesh train --config train.yaml [--out DIR] [--seed N]
    mmmesh compare --config compare.yaml [--out DIR] [--threads K]
    mmmesh bench-timing --config bench.yaml [--out DIR]

Exit codes: 0 on success, 2 for configuration problems (also argparse
usage errors), 3 for runtime failures inside the library.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError, MeshError
from . import harness


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mmmesh",
                                description="mmWave mesh backhaul scheduling experiments")
    sub = p.add_subparsers(dest="command", required=True)

    gt = sub.add_parser("gen-topology", help="generate a mesh topology file")
    gt.add_argument("--kind", default="small-10",
                    help="small-10, medium-48, or large-96")
    gt.add_argument("--seed", type=int, default=0)
    gt.add_argument("--buffer-capacity", type=int, default=650)
    gt.add_argument("--out", required=True, help="output topology file")

    gf = sub.add_parser("gen-traffic", help="generate a traffic demand file")
    gf.add_argument("--topology", default="small-10",
                    help="built-in kind or a topology file")
    gf.add_argument("--topology-seed", type=int, default=0)
    gf.add_argument("--workload", default="uniform",
                    help="uniform, few-to-many, or many-to-few")
    gf.add_argument("--total", type=int, default=None,
                    help="total packets (defaults per workload/topology)")
    gf.add_argument("--seed", type=int, default=0)
    gf.add_argument("--out", required=True, help="output traffic CSV")

    def config_cmd(name, help_text, threads=True):
        c = sub.add_parser(name, help=help_text)
        c.add_argument("--config", required=True, help="run config YAML")
        c.add_argument("--out", default=None, help="output directory (overrides config)")
        c.add_argument("--seed", type=int, default=None, help="override config seed")
        c.add_argument("--no-plots", action="store_true", help="skip figure rendering")
        if threads:
            c.add_argument("--threads", type=int, default=1,
                           help="parallel workers across interference levels")
        return c

    config_cmd("run", "run a scheduler and write episode/summary CSVs")
    config_cmd("train", "train the RL scheduler", threads=False)
    config_cmd("compare", "paired greedy-vs-policy comparison")
    config_cmd("bench-timing", "decision-latency benchmark", threads=False)
    return p


def _load(args) -> harness.RunConfig:
    overrides = {"seed": args.seed}
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.no_plots:
        overrides["plots"] = False
    return harness.load_run_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "gen-topology":
            harness.cmd_gen_topology(args.kind, args.seed, args.out,
                                     buffer_capacity=args.buffer_capacity)
        elif args.command == "gen-traffic":
            harness.cmd_gen_traffic(args.topology, args.topology_seed, args.workload,
                                    args.total, args.seed, args.out)
        elif args.command == "run":
            harness.cmd_run(_load(args), threads=args.threads)
        elif args.command == "train":
            harness.cmd_train(_load(args))
        elif args.command == "compare":
            harness.cmd_compare(_load(args), threads=args.threads)
        elif args.command == "bench-timing":
            harness.cmd_bench_timing(_load(args))
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except MeshError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
