"""Command-line driver.

    ganas bench synth|oracle|info ...
    ganas search ganas|random|ea|rlnas|ce ...
    ganas report summary|curve|pareto ...

Exit codes: 0 success, 2 configuration error, 3 benchmark error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .baselines import random_search, regularized_evolution, rlnas
from .benchmark import BenchmarkError, load_tabular, synth_benchmark
from .ce import CategoricalFamily, CESchedule, ce_optimize, onemax
from .graph import (NB101_OPS, OperatorVocabulary, SearchSpaceSpec, chain_space, nb101_space,
                    nb201_space)
from .reporting import (emit_curve, format_table, load_results, report_pareto, run_campaign,
                        summarize, true_front)
from .search import ConfigError, SearchConfig

EXIT_CONFIG = 2
EXIT_BENCH = 3


def _seeds(args) -> list[int]:
    if args.seeds:
        try:
            return [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--seeds: cannot parse {args.seeds!r}") from None
    return [args.seed]


def load_config(path) -> SearchConfig:
    if path is None:
        return SearchConfig()
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return SearchConfig.from_dict(data, path=f"{path}: ")


def _space_from_args(args) -> SearchSpaceSpec:
    ops = args.ops.split(",") if args.ops else None
    if args.space == "nb201":
        return nb201_space(ops) if ops else nb201_space()
    if args.space == "chain":
        if not args.chain_length:
            raise ConfigError("--chain-length is required for chain spaces")
        return chain_space(args.chain_length, ops or [f"op{i}" for i in range(10)])
    return nb101_space(args.max_nodes, args.max_edges, ops or NB101_OPS)


def _bench(args):
    if not args.bench:
        raise ConfigError("--bench is required")
    return load_tabular(args.bench)


# --------------------------------------------------------------------------
# bench


def cmd_bench_synth(args):
    space = _space_from_args(args)
    bench = synth_benchmark(space, args.seed, roughness=args.roughness)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    bench.save_jsonl(out)
    print(json.dumps({"cells": len(bench), "out": str(out)}))


def cmd_bench_oracle(args):
    bench = _bench(args)
    for arch, m, rank in bench.top_k(args.k):
        print(json.dumps({"rank": rank, "accuracy": m.accuracy, "train_seconds": m.train_seconds,
                          "arch": arch.to_json()}))


def cmd_bench_info(args):
    bench = _bench(args)
    acc = np.array([m.accuracy for m in bench.table.values()])
    print(json.dumps({"cells": len(bench), "space": bench.space.to_json(),
                      "tie_seed": bench.tie_seed, "accuracy_max": float(acc.max()),
                      "accuracy_median": float(np.median(acc)),
                      "pareto_front": len(true_front(bench)), **bench.info}, indent=1))


# --------------------------------------------------------------------------
# search


def _campaign(args, method, runner, config):
    bench = _bench(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary = run_campaign(config, bench, _seeds(args), out_dir, method, runner,
                           resume=not args.force)
    print(format_table([summary]))


def cmd_search_ganas(args):
    _campaign(args, "ganas", None, load_config(args.config))


def _budget(args):
    if not args.budget or args.budget < 1:
        raise ConfigError("--budget must be a positive integer")
    return args.budget


def cmd_search_random(args):
    budget = _budget(args)
    _campaign(args, "random", lambda c, b, s: random_search(b, budget, s), None)


def cmd_search_ea(args):
    budget = _budget(args)
    _campaign(args, "ea", lambda c, b, s: regularized_evolution(
        b, args.population, args.tournament, budget, s), None)


def cmd_search_rlnas(args):
    budget = _budget(args)
    _campaign(args, "rlnas", lambda c, b, s: rlnas(b, c, budget, s), load_config(args.config))


def cmd_search_ce(args):
    if args.problem != "onemax":
        raise ConfigError(f"unknown CE problem {args.problem!r}")
    schedule = CESchedule(alpha=args.alpha, delta=args.delta, rho=args.rho,
                          samples=args.samples, max_stages=args.max_stages)
    r = ce_optimize(onemax, CategoricalFamily.uniform([2] * args.n), schedule,
                    np.random.default_rng(args.seed))
    text = json.dumps({"problem": "onemax", "n": args.n, "seed": args.seed, **r.to_json()})
    if args.out_dir:
        out = Path(args.out_dir) / f"ce_onemax_seed{args.seed}.json"
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text + "\n")
    print(text)


# --------------------------------------------------------------------------
# report


def cmd_report_summary(args):
    results = load_results(args.out_dir)
    if not results:
        raise ConfigError(f"no result files in {args.out_dir}")
    methods = sorted({r.method for r in results})
    print(format_table([summarize([r for r in results if r.method == m]) for m in methods]))


def cmd_report_curve(args):
    results = load_results(args.out_dir, args.method)
    if not results:
        raise ConfigError(f"no result files in {args.out_dir}")
    text = emit_curve(results)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_report_pareto(args):
    bench = _bench(args)
    results = load_results(args.out_dir, args.method)
    for row in report_pareto(results, bench):
        print(json.dumps(row))


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="search config JSON")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    common.add_argument("--out-dir", default="results")
    common.add_argument("--bench", help="benchmark JSONL file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ganas", description=__doc__.split("\n\n")[0])
    groups = p.add_subparsers(dest="group", required=True)

    bench = groups.add_parser("bench").add_subparsers(dest="cmd", required=True)
    s = bench.add_parser("synth", parents=[common], help="write a synthetic benchmark")
    s.add_argument("--space", choices=["free-dag", "nb201", "chain"], default="free-dag")
    s.add_argument("--max-nodes", type=int, default=5)
    s.add_argument("--max-edges", type=int, default=9)
    s.add_argument("--ops", help="comma-separated operator names")
    s.add_argument("--chain-length", type=int, default=0)
    s.add_argument("--roughness", type=float, default=0.3)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_bench_synth)
    s = bench.add_parser("oracle", parents=[common], help="print the exact top-k")
    s.add_argument("--k", type=int, default=10)
    s.set_defaults(fn=cmd_bench_oracle)
    bench.add_parser("info", parents=[common]).set_defaults(fn=cmd_bench_info)

    search = groups.add_parser("search").add_subparsers(dest="cmd", required=True)
    search.add_parser("ganas", parents=[common]).set_defaults(fn=cmd_search_ganas)
    for name, fn in (("random", cmd_search_random), ("rlnas", cmd_search_rlnas)):
        s = search.add_parser(name, parents=[common])
        s.add_argument("--budget", type=int)
        s.add_argument("--force", action="store_true", help="re-run seeds with existing results")
        s.set_defaults(fn=fn)
    s = search.add_parser("ea", parents=[common])
    s.add_argument("--budget", type=int)
    s.add_argument("--population", type=int, default=50)
    s.add_argument("--tournament", type=int, default=10)
    s.add_argument("--force", action="store_true")
    s.set_defaults(fn=cmd_search_ea)
    s = search.add_parser("ce", parents=[common])
    s.add_argument("--problem", default="onemax")
    s.add_argument("--n", type=int, default=20)
    s.add_argument("--alpha", type=float, default=20)
    s.add_argument("--delta", type=float, default=1)
    s.add_argument("--rho", type=float, default=0.1)
    s.add_argument("--samples", type=int, default=500)
    s.add_argument("--max-stages", type=int, default=100)
    s.set_defaults(fn=cmd_search_ce, out_dir=None)

    report = groups.add_parser("report").add_subparsers(dest="cmd", required=True)
    report.add_parser("summary", parents=[common]).set_defaults(fn=cmd_report_summary)
    for name, fn in (("curve", cmd_report_curve), ("pareto", cmd_report_pareto)):
        s = report.add_parser(name, parents=[common])
        s.add_argument("--method")
        if name == "curve":
            s.add_argument("--out", help="CSV path (default stdout)")
        s.set_defaults(fn=fn)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if not hasattr(args, "force"):
        args.force = False
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BenchmarkError, FileNotFoundError) as exc:
        print(f"benchmark error: {exc}", file=sys.stderr)
        return EXIT_BENCH
    return 0


if __name__ == "__main__":
    sys.exit(main())
