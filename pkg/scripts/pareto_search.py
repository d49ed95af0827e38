"""Pareto-front search (accuracy up, train time down) on a 1000-cell chain
benchmark, compared with random search at the same #Q.

    python3 scripts/pareto_search.py --seeds 0-9
"""
import argparse
import json
from pathlib import Path

import numpy as np

from ganas.baselines import random_search
from ganas.benchmark import synth_benchmark
from ganas.graph import chain_space
from ganas.reporting import report_pareto
from ganas.search import SearchConfig, ganas_run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/pareto_chain.json")
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--bench-seed", type=int, default=0)
    args = ap.parse_args()
    lo, hi = (int(x) for x in args.seeds.split("-"))

    cfg = SearchConfig.from_dict(json.loads(Path(args.config).read_text()))
    bench = synth_benchmark(chain_space(3, [f"op{i}" for i in range(10)]), args.bench_seed, 0.3)
    g, r = [], []
    for seed in range(lo, hi + 1):
        res = ganas_run(cfg, bench, seed)
        g.append(report_pareto([res], bench)[0])
        r.append(report_pareto([random_search(bench, res.n_queries, seed)], bench)[0])
        print(f"seed {seed}: #Q {res.n_queries}  ganas {g[-1]['recovered']}/{g[-1]['true_front']}"
              f"  random {r[-1]['recovered']}")
    print(f"mean recovered: ganas {np.mean([x['recovered'] for x in g]):.1f}, "
          f"random {np.mean([x['recovered'] for x in r]):.1f}")


if __name__ == "__main__":
    main()
