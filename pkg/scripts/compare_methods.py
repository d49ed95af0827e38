"""GA-NAS against random search, regularized evolution and RL-NAS on a synthetic
free-DAG benchmark. Baselines get the same #Q as the GA-NAS run with the same seed.

    python3 scripts/compare_methods.py --config configs/free_dag_tuned.json --seeds 0-9
"""
import argparse
import json
from pathlib import Path

from ganas.baselines import random_search, regularized_evolution, rlnas
from ganas.benchmark import synth_benchmark
from ganas.graph import nb101_space
from ganas.reporting import format_table, run_campaign
from ganas.search import SearchConfig


def parse_seeds(s):
    if "-" in s:
        lo, hi = s.split("-")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in s.split(",")]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/free_dag_tuned.json")
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--nodes", type=int, default=5)
    ap.add_argument("--ops", type=int, default=6)
    ap.add_argument("--roughness", type=float, default=0.3)
    ap.add_argument("--bench-seed", type=int, default=0)
    ap.add_argument("--out-dir", default="results/compare")
    args = ap.parse_args()

    cfg = SearchConfig.from_dict(json.loads(Path(args.config).read_text()))
    space = nb101_space(args.nodes, 9, ops=[f"op{i}" for i in range(args.ops)])
    bench = synth_benchmark(space, args.bench_seed, args.roughness)
    print(f"benchmark: {len(bench)} cells")
    seeds = parse_seeds(args.seeds)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    rows = [run_campaign(cfg, bench, seeds, out, "ganas")]
    budget = {s: json.loads((out / f"ganas_seed{s}.json").read_text())["n_queries"] for s in seeds}
    rows.append(run_campaign(cfg, bench, seeds, out, "random",
                             lambda c, b, s: random_search(b, budget[s], s)))
    rows.append(run_campaign(cfg, bench, seeds, out, "rea",
                             lambda c, b, s: regularized_evolution(b, 50, 10, budget[s], s)))
    rows.append(run_campaign(cfg, bench, seeds, out, "rlnas",
                             lambda c, b, s: rlnas(b, c, budget[s], s)))
    print(format_table(rows))


if __name__ == "__main__":
    main()
