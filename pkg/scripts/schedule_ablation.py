"""Uniform versus linearly growing |X_t| at roughly equal total #Q."""
import argparse
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from ganas.benchmark import synth_benchmark
from ganas.graph import nb101_space
from ganas.search import SearchConfig, ganas_run


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default="configs/free_dag_tuned.json")
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    base = SearchConfig.from_dict(json.loads(Path(args.config).read_text()))
    bench = synth_benchmark(nb101_space(5, 9, ops=[f"op{i}" for i in range(6)]), 0, 0.3)
    total = sum(base.schedule_size(t) for t in range(1, base.iterations + 1))
    variants = {"linear": base,
                "uniform": replace(base, schedule="uniform", eval_base=total // base.iterations)}
    for name, cfg in variants.items():
        runs = [ganas_run(cfg, bench, s) for s in range(args.seeds)]
        print(f"{name:8s} mean rank {np.mean([r.best['rank'] for r in runs]):7.1f}  "
              f"mean #Q {np.mean([r.n_queries for r in runs]):.0f}")


if __name__ == "__main__":
    main()
