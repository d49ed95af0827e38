"""Cross-entropy method on one-max: stages needed versus the alpha/delta bound."""
import argparse

import numpy as np

from ganas.ce import CategoricalFamily, CESchedule, ce_optimize, onemax


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=20)
    ap.add_argument("--samples", type=int, default=500)
    ap.add_argument("--rho", type=float, default=0.1)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()

    sched = CESchedule(alpha=args.n, delta=1, rho=args.rho, samples=args.samples)
    stages = []
    for seed in range(args.seeds):
        r = ce_optimize(onemax, CategoricalFamily.uniform([2] * args.n), sched,
                        np.random.default_rng(seed))
        stages.append(r.stages)
        print(f"seed {seed}: best {r.best_score:.0f} after {r.stages} stages, "
              f"gamma {[int(g) for g in r.gamma_trace]}")
    print(f"bound {args.n}; stages mean {np.mean(stages):.1f} max {max(stages)}")


if __name__ == "__main__":
    main()
