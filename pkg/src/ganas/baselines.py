"""Comparison searchers: random search, regularized evolution, RL-NAS."""

from __future__ import annotations

import time
from collections import deque

import numpy as np

from .benchmark import Benchmark
from .generator import Generator, GeneratorConfig
from .graph import INPUT, OUTPUT, Architecture, SearchSpaceSpec, canonical_hash, hash_many
from .rl import collect, ppo_update, validity_reward
from .search import Evaluations, SearchConfig, SearchResult


def _trace_point(evals: Evaluations, t: int, k: int) -> dict:
    top = sorted(evals.records, key=lambda r: r.rank)[:k]
    return {"t": t, "gamma": min(r.accuracy for r in top), "q": evals.q,
            "truth_min": min(r.accuracy for r in top), "truth_max": max(r.accuracy for r in top)}


def random_search(bench: Benchmark, budget: int, seed: int, k: int = 25,
                  chunk: int = 50) -> SearchResult:
    """Query ``budget`` distinct cells drawn uniformly from the benchmark."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    start = time.perf_counter()
    bench = bench.session()
    rng = np.random.default_rng(seed)
    pool = sorted(bench.table)
    order = rng.permutation(len(pool))[:budget]
    evals = Evaluations(bench)
    trace = []
    for i, j in enumerate(order, start=1):
        evals.add(bench.archs[pool[j]], pool[j], i)
        if i % chunk == 0 or i == len(order):
            trace.append(_trace_point(evals, len(trace) + 1, k))
    echo = {"budget": budget, "k": k}
    return evals.result("random", seed, trace, echo, (), time.perf_counter() - start)


# --------------------------------------------------------------------------
# regularized evolution


def mutate(arch: Architecture, space: SearchSpaceSpec, rng: np.random.Generator) -> Architecture:
    """One random edit: flip an operator, or (free DAGs) toggle one forward edge."""
    ops = space.vocabulary.searchable
    if arch.kind == "chain":
        choices = list(arch.choices)
        pos = int(rng.integers(len(choices)))
        choices[pos] = int((choices[pos] + rng.integers(1, len(ops))) % len(ops))
        return Architecture.chain(choices)
    names = list(arch.ops)
    inner = [i for i, o in enumerate(names) if o not in (INPUT, OUTPUT)]
    edge_move = space.topology_mode == "free-dag" and (not inner or rng.random() < 0.5)
    if not edge_move and inner and len(ops) > 1:
        i = inner[int(rng.integers(len(inner)))]
        names[i] = ops[(ops.index(names[i]) + int(rng.integers(1, len(ops)))) % len(ops)]
        return Architecture.cell(names, arch.edges)
    n = len(names)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    u, v = pairs[int(rng.integers(len(pairs)))]
    edges = set(arch.edges) ^ {(u, v)}
    return Architecture.cell(names, sorted(edges))


def regularized_evolution(bench: Benchmark, population: int, tournament: int, budget: int,
                          seed: int, k: int = 25, max_tries: int = 100,
                          chunk: int = 50) -> SearchResult:
    """Aging evolution: tournament parent, one mutation, oldest member dies."""
    if population > budget:
        raise ValueError("population must not exceed the budget")
    start = time.perf_counter()
    bench = bench.session()
    space = bench.space
    rng = np.random.default_rng(seed)
    evals = Evaluations(bench)
    pool = sorted(bench.table)
    pop = deque()
    trace = []
    step = 0

    def note():
        if evals.q % chunk == 0 or evals.q == budget:
            if not trace or trace[-1]["q"] != evals.q:
                trace.append(_trace_point(evals, len(trace) + 1, k))

    for j in rng.permutation(len(pool))[:population]:
        pop.append(evals.add(bench.archs[pool[j]], pool[j], 0))
        note()
    # revisits are free, so cap the total number of children
    while evals.q < budget and step < 50 * budget:
        step += 1
        idx = rng.choice(len(pop), size=min(tournament, len(pop)), replace=False)
        parent = min((pop[i] for i in idx), key=lambda r: r.rank)
        child = None
        for _ in range(max_tries):
            cand = mutate(parent.arch, space, rng)
            h = canonical_hash(cand)
            if h in bench.table:
                child = (cand, h)
                break
        if child is None:
            continue
        pop.append(evals.add(child[0], child[1], step))
        pop.popleft()
        note()
    echo = {"population": population, "tournament": tournament, "budget": budget, "k": k}
    return evals.result("ea", seed, trace, echo, (), time.perf_counter() - start)


# --------------------------------------------------------------------------
# RL-NAS ablation


def accuracy_rewards(archs, evals: Evaluations, budget: int, t: int = 0,
                     penalty: float = -0.1) -> np.ndarray:
    """RL-NAS final reward: R_v for invalid cells (never queried), otherwise
    the benchmark accuracy. Novel cells past the budget get 0 and no query."""
    out = np.zeros(len(archs))
    for i, (a, h) in enumerate(zip(archs, hash_many(archs))):
        rv = validity_reward(a, penalty)
        if rv < 0 or h not in evals.bench.table:
            out[i] = rv
        elif h in evals or evals.q < budget:
            out[i] = evals.add(a, h, t).accuracy
    return out


def rlnas(bench: Benchmark, config: SearchConfig, budget: int, seed: int,
          max_updates: int = 2000, patience: int = 50) -> SearchResult:
    """Generator + PPO with the queried accuracy as final reward (no discriminator).

    Stops at the budget, after ``max_updates`` PPO updates, or once ``patience``
    consecutive batches brought no new query.
    """
    start = time.perf_counter()
    bench = bench.session()
    g_rng, _, _, rng = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    gen = Generator(bench.space, g_rng, GeneratorConfig(config.hidden, config.gnn_layers))
    rcfg = config.reward_config()
    evals = Evaluations(bench)
    trace = []

    def reward(archs):
        return accuracy_rewards(archs, evals, budget, len(trace) + 1, rcfg.violation_penalty)

    idle = 0
    for _ in range(max_updates):
        before = evals.q
        trajs = collect(gen, rcfg.batch_episodes, rng, reward, rcfg)
        if evals.records:
            trace.append(_trace_point(evals, len(trace) + 1, config.truth_size))
        idle = idle + 1 if evals.q == before else 0
        if evals.q >= budget or idle >= patience:
            break
        ppo_update(gen, trajs, rcfg)
    echo = {**config.to_dict(), "budget": budget}
    return evals.result("rlnas", seed, trace, echo, (), time.perf_counter() - start)
