"""The outer GA-NAS loop: truth-set selection, sample-size schedule, traces."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .benchmark import Benchmark, BenchmarkError, Metrics
from .discriminator import Discriminator, DiscriminatorConfig
from .generator import Generator, GeneratorConfig
from .graph import Architecture, hash_many
from .rl import RewardConfig, adversarial_round

log = logging.getLogger(__name__)

MODES = ("topk", "constrained", "pareto")


class ConfigError(ValueError):
    pass


@dataclass
class SearchConfig:
    iterations: int = 10
    init_size: int = 50
    init_method: str = "random"  # random | worst50
    eval_base: int = 100
    eval_inc: int = 50
    schedule: str = "linear"  # linear | uniform
    truth_size: int = 25
    inner_rounds: int = 5
    mode: str = "topk"
    max_train_seconds: float | None = None
    max_param_count: int | None = None
    pareto_fronts: int = 4
    max_queries: int | None = None
    g_lr: float = 1e-4
    d_lr: float = 1e-3
    gnn_layers: int = 2
    hidden: int = 64
    d_epochs: int = 10
    d_batch: int = 64
    pairwise: bool = True
    retain_discriminator: bool = True
    entropy_coef: float = 0.1
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    discount: float = 1.0
    value_coef: float = 0.5
    ppo_epochs: int = 4
    batch_episodes: int = 32
    attempt_factor: int = 50
    seeds: list = field(default_factory=lambda: [0])

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.eval_inc < 0:
            raise ConfigError("eval_inc must be >= 0")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.init_method not in ("random", "worst50"):
            raise ConfigError(f"unknown init_method {self.init_method!r}")
        if self.schedule not in ("linear", "uniform"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.mode == "constrained" and self.max_train_seconds is None and self.max_param_count is None:
            raise ConfigError("constrained mode needs max_train_seconds or max_param_count")
        if self.truth_size < 2:
            raise ConfigError("truth_size must be >= 2")

    @classmethod
    def from_dict(cls, d: dict, path: str = "") -> "SearchConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        for key in d:
            if key not in known:
                raise ConfigError(f"{path}{key}: unknown config key")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def reward_config(self) -> RewardConfig:
        return RewardConfig(entropy_coef=self.entropy_coef, clip_epsilon=self.clip_epsilon,
                            gae_lambda=self.gae_lambda, discount=self.discount,
                            value_coef=self.value_coef, ppo_epochs=self.ppo_epochs,
                            batch_episodes=self.batch_episodes, g_lr=self.g_lr)

    def schedule_size(self, t: int) -> int:
        """|X_t| for t >= 1."""
        if self.schedule == "uniform":
            return self.eval_base
        return self.eval_base + (t - 1) * self.eval_inc


@dataclass(frozen=True)
class EvalRecord:
    hash: str
    arch: Architecture
    metrics: Metrics
    rank: int
    t: int

    @property
    def accuracy(self):
        return self.metrics.accuracy

    @property
    def train_seconds(self):
        return self.metrics.train_seconds


@dataclass
class TruthSet:
    members: list

    @property
    def archs(self):
        return [r.arch for r in self.members]

    @property
    def hashes(self):
        return [r.hash for r in self.members]

    @property
    def threshold(self) -> float:
        return min(r.accuracy for r in self.members)

    def __len__(self):
        return len(self.members)


def dominates(a, b) -> bool:
    """a dominates b: no worse in accuracy (up) and train time (down), better in one."""
    return (a.accuracy >= b.accuracy and a.train_seconds <= b.train_seconds
            and (a.accuracy > b.accuracy or a.train_seconds < b.train_seconds))


def pareto_fronts(records, n: int | None = None):
    """Successive non-dominated fronts. Returns (fronts, exhausted) where
    ``exhausted`` flags that fewer than ``n`` fronts exist."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    acc = np.array([r.accuracy for r in records])
    sec = np.array([r.train_seconds for r in records])
    # dom[i, j]: i dominates j
    dom = ((acc[:, None] >= acc[None, :]) & (sec[:, None] <= sec[None, :])
           & ((acc[:, None] > acc[None, :]) | (sec[:, None] < sec[None, :])))
    remaining = np.ones(len(records), dtype=bool)
    fronts = []
    while remaining.any() and (n is None or len(fronts) < n):
        dominated = (dom & remaining[:, None]).any(axis=0)
        front = np.flatnonzero(remaining & ~dominated)
        fronts.append([records[i] for i in front])
        remaining[front] = False
    exhausted = n is not None and len(fronts) < n
    return fronts, exhausted


def first_front(records) -> list:
    """Non-dominated subset by a sort-and-sweep (O(n log n), for large tables)."""
    order = sorted(records, key=lambda r: (-r.accuracy, r.train_seconds))
    front, best_higher = [], float("inf")
    i = 0
    while i < len(order):
        j = i
        while j < len(order) and order[j].accuracy == order[i].accuracy:
            j += 1
        t_min = order[i].train_seconds
        if t_min < best_higher:
            front += [r for r in order[i:j] if r.train_seconds == t_min]
            best_higher = t_min
        i = j
    return front


def hypervolume(records, ref_seconds: float) -> float:
    """Area dominated by ``records`` above accuracy 0 and below ``ref_seconds``.

    Summed exactly and rounded once, so adding records never lowers the value
    (float summation order would otherwise wobble by an ulp).
    """
    pts = sorted((r.train_seconds, r.accuracy) for r in records if r.train_seconds < ref_seconds)
    xs = [Fraction(p[0]) for p in pts] + [Fraction(ref_seconds)]
    area, best = Fraction(0), Fraction(0)
    for i, (_, accuracy) in enumerate(pts):
        best = max(best, Fraction(accuracy))
        area += best * (xs[i + 1] - xs[i])
    return float(area)


def _feasible(r: EvalRecord, config: SearchConfig) -> bool:
    if config.max_train_seconds is not None and r.train_seconds > config.max_train_seconds:
        return False
    if config.max_param_count is not None and r.metrics.param_count > config.max_param_count:
        return False
    return True


def select_truth(records, k: int, mode: str = "topk", config: SearchConfig | None = None) -> TruthSet:
    records = list(records)
    if mode == "pareto":
        n = config.pareto_fronts if config else 4
        fronts, _ = pareto_fronts(records, n)
        return TruthSet(sorted((r for f in fronts for r in f), key=lambda r: r.rank))
    if mode == "constrained":
        records = [r for r in records if _feasible(r, config)]
        if not records:
            raise ValueError("no evaluated architecture satisfies the constraint")
    elif mode != "topk":
        raise ValueError(f"unknown mode {mode!r}")
    return TruthSet(sorted(records, key=lambda r: r.rank)[:k])


@dataclass
class SearchResult:
    method: str
    seed: int
    best: dict
    trace: list
    history: list  # [hash, accuracy, train_seconds] per charged query, in order
    config_echo: dict
    n_queries: int
    shortfalls: list = field(default_factory=list)
    bench_info: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_json(self) -> dict:
        # wall time is left out so identical runs serialise identically
        return {"method": self.method, "seed": self.seed, "best": self.best,
                "trace": self.trace, "n_queries": self.n_queries, "history": self.history,
                "shortfalls": self.shortfalls, "config_echo": self.config_echo,
                "bench": self.bench_info}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, d: dict) -> "SearchResult":
        return cls(d["method"], d["seed"], d["best"], d["trace"], d["history"],
                   d["config_echo"], d["n_queries"], d.get("shortfalls", []), d.get("bench", {}))

    def best_curve(self) -> np.ndarray:
        """Best accuracy after each charged query."""
        return np.maximum.accumulate(np.array([h[1] for h in self.history])) if self.history \
            else np.zeros(0)


class Evaluations:
    """Bookkeeping shared by all searchers: charged queries and best so far."""

    def __init__(self, bench: Benchmark):
        self.bench = bench
        self.records: list[EvalRecord] = []
        self.by_hash: dict[str, EvalRecord] = {}
        self.best: EvalRecord | None = None
        self.q_at_best = 0

    def __contains__(self, h):
        return h in self.by_hash

    def add(self, arch: Architecture, h: str, t: int) -> EvalRecord:
        if h in self.by_hash:
            return self.by_hash[h]
        m = self.bench.query_hash(h)
        r = EvalRecord(h, arch, m, self.bench.rank_of_hash(h), t)
        self.records.append(r)
        self.by_hash[h] = r
        if self.best is None or r.rank < self.best.rank:
            self.best = r
            self.q_at_best = self.bench.query_count
        return r

    @property
    def q(self):
        return self.bench.query_count

    def result(self, method, seed, trace, config_echo, shortfalls=(), wall=0.0) -> SearchResult:
        b = self.best
        best = {} if b is None else {
            "arch": b.arch.to_json(), "hash": b.hash, "accuracy": b.accuracy,
            "train_seconds": b.train_seconds, "rank": b.rank, "q_at_best": self.q_at_best}
        hist = [[r.hash, r.accuracy, r.train_seconds] for r in self.records]
        info = {"n_cells": len(self.bench), **self.bench.info}
        return SearchResult(method, seed, best, list(trace), hist, dict(config_echo),
                            self.q, list(shortfalls), info, wall)


def seed_truth_with(bench: Benchmark, archs) -> list[tuple[Architecture, str]]:
    """Check that the listed architectures exist in ``bench``; return (arch, hash) pairs."""
    archs = list(archs)
    out = []
    for a, h in zip(archs, hash_many(archs)):
        if h not in bench.table:
            raise BenchmarkError(f"seed architecture {h} not in benchmark")
        out.append((a, h))
    return out


def worst_half(bench: Benchmark) -> list[str]:
    """Hashes of cells in the lower half on accuracy and upper half on train time."""
    acc = np.array([m.accuracy for m in bench.table.values()])
    sec = np.array([m.train_seconds for m in bench.table.values()])
    a_med, s_med = np.median(acc), np.median(sec)
    return sorted(h for h, m in bench.table.items()
                  if m.accuracy <= a_med and m.train_seconds >= s_med)


def _gamma(truth: TruthSet, evals: Evaluations, config: SearchConfig, ref: float) -> float:
    if config.mode == "pareto":
        return hypervolume(evals.records, ref)
    return truth.threshold


def ganas_run(config: SearchConfig, bench: Benchmark, seed: int, seed_archs=(),
              method: str = "ganas") -> SearchResult:
    start = time.perf_counter()
    bench = bench.session()
    space = bench.space
    init_rng, g_rng, d_rng, rng = [np.random.default_rng(s)
                                   for s in np.random.SeedSequence(seed).spawn(4)]
    gen = Generator(space, g_rng, GeneratorConfig(config.hidden, config.gnn_layers))
    d_cfg = DiscriminatorConfig(config.hidden, config.gnn_layers, config.d_lr, config.d_epochs,
                                config.d_batch, config.pairwise, config.retain_discriminator)
    disc = Discriminator(space, d_rng, d_cfg)
    rcfg = config.reward_config()
    evals = Evaluations(bench)
    budget = config.max_queries if config.max_queries is not None else float("inf")

    for a, h in seed_truth_with(bench, seed_archs):
        evals.add(a, h, 0)
    if config.init_method == "worst50":
        init = [h for h in worst_half(bench) if h not in evals]
    else:
        pool = sorted(h for h in bench.table if h not in evals)
        take = min(config.init_size, len(pool))
        init = [pool[i] for i in init_rng.choice(len(pool), size=take, replace=False)]
    for h in init:
        if evals.q >= budget:
            break
        evals.add(bench.archs[h], h, 0)

    ref = max(m.train_seconds for m in bench.table.values()) + 1.0
    trace, shortfalls = [], []
    for t in range(1, config.iterations + 1):
        want = min(config.schedule_size(t), budget - evals.q)
        if want <= 0:
            break
        truth = select_truth(evals.records, config.truth_size, config.mode, config)
        stats = []
        if len(truth) >= 2:
            if not config.retain_discriminator:
                disc = Discriminator(space, d_rng, d_cfg)
            stats = adversarial_round(gen, disc, truth.archs, rcfg, rng, config.inner_rounds,
                                      config.d_epochs, config.d_lr)
        cap = config.attempt_factor * int(want)
        archs, hashes, short = gen.generate_unique_valid(int(want), rng, cap,
                                                         exclude=evals.by_hash.keys())
        for a, h in zip(archs, hashes):
            if h not in bench.table:
                log.warning("generated cell %s missing from benchmark; skipped", h)
                short += 1
                continue
            evals.add(a, h, t)
        if short:
            shortfalls.append({"t": t, "missing": int(short)})
        truth = select_truth(evals.records, config.truth_size, config.mode, config)
        accs = [r.accuracy for r in truth.members]
        trace.append({"t": t, "gamma": _gamma(truth, evals, config, ref), "q": evals.q,
                      "truth_min": min(accs), "truth_max": max(accs),
                      "truth": truth.hashes, "generated": len(archs),
                      "d_accuracy": stats[-1].d_accuracy if stats else None,
                      "mean_reward": stats[-1].mean_reward if stats else None})
    return evals.result(method, seed, trace, config.to_dict(), shortfalls,
                        time.perf_counter() - start)
