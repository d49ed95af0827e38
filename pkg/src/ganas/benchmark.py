"""Tabular performance oracle with unique-query accounting.

A benchmark maps canonical hashes to :class:`Metrics`. Querying charges #Q
once per distinct hash; isomorphic re-encodings and repeats are free.
Ranks follow the un-rounded accuracy with a seeded random tie-break, so no
two cells share a rank.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import (INPUT, OUTPUT, Architecture, OperatorVocabulary, SearchSpaceSpec,
                    enumerate_space, graph_view, hash_many, canonical_hash)


class BenchmarkError(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    train_seconds: float
    param_count: int

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.train_seconds < 0 or self.param_count < 0:
            raise ValueError("negative cost metric")

    def to_json(self) -> dict:
        # repr() of a float round-trips exactly through float()
        return {"accuracy": repr(self.accuracy), "train_seconds": repr(self.train_seconds),
                "param_count": int(self.param_count)}

    @classmethod
    def from_json(cls, d: dict) -> "Metrics":
        return cls(float(str(d["accuracy"])), float(str(d["train_seconds"])),
                   int(d["param_count"]))


class RankTable:
    """Permutation of all hashes by descending accuracy, ties broken by a seeded shuffle."""

    def __init__(self, table: dict[str, Metrics], tie_seed: int):
        hashes = sorted(table)
        acc = np.array([table[h].accuracy for h in hashes])
        tiebreak = np.random.default_rng(tie_seed).permutation(len(hashes))
        order = np.lexsort((tiebreak, -acc))
        self.ordering = [hashes[i] for i in order]
        self.rank = {h: r for r, h in enumerate(self.ordering, start=1)}

    def __len__(self):
        return len(self.ordering)


class Benchmark:
    def __init__(self, space: SearchSpaceSpec, archs: dict[str, Architecture],
                 table: dict[str, Metrics], tie_seed: int = 0, info: dict | None = None):
        self.space = space
        self.archs = archs
        self.table = table
        self.tie_seed = tie_seed
        self.info = dict(info or {})
        self._rank_table = None
        self._lock = threading.Lock()
        self._charged: set[str] = set()
        self.query_count = 0

    def __len__(self):
        return len(self.table)

    def session(self) -> "Benchmark":
        """Same table and ranks, fresh #Q accounting."""
        other = Benchmark(self.space, self.archs, self.table, self.tie_seed, self.info)
        other._rank_table = self._rank_table
        return other

    @property
    def rank_table(self) -> RankTable:
        if self._rank_table is None:
            self._rank_table = RankTable(self.table, self.tie_seed)
        return self._rank_table

    @property
    def charged(self) -> frozenset:
        return frozenset(self._charged)

    def query_hash(self, h: str) -> Metrics:
        m = self.table.get(h)
        if m is None:
            raise BenchmarkError(f"architecture {h} not in benchmark (space mismatch?)")
        with self._lock:
            if h not in self._charged:
                self._charged.add(h)
                self.query_count += 1
        return m

    def query(self, arch: Architecture) -> Metrics:
        return self.query_hash(canonical_hash(arch))

    def peek(self, arch: Architecture) -> Metrics:
        """Look up without charging #Q (oracles and reporting only)."""
        h = canonical_hash(arch)
        if h not in self.table:
            raise BenchmarkError(f"architecture {h} not in benchmark")
        return self.table[h]

    def rank_of_hash(self, h: str) -> int:
        try:
            return self.rank_table.rank[h]
        except KeyError:
            raise BenchmarkError(f"architecture {h} not in benchmark") from None

    def rank_of(self, arch: Architecture) -> int:
        return self.rank_of_hash(canonical_hash(arch))

    def top_k(self, k: int):
        if k > len(self):
            raise BenchmarkError(f"k={k} exceeds benchmark size {len(self)}")
        return [(self.archs[h], self.table[h], r)
                for r, h in enumerate(self.rank_table.ordering[:k], start=1)]

    def save_jsonl(self, path) -> None:
        header = {"header": {"space": self.space.to_json(), "tie_seed": self.tie_seed,
                             "n_cells": len(self), **self.info}}
        with open(path, "w") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for h in sorted(self.table):
                rec = {"arch": self.archs[h].to_json(), "metrics": self.table[h].to_json()}
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def query(bench: Benchmark, arch: Architecture) -> Metrics:
    return bench.query(arch)


def rank_of(bench: Benchmark, arch: Architecture) -> int:
    return bench.rank_of(arch)


def top_k_oracle(bench: Benchmark, k: int):
    """Exact top-k as (arch, metrics, rank) triples."""
    return bench.top_k(k)


def infer_space(archs) -> SearchSpaceSpec:
    archs = list(archs)
    if not archs:
        raise BenchmarkError("empty benchmark")
    if archs[0].kind == "chain":
        length = len(archs[0].choices)
        n_ops = max(max(a.choices) for a in archs) + 1
        return SearchSpaceSpec(OperatorVocabulary.from_ops([f"op{i}" for i in range(n_ops)]),
                               "chain", max_nodes=length + 2, max_edges=None, chain_length=length)
    ops = sorted({o for a in archs for o in a.ops} - {INPUT, OUTPUT})
    max_nodes = max(3, max(len(a.ops) for a in archs))
    max_edges = max(max_nodes - 1, max(len(a.edges) for a in archs))
    return SearchSpaceSpec(OperatorVocabulary.from_ops(ops), "free-dag",
                           max_nodes=max_nodes, max_edges=max_edges)


def load_tabular(path, space: SearchSpaceSpec | None = None, tie_seed: int | None = None
                 ) -> Benchmark:
    """Read a benchmark JSONL file (optional header line, then arch/metrics records)."""
    header = {}
    archs, metrics, lines = [], [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if "header" in obj:
                    if archs:
                        raise BenchmarkError("header must be the first record")
                    header = obj["header"]
                    continue
                archs.append(Architecture.from_json(obj["arch"]))
                metrics.append(Metrics.from_json(obj["metrics"]))
                lines.append(lineno)
            except BenchmarkError as exc:
                raise BenchmarkError(f"{path}:{lineno}: {exc}") from None
            except (ValueError, KeyError, TypeError) as exc:
                raise BenchmarkError(f"{path}:{lineno}: cannot parse record: {exc}") from None
    if space is None:
        space = (SearchSpaceSpec.from_json(header["space"]) if "space" in header
                 else infer_space(archs))
    if tie_seed is None:
        tie_seed = int(header.get("tie_seed", 0))
    hashes = hash_many(archs)
    first_line: dict[str, int] = {}
    table, by_hash = {}, {}
    for h, a, m, ln in zip(hashes, archs, metrics, lines):
        if h in first_line:
            raise BenchmarkError(f"{path}: line {ln} duplicates the architecture on line "
                                 f"{first_line[h]} (hash {h})")
        try:
            space.check(a)
        except ValueError as exc:
            raise BenchmarkError(f"{path}:{ln}: {exc}") from None
        first_line[h] = ln
        table[h] = m
        by_hash[h] = a
    declared = header.get("n_cells")
    if declared is not None and declared != len(table):
        raise BenchmarkError(f"{path}: header declares {declared} cells, found {len(table)}")
    info = {k: v for k, v in header.items() if k not in ("space", "tie_seed", "n_cells")}
    return Benchmark(space, by_hash, table, tie_seed, info)


# --------------------------------------------------------------------------
# synthetic benchmarks


def _hash_normals(seed: int, h: str) -> tuple[float, float]:
    d = hashlib.blake2b(f"{seed}:{h}".encode(), digest_size=32).digest()
    u = [(int.from_bytes(d[i:i + 8], "little") + 0.5) / 2.0 ** 64 for i in range(0, 32, 8)]
    r1, r2 = math.sqrt(-2.0 * math.log(u[0])), math.sqrt(-2.0 * math.log(u[2]))
    return r1 * math.cos(2 * math.pi * u[1]), r2 * math.cos(2 * math.pi * u[3])


def _depth(n: int, edges) -> int:
    succ = [[] for _ in range(n)]
    indeg = [0] * n
    for u, v in edges:
        succ[u].append(v)
        indeg[v] += 1
    order = [i for i in range(n) if indeg[i] == 0]
    dist = [0] * n
    for u in order:
        for v in succ[u]:
            dist[v] = max(dist[v], dist[u] + 1)
            indeg[v] -= 1
            if indeg[v] == 0:
                order.append(v)
    return max(dist)


def _zscore(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return (x - x.mean()) / sd if sd > 0 else np.zeros_like(x)


def synth_benchmark(space: SearchSpaceSpec, seed: int, roughness: float = 0.3,
                    tie_seed: int | None = None, archs=None) -> Benchmark:
    """Deterministic stand-in for a NAS benchmark over an enumerable space.

    score = z(operator counts . w + depth . w_d)
            + roughness * (z(labeled edge bigrams . w_b) + per-cell noise)
    mapped affinely onto accuracy [0.09, 0.95]. At roughness 0 the accuracy
    is linear in operator counts and depth. Operators carry seeded time and
    weight costs, and accuracy weights lean towards expensive operators, so
    accuracy/cost trade-offs exist.
    """
    if not 0.0 <= roughness <= 1.0:
        raise ValueError("roughness must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    vocab = space.vocabulary.names
    ops = space.vocabulary.searchable
    cost = np.sort(rng.uniform(0.5, 2.0, size=len(ops)))
    cost = cost[rng.permutation(len(ops))]
    params = rng.integers(50_000, 2_000_000, size=len(ops))
    w_op = 0.6 * _zscore(cost) + 0.8 * rng.normal(size=len(ops))
    w_depth = 0.5 * rng.normal()
    w_bigram = rng.normal(size=(len(vocab), len(vocab)))
    vidx = {name: i for i, name in enumerate(vocab)}
    oidx = {name: i for i, name in enumerate(ops)}

    if archs is None:
        archs = list(enumerate_space(space))
    hashes = hash_many(archs)
    n = len(archs)
    lin, bigram, noise = np.zeros(n), np.zeros(n), np.zeros(n)
    t_sec, n_par = np.zeros(n), np.zeros(n, dtype=np.int64)
    for i, (a, h) in enumerate(zip(archs, hashes)):
        names, edges = graph_view(a, space)
        counts = np.zeros(len(ops))
        for o in names:
            if o in oidx:
                counts[oidx[o]] += 1
        depth = _depth(len(names), edges)
        lin[i] = counts @ w_op + w_depth * depth
        bigram[i] = sum(w_bigram[vidx[names[u]], vidx[names[v]]] for u, v in edges)
        z1, z2 = _hash_normals(seed, h)
        noise[i] = z1
        t_sec[i] = (200.0 + 300.0 * (counts @ cost) + 25.0 * len(edges)) * math.exp(0.05 * z2)
        n_par[i] = int(counts @ params) + 10_000 * len(edges)
    score = _zscore(lin) + roughness * (_zscore(bigram) + noise)
    lo, hi = score.min(), score.max()
    unit = (score - lo) / (hi - lo) if hi > lo else np.full(n, 0.5)
    acc = 0.09 + 0.86 * unit
    table, by_hash = {}, {}
    for i, h in enumerate(hashes):
        table[h] = Metrics(float(f"{acc[i]:.12f}"), float(f"{t_sec[i]:.1f}"), int(n_par[i]))
        by_hash[h] = archs[i]
    info = {"synth": {"seed": seed, "roughness": roughness}}
    return Benchmark(space, by_hash, table, seed if tie_seed is None else tie_seed, info)
