"""Search spaces, architectures, validity scoring and canonical hashing.

A cell is a DAG whose nodes carry operator labels; node 0 is conventionally
INPUT and the sink is OUTPUT. A chain is a fixed-length tuple of operator
indices (macro search). Invalid cells are representable on purpose so that
the validity score can be computed for anything the generator emits.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

INPUT = "INPUT"
OUTPUT = "OUTPUT"

TOPOLOGY_MODES = ("free-dag", "fixed-topology", "chain")
VIOLATION_TYPES = ("no_output", "no_incoming", "no_outgoing", "isolated")


class EnumerationTruncated(RuntimeError):
    """Raised by :func:`enumerate_space` once ``cap`` architectures were emitted."""


class DartsTopologyError(ValueError):
    pass


@dataclass(frozen=True)
class OperatorVocabulary:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate operator labels in {names}")
        for reserved in (INPUT, OUTPUT):
            if names.count(reserved) != 1:
                raise ValueError(f"vocabulary must contain {reserved} exactly once")
        if not self.searchable:
            raise ValueError("vocabulary needs at least one searchable operator")

    @classmethod
    def from_ops(cls, ops: Sequence[str]) -> "OperatorVocabulary":
        return cls((INPUT, *ops, OUTPUT))

    @property
    def searchable(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n not in (INPUT, OUTPUT))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class SearchSpaceSpec:
    vocabulary: OperatorVocabulary
    topology_mode: str = "free-dag"
    max_nodes: int = 7
    max_edges: int | None = 9
    chain_length: int = 0
    # (n_nodes, edges) over INPUT, slot_1..slot_m, OUTPUT for fixed-topology
    fixed_edge_template: tuple[int, tuple[tuple[int, int], ...]] | None = None

    def __post_init__(self):
        if self.topology_mode not in TOPOLOGY_MODES:
            raise ValueError(f"unknown topology_mode {self.topology_mode!r}")
        if self.topology_mode == "chain":
            if self.chain_length < 1:
                raise ValueError("chain mode requires chain_length >= 1")
        elif self.topology_mode == "fixed-topology":
            if self.fixed_edge_template is None:
                raise ValueError("fixed-topology mode requires fixed_edge_template")
            n, edges = self.fixed_edge_template
            edges = tuple(sorted((int(a), int(b)) for a, b in edges))
            object.__setattr__(self, "fixed_edge_template", (int(n), edges))
            object.__setattr__(self, "max_nodes", int(n))
        else:
            if self.max_nodes < 3:
                raise ValueError("free-dag spaces need max_nodes >= 3")
            if self.max_edges is not None and self.max_edges < self.max_nodes - 1:
                raise ValueError("max_edges must be >= max_nodes - 1")

    @property
    def n_ops(self) -> int:
        return len(self.vocabulary.searchable)

    @property
    def n_slots(self) -> int:
        """Number of operator decisions in chain/fixed-topology spaces."""
        if self.topology_mode == "chain":
            return self.chain_length
        if self.topology_mode == "fixed-topology":
            return self.fixed_edge_template[0] - 2
        return self.max_nodes - 2

    def check(self, arch: "Architecture") -> None:
        """Raise ValueError if ``arch`` cannot belong to this space."""
        if self.topology_mode == "chain":
            if arch.kind != "chain" or len(arch.choices) != self.chain_length:
                raise ValueError("architecture does not match chain space")
            if any(c >= self.n_ops for c in arch.choices):
                raise ValueError("chain choice out of vocabulary range")
            return
        if arch.kind != "cell":
            raise ValueError("cell space given a chain architecture")
        unknown = set(arch.ops) - set(self.vocabulary.names)
        if unknown:
            raise ValueError(f"operators {sorted(unknown)} not in vocabulary")
        if self.topology_mode == "fixed-topology":
            n, edges = self.fixed_edge_template
            if arch.n_nodes != n or arch.edges != edges:
                raise ValueError("cell does not follow the fixed edge template")

    def to_json(self) -> dict:
        d = {
            "ops": list(self.vocabulary.searchable),
            "topology_mode": self.topology_mode,
            "max_nodes": self.max_nodes,
            "max_edges": self.max_edges,
            "chain_length": self.chain_length,
        }
        if self.fixed_edge_template is not None:
            n, edges = self.fixed_edge_template
            d["fixed_edge_template"] = {"n_nodes": n, "edges": [list(e) for e in edges]}
        return d

    @classmethod
    def from_json(cls, d: dict) -> "SearchSpaceSpec":
        known = {"ops", "topology_mode", "max_nodes", "max_edges", "chain_length",
                 "fixed_edge_template"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown search space keys: {sorted(extra)}")
        template = d.get("fixed_edge_template")
        if template is not None:
            template = (template["n_nodes"], tuple(tuple(e) for e in template["edges"]))
        return cls(
            vocabulary=OperatorVocabulary.from_ops(d["ops"]),
            topology_mode=d.get("topology_mode", "free-dag"),
            max_nodes=d.get("max_nodes", 7),
            max_edges=d.get("max_edges", 9),
            chain_length=d.get("chain_length", 0),
            fixed_edge_template=template,
        )


@dataclass(frozen=True)
class Architecture:
    kind: str
    ops: tuple[str, ...] = ()
    edges: tuple[tuple[int, int], ...] = ()
    choices: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind == "chain":
            choices = tuple(int(c) for c in self.choices)
            if any(c < 0 for c in choices):
                raise ValueError("negative chain choice")
            object.__setattr__(self, "choices", choices)
            return
        if self.kind != "cell":
            raise ValueError(f"unknown architecture kind {self.kind!r}")
        object.__setattr__(self, "ops", tuple(self.ops))
        edges = tuple(sorted((int(a), int(b)) for a, b in self.edges))
        n = len(self.ops)
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge {(a, b)} out of range for {n} nodes")
            if a == b:
                raise ValueError(f"self-loop on node {a}")
        if len(set(edges)) != len(edges):
            raise ValueError("duplicate edges")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def cell(cls, ops, edges) -> "Architecture":
        return cls("cell", ops=tuple(ops), edges=tuple(tuple(e) for e in edges))

    @classmethod
    def chain(cls, choices) -> "Architecture":
        return cls("chain", choices=tuple(choices))

    @property
    def n_nodes(self) -> int:
        return len(self.ops) if self.kind == "cell" else len(self.choices)

    def adjacency(self) -> np.ndarray:
        n = len(self.ops)
        a = np.zeros((n, n), dtype=np.int8)
        for u, v in self.edges:
            a[u, v] = 1
        return a

    def to_json(self) -> dict:
        if self.kind == "chain":
            return {"kind": "chain", "choices": list(self.choices)}
        return {"kind": "cell", "ops": list(self.ops), "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_json(cls, d: dict) -> "Architecture":
        if d.get("kind") == "chain":
            return cls.chain(d["choices"])
        if d.get("kind") == "cell":
            return cls.cell(d["ops"], d["edges"])
        raise ValueError(f"bad architecture kind in {d!r}")

    def dumps(self) -> str:
        return json.dumps(self.to_json(), separators=(",", ":"))


@dataclass(frozen=True)
class ValidityReport:
    violation_counts: dict = field(hash=False)
    is_dag: bool
    is_valid: bool
    tenths: int  # score * 10, kept integral so that -0.1 * k is exact

    @property
    def score(self) -> float:
        return self.tenths / 10

    @property
    def total(self) -> int:
        return -self.tenths


def _back_edges(n: int, edges) -> int:
    succ = [[] for _ in range(n)]
    for u, v in edges:
        succ[u].append(v)
    state = [0] * n  # 0 unseen, 1 on stack, 2 done
    count = 0
    for root in range(n):
        if state[root]:
            continue
        stack = [(root, iter(succ[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            for nxt in it:
                if state[nxt] == 1:
                    count += 1
                elif state[nxt] == 0:
                    state[nxt] = 1
                    stack.append((nxt, iter(succ[nxt])))
                    break
            else:
                state[node] = 2
                stack.pop()
    return count


def validate_cell(arch: Architecture, space: SearchSpaceSpec | None = None) -> ValidityReport:
    """Score a cell with the four-violation taxonomy.

    Each violation type counts at most once per cell. A node with neither
    incoming nor outgoing edges raises only the ``isolated`` type. The first
    INPUT node is exempt from the incoming check and the last OUTPUT node
    from the outgoing check; any further INPUT/OUTPUT nodes are ordinary.
    Cycles add one violation per DFS back edge.
    """
    if arch.kind != "cell":
        raise ValueError("validate_cell expects a cell architecture")
    n = len(arch.ops)
    indeg = [0] * n
    outdeg = [0] * n
    for u, v in arch.edges:
        outdeg[u] += 1
        indeg[v] += 1
    inputs = [i for i, o in enumerate(arch.ops) if o == INPUT]
    outputs = [i for i, o in enumerate(arch.ops) if o == OUTPUT]
    src = inputs[0] if inputs else None
    sink = outputs[-1] if outputs else None

    counts = dict.fromkeys(VIOLATION_TYPES, 0)
    counts["no_output"] = int(sink is None)
    for i in range(n):
        no_in = indeg[i] == 0 and i != src
        no_out = outdeg[i] == 0 and i != sink
        if indeg[i] == 0 and outdeg[i] == 0:
            counts["isolated"] = 1
        elif no_in:
            counts["no_incoming"] = 1
        elif no_out:
            counts["no_outgoing"] = 1
    cycles = _back_edges(n, arch.edges)
    counts["cycle"] = cycles
    total = sum(counts.values())
    return ValidityReport(counts, cycles == 0, total == 0, -total)


# --------------------------------------------------------------------------
# canonical hashing

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_LANES = (
    (np.uint64(0x9E3779B97F4A7C15), np.uint64(0xD6E8FEB86659FD93),
     np.uint64(0xA0761D6478BD642F), np.uint64(0xE7037ED1A0B428DB)),
    (np.uint64(0x8EBC6AF09C88C6E3), np.uint64(0x589965CC75374CC3),
     np.uint64(0x1D8E4E27C47D124F), np.uint64(0xC2B2AE3D27D4EB4F)),
)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def label_code(name: str) -> int:
    return int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")


def hash_cells(adj: np.ndarray, labels: np.ndarray) -> list[str]:
    """WL-style refinement hash for a batch of same-size labeled digraphs.

    ``adj`` is (B, n, n) 0/1, ``labels`` is (B, n) uint64 label codes.
    Neighbour multisets are folded by wrapping uint64 sums of mixed colours,
    so the digest is invariant to node order. Two independent lanes give a
    128-bit hex digest.
    """
    adj = np.asarray(adj, dtype=np.uint64)
    labels = np.asarray(labels, dtype=np.uint64)
    b, n = labels.shape
    adj_t = np.ascontiguousarray(adj.transpose(0, 2, 1))
    out = []
    for k_init, k_in, k_out, k_fin in _LANES:
        c = _mix(labels ^ k_init)
        for _ in range(max(n, 1)):
            fin = _mix(c ^ k_in)
            fout = _mix(c ^ k_out)
            in_agg = np.einsum("bvu,bu->bv", adj_t, fin)
            out_agg = np.einsum("buv,bv->bu", adj, fout)
            c = _mix(c * k_fin + _mix(in_agg + k_in) + _mix(out_agg ^ k_out) * k_init)
        size_term = np.uint64((n * int(k_in)) % 2**64)
        g = _mix(_mix(c ^ k_fin).sum(axis=1) + size_term)
        out.append(g)
    return [f"{int(x):016x}{int(y):016x}" for x, y in zip(*out)]


def canonical_hash(arch: Architecture) -> str:
    """Digest equal for isomorphic labeled DAGs; chains hash their choices."""
    if arch.kind == "chain":
        payload = "chain:" + ",".join(map(str, arch.choices))
        return hashlib.blake2b(payload.encode(), digest_size=16).hexdigest()
    labels = np.array([[label_code(o) for o in arch.ops]], dtype=np.uint64)
    return hash_cells(arch.adjacency()[None], labels)[0]


def is_isomorphic(a: Architecture, b: Architecture) -> bool:
    """Exact check by permutation search; only for tiny cells (tests)."""
    if a.kind != b.kind:
        return False
    if a.kind == "chain":
        return a.choices == b.choices
    n = len(a.ops)
    if n != len(b.ops) or len(a.edges) != len(b.edges):
        return False
    if sorted(a.ops) != sorted(b.ops):
        return False
    eb = set(b.edges)
    for perm in itertools.permutations(range(n)):
        if any(a.ops[i] != b.ops[perm[i]] for i in range(n)):
            continue
        if all((perm[u], perm[v]) in eb for u, v in a.edges):
            return True
    return False


# --------------------------------------------------------------------------
# DARTS conversion


def convert_darts_to_nodes(edge_ops: dict, darts_topology: Sequence[tuple[int, int]] | None = None,
                           ) -> Architecture:
    """Turn an edge-labeled DARTS-like cell into a node-labeled cell.

    DARTS nodes must be numbered topologically (every edge has src < dst);
    the smallest node is the cell input, the largest the cell output. Each
    DARTS edge becomes one operator node; node u feeds node v when the
    destination of u's edge is the source of v's edge.
    """
    topo = list(darts_topology) if darts_topology is not None else list(edge_ops)
    topo = [(int(s), int(d)) for s, d in topo]
    if not topo:
        raise DartsTopologyError("empty DARTS topology")
    if len(set(topo)) != len(topo):
        raise DartsTopologyError("duplicate DARTS edge")
    missing = [e for e in topo if e not in edge_ops and tuple(e) not in edge_ops]
    if missing:
        raise DartsTopologyError(f"no operator for DARTS edges {missing}")
    for s, d in topo:
        if s >= d:
            raise DartsTopologyError(f"DARTS edge {(s, d)} is not forward")
    nodes = sorted({x for e in topo for x in e})
    src_node, dst_node = nodes[0], nodes[-1]
    for x in nodes[1:-1]:
        if not any(d == x for _, d in topo) or not any(s == x for s, _ in topo):
            raise DartsTopologyError(f"DARTS node {x} is dangling")
    order = sorted(topo, key=lambda e: (e[1], e[0]))
    ops = [INPUT] + [edge_ops[e] for e in order] + [OUTPUT]
    out = len(ops) - 1
    edges = []
    for i, (s, d) in enumerate(order, start=1):
        if s == src_node:
            edges.append((0, i))
        if d == dst_node:
            edges.append((i, out))
        for j, (s2, _) in enumerate(order, start=1):
            if s2 == d:
                edges.append((i, j))
    return Architecture.cell(ops, edges)


NB201_DARTS_EDGES = ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
NB201_OPS = ("none", "skip_connect", "nor_conv_1x1", "nor_conv_3x3", "avg_pool_3x3")
NB101_OPS = ("conv3x3-bn-relu", "conv1x1-bn-relu", "maxpool3x3")


def nb201_space(ops: Sequence[str] = NB201_OPS) -> SearchSpaceSpec:
    template = convert_darts_to_nodes({e: ops[0] for e in NB201_DARTS_EDGES}, NB201_DARTS_EDGES)
    return SearchSpaceSpec(OperatorVocabulary.from_ops(ops), "fixed-topology",
                           fixed_edge_template=(template.n_nodes, template.edges))


def nb101_space(max_nodes: int = 7, max_edges: int | None = 9,
                ops: Sequence[str] = NB101_OPS) -> SearchSpaceSpec:
    return SearchSpaceSpec(OperatorVocabulary.from_ops(ops), "free-dag",
                           max_nodes=max_nodes, max_edges=max_edges)


def chain_space(chain_length: int, ops: Sequence[str]) -> SearchSpaceSpec:
    return SearchSpaceSpec(OperatorVocabulary.from_ops(ops), "chain", max_nodes=chain_length + 2,
                           max_edges=None, chain_length=chain_length)


# --------------------------------------------------------------------------
# enumeration


def _upper_pairs(n: int):
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def valid_dag_matrices(n: int, max_edges: int | None) -> np.ndarray:
    """All upper-triangular n x n matrices whose cell would be valid."""
    pairs = _upper_pairs(n)
    m = len(pairs)
    bits = np.arange(2 ** m, dtype=np.int64)
    mats = np.zeros((bits.size, n, n), dtype=np.int8)
    for k, (i, j) in enumerate(pairs):
        mats[:, i, j] = (bits >> k) & 1
    indeg = mats.sum(axis=1)
    outdeg = mats.sum(axis=2)
    keep = (indeg[:, 1:] > 0).all(axis=1) & (outdeg[:, :-1] > 0).all(axis=1)
    if max_edges is not None:
        keep &= mats.sum(axis=(1, 2)) <= max_edges
    return mats[keep]


def _enumerate_free_dag(space: SearchSpaceSpec) -> Iterator[Architecture]:
    ops = space.vocabulary.searchable
    codes = np.array([label_code(o) for o in ops], dtype=np.uint64)
    in_code, out_code, mid_code = label_code(INPUT), label_code(OUTPUT), label_code("*")
    for n in range(2, space.max_nodes + 1):
        mats = valid_dag_matrices(n, space.max_edges)
        if mats.size == 0:
            continue
        # dedupe unlabeled structures first; every labeled class is a labeling
        # of one structural representative
        plain = np.full((len(mats), n), mid_code, dtype=np.uint64)
        plain[:, 0], plain[:, -1] = in_code, out_code
        seen_struct = {}
        for idx, h in enumerate(_chunked_hash(mats, plain)):
            seen_struct.setdefault(h, idx)
        reps = mats[sorted(seen_struct.values())]
        combos = list(itertools.product(range(len(ops)), repeat=n - 2))
        labelings = np.array(combos, dtype=np.int64).reshape(len(combos), n - 2)
        seen = set()
        for rep in reps:
            lab = np.empty((len(labelings), n), dtype=np.uint64)
            lab[:, 0], lab[:, -1] = in_code, out_code
            lab[:, 1:-1] = codes[labelings]
            adj = np.broadcast_to(rep, (len(labelings), n, n))
            edges = [(int(i), int(j)) for i, j in zip(*np.nonzero(rep))]
            for row, h in enumerate(_chunked_hash(adj, lab)):
                if h in seen:
                    continue
                seen.add(h)
                names = (INPUT, *(ops[c] for c in labelings[row]), OUTPUT)
                yield Architecture.cell(names, edges)


def _chunked_hash(adj, labels, chunk=20000):
    for s in range(0, len(labels), chunk):
        yield from hash_cells(adj[s:s + chunk], labels[s:s + chunk])


def enumerate_space(space: SearchSpaceSpec, cap: int | None = None) -> Iterator[Architecture]:
    """Yield every isomorphism-distinct valid architecture once, in a fixed order.

    Raises EnumerationTruncated after ``cap`` architectures if more remain.
    """
    if space.topology_mode == "chain":
        it = (Architecture.chain(c)
              for c in itertools.product(range(space.n_ops), repeat=space.chain_length))
    elif space.topology_mode == "fixed-topology":
        n, edges = space.fixed_edge_template
        ops = space.vocabulary.searchable
        it = (Architecture.cell((INPUT, *c, OUTPUT), edges)
              for c in itertools.product(ops, repeat=n - 2))
    else:
        it = _enumerate_free_dag(space)
    for count, arch in enumerate(it):
        if cap is not None and count >= cap:
            raise EnumerationTruncated(f"more than {cap} architectures in space")
        yield arch


def space_size(space: SearchSpaceSpec) -> int:
    return sum(1 for _ in enumerate_space(space))


# --------------------------------------------------------------------------
# random sampling


def random_architecture(space: SearchSpaceSpec, rng: np.random.Generator) -> Architecture:
    """Draw a structurally valid architecture.

    Chains and fixed-topology cells draw each operator uniformly. Free DAGs
    draw a node count uniformly in [2, max_nodes], operators uniformly, and
    each forward edge with probability 1/2, rejecting invalid or over-budget
    edge sets; after 1000 rejections the last draw is repaired.
    """
    ops = space.vocabulary.searchable
    if space.topology_mode == "chain":
        return Architecture.chain(rng.integers(0, len(ops), size=space.chain_length).tolist())
    if space.topology_mode == "fixed-topology":
        n, edges = space.fixed_edge_template
        picks = rng.integers(0, len(ops), size=n - 2)
        return Architecture.cell((INPUT, *(ops[i] for i in picks), OUTPUT), edges)
    n = int(rng.integers(2, space.max_nodes + 1))
    names = (INPUT, *(ops[i] for i in rng.integers(0, len(ops), size=n - 2)), OUTPUT)
    pairs = _upper_pairs(n)
    for _ in range(1000):
        mask = rng.random(len(pairs)) < 0.5
        edges = [p for p, m in zip(pairs, mask) if m]
        if space.max_edges is not None and len(edges) > space.max_edges:
            continue
        arch = Architecture.cell(names, edges)
        if validate_cell(arch).is_valid:
            return arch
    return _repair(names, edges, space.max_edges)


def _repair(names, edges, max_edges):
    n = len(names)
    chain = {(i, i + 1) for i in range(n - 1)}
    extra = [e for e in edges if e not in chain]
    budget = (max_edges if max_edges is not None else len(extra) + n) - len(chain)
    return Architecture.cell(names, sorted(chain | set(extra[:max(budget, 0)])))


def graph_view(arch: Architecture, space: SearchSpaceSpec) -> tuple[list[str], list[tuple[int, int]]]:
    """Node labels and edges used by the GNNs; chains become INPUT->c1->...->OUTPUT."""
    if arch.kind == "cell":
        return list(arch.ops), list(arch.edges)
    ops = space.vocabulary.searchable
    names = [INPUT, *(ops[c] for c in arch.choices), OUTPUT]
    return names, [(i, i + 1) for i in range(len(names) - 1)]


def hash_many(archs: Sequence[Architecture]) -> list[str]:
    """canonical_hash over many architectures, batching cells by node count."""
    out: list[str | None] = [None] * len(archs)
    groups: dict[int, list[int]] = {}
    for i, a in enumerate(archs):
        if a.kind == "chain":
            out[i] = canonical_hash(a)
        else:
            groups.setdefault(len(a.ops), []).append(i)
    codes: dict[str, int] = {}
    for n, idx in groups.items():
        adj = np.zeros((len(idx), n, n), dtype=np.uint64)
        lab = np.empty((len(idx), n), dtype=np.uint64)
        for row, i in enumerate(idx):
            a = archs[i]
            for u, v in a.edges:
                adj[row, u, v] = 1
            for j, o in enumerate(a.ops):
                c = codes.get(o)
                if c is None:
                    c = codes[o] = label_code(o)
                lab[row, j] = c
        for i, h in zip(idx, _chunked_hash(adj, lab)):
            out[i] = h
    return out
