import itertools
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ganas.graph import (INPUT, OUTPUT, Architecture, DartsTopologyError, EnumerationTruncated,
                         OperatorVocabulary, SearchSpaceSpec, canonical_hash, chain_space,
                         convert_darts_to_nodes, enumerate_space, hash_many, is_isomorphic,
                         nb101_space, nb201_space, random_architecture, space_size, validate_cell)


def brute_canon(ops, edges, movable=None):
    """Lexicographically smallest (labels, edges) over node relabelings."""
    n = len(ops)
    movable = list(range(n)) if movable is None else movable
    fixed = [i for i in range(n) if i not in movable]
    best = None
    for perm in itertools.permutations(movable):
        m = dict(zip(fixed, fixed))
        m.update(zip(movable, perm))
        inv = [None] * n
        for old, new in m.items():
            inv[new] = old
        form = (tuple(ops[inv[i]] for i in range(n)), tuple(sorted((m[u], m[v]) for u, v in edges)))
        if best is None or form < best:
            best = form
    return best


def random_cell(draw_ops, n, rng):
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edges = [p for p in pairs if rng.random() < 0.5]
    return Architecture.cell(draw_ops, edges)


def permuted(arch, perm):
    n = len(arch.ops)
    ops = [None] * n
    for i, o in enumerate(arch.ops):
        ops[perm[i]] = o
    return Architecture.cell(ops, [(perm[u], perm[v]) for u, v in arch.edges])


# --------------------------------------------------------------------------
# vocabulary / space / architecture invariants


def test_vocabulary_rules():
    assert OperatorVocabulary.from_ops(["a"]).searchable == ("a",)
    with pytest.raises(ValueError):
        OperatorVocabulary(("INPUT", "a", "a", "OUTPUT"))
    with pytest.raises(ValueError):
        OperatorVocabulary(("INPUT", "a"))
    with pytest.raises(ValueError):
        OperatorVocabulary(("INPUT", "OUTPUT"))


def test_space_invariants():
    vocab = OperatorVocabulary.from_ops(["a"])
    with pytest.raises(ValueError):
        SearchSpaceSpec(vocab, "free-dag", max_nodes=2)
    with pytest.raises(ValueError):
        SearchSpaceSpec(vocab, "free-dag", max_nodes=5, max_edges=3)
    with pytest.raises(ValueError):
        SearchSpaceSpec(vocab, "chain", chain_length=0)
    s = nb101_space(5, 9, ["a", "b"])
    assert SearchSpaceSpec.from_json(json.loads(json.dumps(s.to_json()))) == s


def test_architecture_invariants():
    with pytest.raises(ValueError):
        Architecture.cell(["INPUT", "OUTPUT"], [(0, 2)])
    with pytest.raises(ValueError):
        Architecture.cell(["INPUT", "OUTPUT"], [(1, 1)])
    with pytest.raises(ValueError):
        Architecture.cell(["INPUT", "OUTPUT"], [(0, 1), (0, 1)])
    with pytest.raises(ValueError):
        chain_space(2, ["a", "b"]).check(Architecture.chain([0, 2]))
    # invalid but representable
    Architecture.cell(["INPUT", "a"], [(0, 1)])


def test_architecture_json_roundtrip():
    a = Architecture.cell(["INPUT", "conv3x3", "OUTPUT"], [(0, 1), (1, 2)])
    assert a.to_json() == {"kind": "cell", "ops": ["INPUT", "conv3x3", "OUTPUT"],
                           "edges": [[0, 1], [1, 2]]}
    assert Architecture.from_json(json.loads(a.dumps())) == a
    c = Architecture.chain([0, 2, 1])
    assert c.to_json() == {"kind": "chain", "choices": [0, 2, 1]}
    assert Architecture.from_json(c.to_json()) == c


# --------------------------------------------------------------------------
# validity


def test_linear_cell_is_valid():
    r = validate_cell(Architecture.cell([INPUT, "conv", OUTPUT], [(0, 1), (1, 2)]))
    assert r.is_valid and r.is_dag and r.total == 0 and r.score == 0


def test_missing_output():
    r = validate_cell(Architecture.cell([INPUT, "a"], [(0, 1)]))
    assert r.violation_counts["no_output"] == 1
    assert r.violation_counts["no_outgoing"] == 1
    assert r.tenths == -2 and r.score == -0.2 and not r.is_valid


def test_isolated_node_counted_once():
    arch = Architecture.cell([INPUT, "a", "b", OUTPUT], [(0, 1), (1, 3)])
    r = validate_cell(arch)
    assert r.violation_counts["isolated"] == 1
    assert r.violation_counts["no_incoming"] == 0
    assert r.violation_counts["no_outgoing"] == 0
    assert r.score == -0.1


def test_cycle_flagged():
    arch = Architecture.cell([INPUT, "a", "b", OUTPUT], [(0, 1), (1, 2), (2, 1), (2, 3)])
    r = validate_cell(arch)
    assert not r.is_dag and not r.is_valid
    assert r.violation_counts["cycle"] == 1


@given(st.integers(2, 6), st.integers(0, 2**32 - 1))
def test_score_is_exact_tenths(n, seed):
    rng = np.random.default_rng(seed)
    ops = [INPUT] + list(rng.choice(["a", "b", OUTPUT], size=n - 1))
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    edges = [p for p in pairs if rng.random() < 0.3]
    r = validate_cell(Architecture.cell(ops, edges))
    assert r.tenths == -sum(r.violation_counts.values())
    assert r.score == r.tenths / 10
    assert r.is_valid == (r.total == 0 and r.is_dag)


# --------------------------------------------------------------------------
# hashing


def test_hash_permutation_invariance():
    a = Architecture.cell([INPUT, "a", "b", OUTPUT], [(0, 1), (0, 2), (1, 3), (2, 3)])
    b = permuted(a, [3, 1, 0, 2])
    assert canonical_hash(a) == canonical_hash(b)


def test_hash_edge_change():
    a = Architecture.cell([INPUT, "a", "b", OUTPUT], [(0, 1), (1, 2), (2, 3)])
    b = Architecture.cell([INPUT, "a", "b", OUTPUT], [(0, 1), (1, 2), (1, 3)])
    assert canonical_hash(a) != canonical_hash(b)


def test_hash_exhaustive_four_nodes():
    # every labeling in {x, y} of every 4-node forward edge set, relabeled
    # randomly so that node order carries no information
    rng = np.random.default_rng(0)
    pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    cells = []
    for bits in range(1 << len(pairs)):
        edges = [p for k, p in enumerate(pairs) if bits >> k & 1]
        for labels in itertools.product("xy", repeat=4):
            cells.append(permuted(Architecture.cell(labels, edges), list(rng.permutation(4))))
    by_hash = {}
    by_canon = {}
    for c, h in zip(cells, hash_many(cells)):
        by_hash.setdefault(h, set()).add(brute_canon(c.ops, c.edges))
        by_canon.setdefault(brute_canon(c.ops, c.edges), set()).add(h)
    assert len(by_hash) == len(by_canon)
    assert all(len(v) == 1 for v in by_hash.values())
    assert all(len(v) == 1 for v in by_canon.values())


@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_hash_matches_brute_isomorphism(n, seed):
    rng = np.random.default_rng(seed)
    ops = list(rng.choice(["a", "b"], size=n))
    a = random_cell(ops, n, rng)
    b = random_cell(list(rng.choice(["a", "b"], size=n)), n, rng) if rng.random() < 0.5 \
        else permuted(a, list(rng.permutation(n)))
    same = brute_canon(a.ops, a.edges) == brute_canon(b.ops, b.edges)
    assert (canonical_hash(a) == canonical_hash(b)) == same
    assert is_isomorphic(a, b) == same


def test_hash_many_matches_single():
    rng = np.random.default_rng(3)
    archs = [random_architecture(nb101_space(6, 9, ["a", "b", "c"]), rng) for _ in range(50)]
    assert hash_many(archs) == [canonical_hash(a) for a in archs]


def test_hash_is_stable():
    # digests are part of file formats and must not drift between runs
    a = Architecture.cell([INPUT, "conv3x3-bn-relu", OUTPUT], [(0, 1), (1, 2)])
    assert canonical_hash(a) == canonical_hash(Architecture.from_json(a.to_json()))
    assert len(canonical_hash(a)) == 32


# --------------------------------------------------------------------------
# DARTS conversion


def test_darts_single_edge():
    a = convert_darts_to_nodes({(0, 1): "o"})
    assert a.ops == (INPUT, "o", OUTPUT)
    assert set(a.edges) == {(0, 1), (1, 2)}


def test_darts_nb201_cell():
    topo = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]
    ops = {e: f"op{i}" for i, e in enumerate(topo)}
    a = convert_darts_to_nodes(ops, topo)
    assert len(a.ops) == 8
    assert validate_cell(a).is_valid
    pos = {op: i for i, op in enumerate(a.ops)}
    # node of edge (u, v) feeds node of edge (v, w)
    expect = set()
    for (s, d) in topo:
        for (s2, d2) in topo:
            if s2 == d:
                expect.add((pos[ops[(s, d)]], pos[ops[(s2, d2)]]))
        if s == 0:
            expect.add((0, pos[ops[(s, d)]]))
        if d == 3:
            expect.add((pos[ops[(s, d)]], 7))
    assert set(a.edges) == expect


def test_darts_shared_template():
    topo = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)]
    rng = np.random.default_rng(0)
    edges = {convert_darts_to_nodes({e: str(rng.integers(5)) for e in topo}, topo).edges
             for _ in range(20)}
    assert len(edges) == 1
    assert nb201_space().topology_mode == "fixed-topology"


def test_darts_errors():
    with pytest.raises(DartsTopologyError):
        convert_darts_to_nodes({(0, 1): "a", (2, 3): "b"})
    with pytest.raises(DartsTopologyError):
        convert_darts_to_nodes({(0, 1): "a"}, [(0, 1), (1, 2)])


# --------------------------------------------------------------------------
# enumeration


def oracle_free_dag_count(max_nodes, max_edges, ops):
    """Independent count: every valid cell has INPUT as unique source and
    OUTPUT as unique sink, so forward edge sets over a topological order
    cover all classes; dedupe by brute-force canonical form."""
    forms = set()
    for n in range(2, max_nodes + 1):
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        for bits in range(1 << len(pairs)):
            edges = [p for k, p in enumerate(pairs) if bits >> k & 1]
            if max_edges is not None and len(edges) > max_edges:
                continue
            if any(not any(v == i for _, v in edges) for i in range(1, n)):
                continue
            if any(not any(u == i for u, _ in edges) for i in range(n - 1)):
                continue
            for mid in itertools.product(ops, repeat=n - 2):
                labels = (INPUT, *mid, OUTPUT)
                forms.add(brute_canon(labels, edges, movable=list(range(1, n - 1))))
    return len(forms)


def test_enumerate_chain():
    assert len(list(enumerate_space(chain_space(2, ["a", "b", "c"])))) == 9


def test_enumerate_nb201():
    assert space_size(nb201_space()) == 15625


@pytest.mark.parametrize("max_nodes,max_edges,ops", [(4, None, ["a", "b"]),
                                                     (5, 9, ["a", "b", "c"]),
                                                     (5, 5, ["a", "b"])])
def test_enumerate_free_dag_matches_oracle(max_nodes, max_edges, ops):
    space = nb101_space(max_nodes, max_edges, ops)
    archs = list(enumerate_space(space))
    assert len(archs) == oracle_free_dag_count(max_nodes, max_edges, ops)
    assert len(set(hash_many(archs))) == len(archs)
    assert all(validate_cell(a).is_valid for a in archs)
    assert [a.dumps() for a in enumerate_space(space)] == [a.dumps() for a in archs]


def test_enumerate_truncation():
    with pytest.raises(EnumerationTruncated):
        list(enumerate_space(chain_space(3, ["a", "b"]), cap=5))
    assert len(list(enumerate_space(chain_space(3, ["a", "b"]), cap=8))) == 8


@pytest.mark.slow
def test_enumerate_nb101_count():
    assert space_size(nb101_space()) == 423624


# --------------------------------------------------------------------------
# random architectures


def test_random_chain_uniform():
    space = chain_space(3, ["a", "b", "c"])
    rng = np.random.default_rng(0)
    draws = np.array([random_architecture(space, rng).choices for _ in range(6000)])
    for pos in range(3):
        freq = np.bincount(draws[:, pos], minlength=3) / len(draws)
        assert np.all(np.abs(freq - 1 / 3) < 4 * np.sqrt(2 / 9 / len(draws)))


def test_random_deterministic():
    space = nb101_space(6, 9, ["a", "b", "c"])
    a = [random_architecture(space, np.random.default_rng(7)).dumps() for _ in range(2)]
    assert a[0] == a[1]


def test_random_covers_small_space():
    space = chain_space(2, ["a", "b", "c"])
    rng = np.random.default_rng(0)
    seen = {canonical_hash(random_architecture(space, rng)) for _ in range(10000)}
    assert seen == set(hash_many(list(enumerate_space(space))))


@given(st.integers(0, 2**32 - 1))
def test_random_free_dag_valid(seed):
    space = nb101_space(7, 9, ["a", "b", "c"])
    a = random_architecture(space, np.random.default_rng(seed))
    space.check(a)
    assert validate_cell(a).is_valid and len(a.edges) <= 9
