import numpy as np
import pytest

from ganas.baselines import (accuracy_rewards, mutate, random_search, regularized_evolution,
                             rlnas)
from ganas.benchmark import synth_benchmark
from ganas.graph import (INPUT, Architecture, canonical_hash, chain_space, nb101_space,
                         validate_cell)
from ganas.search import Evaluations, SearchConfig


@pytest.fixture(scope="module")
def chain10k():
    return synth_benchmark(chain_space(4, [f"op{i}" for i in range(10)]), seed=3, roughness=0.3)


@pytest.fixture(scope="module")
def chain10k_smooth():
    return synth_benchmark(chain_space(4, [f"op{i}" for i in range(10)]), seed=3, roughness=0.0)


def test_random_exhaustive(small_dag):
    r = random_search(small_dag, len(small_dag), 0)
    assert r.best["rank"] == 1 and r.n_queries == len(small_dag)


def test_random_single():
    b = synth_benchmark(chain_space(2, ["a", "b", "c"]), 0)
    r = random_search(b, 1, 5)
    assert r.n_queries == 1 and len(r.history) == 1
    with pytest.raises(ValueError):
        random_search(b, 0, 0)


def test_random_order_statistics(chain10k):
    budget = 50
    ranks = [random_search(chain10k, budget, s).best["rank"] for s in range(20)]
    expect = len(chain10k) / (budget + 1)
    assert expect / 3 <= np.mean(ranks) <= 3 * expect


def test_mutate_chain_one_position():
    space = chain_space(5, ["a", "b", "c"])
    rng = np.random.default_rng(0)
    for _ in range(100):
        a = Architecture.chain(rng.integers(0, 3, 5).tolist())
        b = mutate(a, space, rng)
        assert sum(x != y for x, y in zip(a.choices, b.choices)) == 1


def test_mutate_cell_single_edit():
    space = nb101_space(5, 9, ["a", "b"])
    a = Architecture.cell([INPUT, "a", "b", "OUTPUT"], [(0, 1), (1, 2), (2, 3)])
    rng = np.random.default_rng(0)
    for _ in range(50):
        b = mutate(a, space, rng)
        op_diff = sum(x != y for x, y in zip(a.ops, b.ops))
        edge_diff = len(set(a.edges) ^ set(b.edges))
        assert op_diff + edge_diff == 1


def test_rea_budget(chain10k):
    r = regularized_evolution(chain10k, 20, 5, 120, 0)
    assert r.n_queries == 120 == len(r.history)
    r1 = regularized_evolution(chain10k, 1, 1, 30, 0)
    assert r1.n_queries == 30
    with pytest.raises(ValueError):
        regularized_evolution(chain10k, 50, 5, 10, 0)


def test_rea_beats_random_on_smooth(chain10k_smooth):
    budget = 100
    rea = [regularized_evolution(chain10k_smooth, 20, 5, budget, s).best["accuracy"]
           for s in range(20)]
    rs = [random_search(chain10k_smooth, budget, s).best["accuracy"] for s in range(20)]
    assert np.mean(rea) > np.mean(rs)


def test_accuracy_rewards(small_dag):
    b = small_dag.session()
    evals = Evaluations(b)
    valid = list(b.archs.values())[:3]
    invalid = Architecture.cell([INPUT, "a"], [(0, 1)])
    r = accuracy_rewards(valid + [invalid], evals, budget=10)
    assert list(r[:3]) == [b.table[canonical_hash(a)].accuracy for a in valid]
    assert r[3] == validate_cell(invalid).score
    assert b.query_count == 3
    # past the budget novel cells are not charged
    more = list(b.archs.values())[3:6]
    r = accuracy_rewards(more, evals, budget=3)
    assert b.query_count == 3 and not r.any()


def test_rlnas_budget_and_validity(small_dag):
    cfg = SearchConfig(batch_episodes=16, hidden=16, g_lr=1e-3)
    r = rlnas(small_dag, cfg, 10, 0, max_updates=30)
    assert r.n_queries <= 10
    assert all(h in small_dag.table for h, _, _ in r.history)


def test_baselines_deterministic(chain10k):
    assert random_search(chain10k, 40, 7).dumps() == random_search(chain10k, 40, 7).dumps()
    assert (regularized_evolution(chain10k, 10, 3, 40, 7).dumps()
            == regularized_evolution(chain10k, 10, 3, 40, 7).dumps())
