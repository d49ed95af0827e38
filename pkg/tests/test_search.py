import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ganas.benchmark import BenchmarkError, Metrics
from ganas.graph import Architecture
from ganas.search import (ConfigError, EvalRecord, SearchConfig, SearchResult, dominates,
                          first_front, ganas_run, hypervolume, pareto_fronts, select_truth,
                          worst_half)

FAST = dict(g_lr=1e-3, d_epochs=1, inner_rounds=1, batch_episodes=16, hidden=16)


def rec(i, acc, sec=100.0, params=1, rank=None):
    # rank defaults to a value consistent with accuracy on a 0..1 grid
    rank = int(round((1 - acc) * 1e6)) * 100 + i if rank is None else rank
    return EvalRecord(f"h{i}", Architecture.chain([0]), Metrics(acc, sec, params), rank, 0)


def brute_fronts(points):
    """Non-dominated sorting by repeated pairwise scans."""
    left = list(range(len(points)))
    out = []
    while left:
        front = [i for i in left
                 if not any(points[j][0] >= points[i][0] and points[j][1] <= points[i][1]
                            and points[j] != points[i] for j in left)]
        out.append(sorted(front))
        left = [i for i in left if i not in front]
    return out


# --------------------------------------------------------------------------
# config


def test_config_errors():
    with pytest.raises(ConfigError, match="bogus"):
        SearchConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        SearchConfig(mode="nope")
    with pytest.raises(ConfigError):
        SearchConfig(mode="constrained")
    with pytest.raises(ConfigError):
        SearchConfig(iterations=0)
    with pytest.raises(ConfigError):
        SearchConfig(eval_inc=-1)
    cfg = SearchConfig.from_dict({"g_lr": 0.01, "mode": "pareto"})
    assert SearchConfig.from_dict(cfg.to_dict()) == cfg


def test_schedule():
    cfg = SearchConfig(eval_base=100, eval_inc=50)
    assert [cfg.schedule_size(t) for t in (1, 2, 10)] == [100, 150, 550]
    cfg = SearchConfig(eval_base=100, eval_inc=50, schedule="uniform")
    assert {cfg.schedule_size(t) for t in range(1, 11)} == {100}


# --------------------------------------------------------------------------
# truth selection and fronts


def test_select_topk():
    records = [rec(i, a) for i, a in enumerate([0.3, 0.9, 0.1, 0.7, 0.5])]
    t = select_truth(records, 2)
    assert sorted(r.accuracy for r in t.members) == [0.7, 0.9]
    assert t.threshold == 0.7


def test_select_constrained():
    records = [rec(0, 0.95, 2000.0), rec(1, 0.8, 900.0), rec(2, 0.7, 500.0), rec(3, 0.6, 1500.0)]
    cfg = SearchConfig(mode="constrained", max_train_seconds=1000.0)
    t = select_truth(records, 3, "constrained", cfg)
    assert {r.hash for r in t.members} == {"h1", "h2"}
    with pytest.raises(ValueError):
        select_truth(records[:1], 3, "constrained", cfg)
    cfg = SearchConfig(mode="constrained", max_param_count=5)
    recs = [rec(0, 0.9, params=10), rec(1, 0.5, params=3)]
    assert [r.hash for r in select_truth(recs, 2, "constrained", cfg).members] == ["h1"]


def test_select_pareto_two_fronts():
    pts = [(0.9, 300.0), (0.5, 100.0), (0.8, 350.0), (0.4, 150.0), (0.7, 400.0), (0.3, 200.0)]
    records = [rec(i, a, s) for i, (a, s) in enumerate(pts)]
    fronts, exhausted = pareto_fronts(records, 10)
    assert [sorted(r.hash for r in f) for f in fronts] == [["h0", "h1"], ["h2", "h3"], ["h4", "h5"]]
    assert exhausted
    t = select_truth(records, 25, "pareto", SearchConfig(mode="pareto", pareto_fronts=2))
    assert {r.hash for r in t.members} == {"h0", "h1", "h2", "h3"}


def test_front_trivial_cases():
    fronts, _ = pareto_fronts([rec(0, 0.5)], 1)
    assert len(fronts) == 1 and len(fronts[0]) == 1
    fronts, _ = pareto_fronts([rec(0, 0.5, 10.0), rec(1, 0.6, 20.0)], 2)
    assert len(fronts) == 1 and len(fronts[0]) == 2
    with pytest.raises(ValueError):
        pareto_fronts([], 1)
    assert dominates(rec(0, 0.6, 10.0), rec(1, 0.5, 10.0))
    assert not dominates(rec(0, 0.5, 10.0), rec(1, 0.5, 10.0))


@given(st.integers(0, 2**32 - 1), st.integers(1, 60))
def test_fronts_match_brute_force(seed, n):
    rng = np.random.default_rng(seed)
    # coarse grid so that ties in either coordinate occur
    pts = [(float(rng.integers(0, 8)) / 10, float(rng.integers(0, 8))) for _ in range(n)]
    records = [rec(i, a, s) for i, (a, s) in enumerate(pts)]
    fronts, _ = pareto_fronts(records)
    got = [sorted(int(r.hash[1:]) for r in f) for f in fronts]
    assert got == brute_fronts(pts)
    assert sorted(int(r.hash[1:]) for r in first_front(records)) == got[0]


def test_hypervolume():
    records = [rec(0, 0.5, 1.0), rec(1, 0.8, 3.0)]
    assert hypervolume(records, 4.0) == pytest.approx(0.5 * 2 + 0.8 * 1)
    assert hypervolume(records + [rec(2, 0.1, 3.5)], 4.0) == pytest.approx(hypervolume(records, 4.0))


@given(st.lists(st.tuples(st.floats(0.0, 1.0), st.floats(0.0, 99.0)), min_size=1, max_size=40),
       st.integers(0, 39))
def test_hypervolume_never_drops(pts, cut):
    # adding records, dominated or not, must not lower the value by even an ulp
    records = [rec(i, a, s) for i, (a, s) in enumerate(pts)]
    cut = min(cut, len(records))
    assert hypervolume(records[:cut], 100.0) <= hypervolume(records, 100.0)
    assert hypervolume(records, 100.0) == hypervolume(records[::-1], 100.0)


# --------------------------------------------------------------------------
# the outer loop


def test_schedule_exact(dag19k):
    cfg = SearchConfig(init_size=20, eval_base=10, eval_inc=5, iterations=3, truth_size=5, **FAST)
    r = ganas_run(cfg, dag19k, 0)
    assert r.shortfalls == []
    qs = [20] + [t["q"] for t in r.trace]
    assert np.diff(qs).tolist() == [10, 15, 20]
    assert r.n_queries <= 20 + sum(cfg.schedule_size(t) for t in range(1, 4))


def test_single_iteration_zero_lr(dag19k):
    cfg = SearchConfig(init_size=30, eval_base=20, iterations=1, truth_size=5,
                       **{**FAST, "g_lr": 0.0, "d_lr": 0.0})
    r = ganas_run(cfg, dag19k, 1)
    assert r.n_queries == 50 == len(r.history)
    best = max(h[1] for h in r.history)
    assert r.best["accuracy"] == best


def test_max_queries_cap(dag19k):
    cfg = SearchConfig(init_size=20, eval_base=50, eval_inc=50, iterations=5, truth_size=5,
                       max_queries=90, **FAST)
    r = ganas_run(cfg, dag19k, 0)
    assert r.n_queries == 90


def test_chain81_finds_optimum(chain81):
    top = chain81.top_k(1)[0]
    cfg = SearchConfig(init_size=10, eval_base=10, eval_inc=0, schedule="uniform", iterations=3,
                       truth_size=5, max_queries=40, g_lr=1e-3, d_epochs=10, inner_rounds=10,
                       batch_episodes=64, hidden=32)
    hits = 0
    for seed in range(10):
        r = ganas_run(cfg, chain81, seed)
        assert r.n_queries <= 40
        hits += r.best["rank"] == 1 and r.best["accuracy"] == top[1].accuracy
    assert hits >= 9


def test_seed_with_best_stays_in_truth(dag19k):
    best_arch = dag19k.top_k(1)[0][0]
    cfg = SearchConfig(init_size=10, eval_base=10, eval_inc=0, iterations=3, truth_size=5, **FAST)
    r = ganas_run(cfg, dag19k, 2, seed_archs=[best_arch])
    h = r.best["hash"]
    assert r.best["rank"] == 1
    assert all(h in t["truth"] for t in r.trace)
    assert r.history[0][0] == h
    with pytest.raises(BenchmarkError):
        ganas_run(cfg, dag19k, 2,
                  seed_archs=[Architecture.cell(["INPUT", "zz", "OUTPUT"], [(0, 1), (1, 2)])])


def test_worst50_init(small_dag):
    acc = np.array([m.accuracy for m in small_dag.table.values()])
    sec = np.array([m.train_seconds for m in small_dag.table.values()])
    oracle = int(np.sum((acc <= np.median(acc)) & (sec >= np.median(sec))))
    assert len(worst_half(small_dag)) == oracle
    cfg = SearchConfig(init_method="worst50", eval_base=1, iterations=1, truth_size=2, **FAST)
    r = ganas_run(cfg, small_dag, 0)
    assert {h[0] for h in r.history[:oracle]} == set(worst_half(small_dag))
    assert r.n_queries <= oracle + 1


def test_constrained_truth_is_feasible(dag19k):
    secs = sorted(m.train_seconds for m in dag19k.table.values())
    limit = secs[len(secs) // 3]
    cfg = SearchConfig(mode="constrained", max_train_seconds=limit, init_size=40, eval_base=20,
                       eval_inc=0, iterations=2, truth_size=5, **FAST)
    r = ganas_run(cfg, dag19k, 0)
    for t in r.trace:
        assert all(dag19k.table[h].train_seconds <= limit for h in t["truth"])


def test_traces_monotone(dag19k):
    for mode in ("topk", "pareto"):
        cfg = SearchConfig(mode=mode, pareto_fronts=2, init_size=20, eval_base=10, eval_inc=5,
                           iterations=3, truth_size=5, **FAST)
        r = ganas_run(cfg, dag19k, 3)
        g = [t["gamma"] for t in r.trace]
        q = [t["q"] for t in r.trace]
        assert g == sorted(g) and q == sorted(q)


def test_result_json(dag19k):
    cfg = SearchConfig(init_size=10, eval_base=5, eval_inc=0, iterations=1, truth_size=3, **FAST)
    r = ganas_run(cfg, dag19k, 0)
    d = json.loads(r.dumps())
    assert {"arch", "accuracy", "rank"} <= set(d["best"])
    assert {"t", "gamma", "q", "truth_min", "truth_max"} <= set(d["trace"][0])
    assert d["seed"] == 0 and d["config_echo"]["truth_size"] == 3
    assert SearchResult.from_json(d).dumps() == r.dumps()
    assert r.best_curve()[-1] == r.best["accuracy"]
