"""Multi-seed campaigns, summary tables, best-so-far curves and Pareto reports."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .benchmark import Benchmark
from .search import SearchConfig, SearchResult, first_front, ganas_run


@dataclass(frozen=True)
class Point:
    hash: str
    accuracy: float
    train_seconds: float


def result_path(out_dir, method: str, seed: int) -> Path:
    return Path(out_dir) / f"{method}_seed{seed}.json"


def write_result(result: SearchResult, out_dir) -> Path:
    path = result_path(out_dir, result.method, result.seed)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(result.dumps() + "\n")
    return path


def load_results(source, method: str | None = None) -> list[SearchResult]:
    """Results from a directory of ``*_seed*.json`` files or an iterable of paths."""
    if isinstance(source, (str, Path)) and Path(source).is_dir():
        files = sorted(Path(source).glob("*_seed*.json"))
    elif isinstance(source, (str, Path)):
        files = [Path(source)]
    else:
        files = [Path(f) for f in source]
    out = []
    for f in files:
        r = SearchResult.from_json(json.loads(f.read_text()))
        if method is None or r.method == method:
            out.append(r)
    return out


def run_campaign(config: SearchConfig, bench: Benchmark, seeds, out_dir,
                 method: str = "ganas", runner=None, resume: bool = True) -> dict:
    """Run ``runner(config, bench, seed)`` for each seed, one JSON file per seed.

    Seeds whose result file already exists are loaded instead of re-run.
    """
    runner = runner or ganas_run
    results = []
    for seed in seeds:
        path = result_path(out_dir, method, seed)
        if resume and path.exists():
            results.append(SearchResult.from_json(json.loads(path.read_text())))
            continue
        r = runner(config, bench, seed)
        r.method = method
        write_result(r, out_dir)
        results.append(r)
    summary = summarize(results)
    summary["files"] = [result_path(out_dir, method, s).name for s in seeds]
    (Path(out_dir) / f"{method}_summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    return summary


def summarize(results) -> dict:
    """Mean/std of best accuracy, best rank and #Q across runs (population std)."""
    results = list(results)
    if not results:
        raise ValueError("no results to summarize")
    acc = np.array([r.best["accuracy"] for r in results])
    rank = np.array([r.best["rank"] for r in results], dtype=np.float64)
    q = np.array([r.n_queries for r in results], dtype=np.float64)
    return {"method": results[0].method, "n_runs": len(results),
            "seeds": [r.seed for r in results],
            "mean_acc": float(acc.mean()), "std_acc": float(acc.std()),
            "mean_rank": float(rank.mean()), "std_rank": float(rank.std()),
            "mean_q": float(q.mean()), "std_q": float(q.std())}


def format_table(summaries) -> str:
    lines = [f"{'Method':<10} {'Mean Acc':>18} {'Mean Rank':>10} {'Average #Q':>16}"]
    for s in summaries:
        acc = f"{100 * s['mean_acc']:.2f} ± {100 * s['std_acc']:.2f}"
        q = f"{s['mean_q']:.1f} ± {s['std_q']:.1f}"
        lines.append(f"{s['method']:<10} {acc:>18} {s['mean_rank']:>10.1f} {q:>16}")
    return "\n".join(lines)


def _bench_key(r: SearchResult):
    return json.dumps(r.bench_info, sort_keys=True)


def emit_curve(results) -> str:
    """CSV of mean/std best-accuracy-so-far against #Q across runs."""
    results = list(results)
    if not results:
        raise ValueError("no results")
    if len({_bench_key(r) for r in results}) > 1:
        raise ValueError("results come from different benchmarks")
    curves = [r.best_curve() for r in results]
    qmax = max(len(c) for c in curves)
    grid = np.full((len(curves), qmax), np.nan)
    for i, c in enumerate(curves):
        grid[i, :len(c)] = c
        if len(c):
            grid[i, len(c):] = c[-1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q", "mean_best_acc", "std_best_acc", "n_runs"])
    for q in range(qmax):
        col = grid[:, q]
        col = col[~np.isnan(col)]
        w.writerow([q + 1, f"{col.mean():.12g}", f"{col.std():.12g}", len(col)])
    return buf.getvalue()


def true_front(bench: Benchmark) -> list[Point]:
    pts = [Point(h, m.accuracy, m.train_seconds) for h, m in sorted(bench.table.items())]
    return first_front(pts)


def report_pareto(results, bench: Benchmark) -> list[dict]:
    """Per run: size of the found front and how many true-front cells it contains."""
    truth = {p.hash for p in true_front(bench)}
    rows = []
    for r in results:
        pts = [Point(h, a, s) for h, a, s in r.history]
        found = first_front(pts)
        hit = sum(1 for p in found if p.hash in truth)
        rows.append({"method": r.method, "seed": r.seed, "q": r.n_queries,
                     "found_front": len(found), "recovered": hit, "true_front": len(truth),
                     "fraction": hit / len(truth)})
    return rows
