"""Cross-entropy method for rare-event estimation over product categoricals.

A small, self-contained reference for the level-raising scheme that the
outer search loop mimics: sample, take the (1 - rho) quantile as the level,
refit the sampling density to the elites, repeat until the level reaches
alpha.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import autodiff as ad

EPS_P = 1e-6


@dataclass
class CategoricalFamily:
    """Independent categorical per coordinate; ``probs[i]`` sums to one."""
    probs: list
    prior: list | None = None

    def __post_init__(self):
        self.probs = [np.asarray(p, dtype=np.float64) for p in self.probs]
        if self.prior is None:
            self.prior = [p.copy() for p in self.probs]
        for p in self.probs:
            if abs(p.sum() - 1.0) > 1e-12 or (p < 0).any():
                raise ValueError("each coordinate must be a probability vector")

    @classmethod
    def uniform(cls, sizes) -> "CategoricalFamily":
        return cls([np.full(k, 1.0 / k) for k in sizes])

    @property
    def sizes(self):
        return [len(p) for p in self.probs]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((n, len(self.probs)), dtype=np.int64)
        for i, p in enumerate(self.probs):
            out[:, i] = rng.choice(len(p), size=n, p=p)
        return out

    def log_prob(self, x: np.ndarray, params=None) -> np.ndarray:
        params = self.probs if params is None else params
        x = np.atleast_2d(x)
        return sum(np.log(p[x[:, i]]) for i, p in enumerate(params))


@dataclass
class CESchedule:
    alpha: float
    delta: float = 1.0
    rho: float = 0.1
    samples: int = 500
    max_stages: int = 100
    rho_min: float = 0.01
    rho_decay: float = 0.8
    full_ratio: bool = False
    eps_p: float = EPS_P

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")


@dataclass
class CEResult:
    best_x: np.ndarray
    best_score: float
    gamma_trace: list
    rho_trace: list
    stages: int
    reached: bool
    elite_fraction: list = field(default_factory=list)
    family: CategoricalFamily | None = None

    def to_json(self) -> dict:
        return {"best_x": self.best_x.tolist(), "best_score": self.best_score,
                "gamma": self.gamma_trace, "rho": self.rho_trace, "stages": self.stages,
                "reached": self.reached, "elite_fraction": self.elite_fraction}


def quantile_level(scores, rho: float) -> float:
    """The ceil(rho * N)-th largest score: at least a rho fraction lies at or above it."""
    s = np.sort(np.asarray(scores, dtype=np.float64))[::-1]
    if len(s) == 0:
        raise ValueError("no scores")
    m = min(max(math.ceil(rho * len(s) - 1e-9), 1), len(s))
    return float(s[m - 1])


def ce_update(elites: np.ndarray, family: CategoricalFamily, weights=None,
              eps_p: float = EPS_P) -> list:
    """Weighted symbol frequencies among the elites, mixed with a floor:
    p = eps_p + (1 - K eps_p) * freq, which keeps every entry >= eps_p."""
    elites = np.atleast_2d(np.asarray(elites))
    if len(elites) == 0:
        raise ValueError("empty elite set")
    w = np.ones(len(elites)) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.sum() <= 0:
        raise ValueError("elite weights are all zero")
    out = []
    for i, k in enumerate(family.sizes):
        freq = np.bincount(elites[:, i], weights=w, minlength=k) / w.sum()
        out.append(eps_p + (1.0 - k * eps_p) * freq)
    return out


def ce_optimize(objective, family: CategoricalFamily, schedule: CESchedule,
                rng: np.random.Generator) -> CEResult:
    """Multi-level CE. ``objective`` maps an (n, d) int array to n scores."""
    fam = CategoricalFamily([p.copy() for p in family.probs],
                            [p.copy() for p in family.prior])
    gammas, rhos, fracs = [], [], []
    best_x, best_s = None, -math.inf
    stage = 0
    while stage < schedule.max_stages:
        stage += 1
        x = fam.sample(schedule.samples, rng)
        s = np.asarray(objective(x), dtype=np.float64)
        i = int(np.argmax(s))
        if s[i] > best_s:
            best_x, best_s = x[i].copy(), float(s[i])
        rho = schedule.rho
        gamma = quantile_level(s, rho)
        if gammas:
            # shrink rho until the level rises by delta (or alpha is met)
            target = min(schedule.alpha, gammas[-1] + schedule.delta)
            while gamma < target and rho * schedule.rho_decay >= schedule.rho_min:
                rho *= schedule.rho_decay
                gamma = quantile_level(s, rho)
        gamma = min(gamma, schedule.alpha)
        gammas.append(gamma)
        rhos.append(rho)
        elite = s >= gamma
        fracs.append(float(elite.mean()))
        if gamma >= schedule.alpha:
            return CEResult(best_x, best_s, gammas, rhos, stage, True, fracs, fam)
        w = None
        if schedule.full_ratio:
            lr = fam.log_prob(x[elite], fam.prior) - fam.log_prob(x[elite])
            w = np.exp(lr - lr.max())
        fam = CategoricalFamily(ce_update(x[elite], fam, w, schedule.eps_p), fam.prior)
    return CEResult(best_x, best_s, gammas, rhos, stage, False, fracs, fam)


def onemax(x: np.ndarray) -> np.ndarray:
    return np.asarray(x).sum(axis=1).astype(np.float64)


# --------------------------------------------------------------------------
# JS diagnostic


def _joint(sizes):
    return np.array(list(product(*[range(k) for k in sizes])), dtype=np.int64)


def joint_probs(params, sizes=None) -> np.ndarray:
    """Probability of every joint configuration of a product family (small spaces)."""
    sizes = sizes or [len(p) for p in params]
    if np.prod(sizes) > 1 << 16:
        raise ValueError("joint space too large to enumerate")
    x = _joint(sizes)
    return np.exp(sum(np.log(np.asarray(p)[x[:, i]]) for i, p in enumerate(params)))


def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence (natural log) between two distributions on the same support."""
    p, q = np.asarray(p, dtype=np.float64), np.asarray(q, dtype=np.float64)
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return float(np.sum(a[nz] * np.log(a[nz] / b[nz])))
    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def js_minimize(target: np.ndarray, sizes, init=None, steps: int = 2000, lr: float = 0.05,
                seed: int = 0) -> list:
    """Product categorical minimising JS(target || p) by Adam on softmax logits."""
    x = _joint(sizes)
    target = np.asarray(target, dtype=np.float64)
    store = ad.ParamStore()
    rng = np.random.default_rng(seed)
    for i, k in enumerate(sizes):
        start = np.log(np.asarray(init[i])) if init is not None else 0.01 * rng.normal(size=k)
        store.add(f"logit{i}", start.copy())
    nz = target > 0
    for _ in range(steps):
        logp = None
        for i in range(len(sizes)):
            term = ad.gather(ad.log_softmax(store[f"logit{i}"]), x[:, i], axis=0)
            logp = term if logp is None else ad.add(logp, term)
        p = ad.exp(logp)
        m = ad.mul(ad.add(p, target), 0.5)
        log_m = ad.log(m)
        # JS = 0.5 sum p (log p - log m) + 0.5 sum t (log t - log m)
        a = ad.sum(ad.mul(p, ad.add(logp, ad.neg(log_m))))
        b = ad.sum(ad.mul(ad.neg(log_m), np.where(nz, target, 0.0)))
        loss = ad.mul(ad.add(a, b), 0.5)
        store.zero_grad()
        ad.backward(loss)
        store.adam_step(lr)
    return [np.exp(v - v.max()) / np.exp(v - v.max()).sum()
            for v in (store[f"logit{i}"].data for i in range(len(sizes)))]


def js_variant_note(elites: np.ndarray, sizes, eps_p: float = EPS_P, steps: int = 2000) -> dict:
    """Compare the CE (max-likelihood) refit with a direct JS-minimising refit.

    The target is the empirical elite distribution over the joint space.
    Returns both parameter sets and their JS to the target.
    """
    elites = np.atleast_2d(np.asarray(elites))
    x = _joint(sizes)
    index = {tuple(r): i for i, r in enumerate(x)}
    target = np.zeros(len(x))
    for r in elites:
        target[index[tuple(r)]] += 1.0
    target /= target.sum()
    ce = ce_update(elites, CategoricalFamily.uniform(sizes), eps_p=eps_p)
    js = js_minimize(target, sizes, init=ce, steps=steps)
    return {"ce_params": ce, "js_params": js,
            "ce_js": js_divergence(target, joint_probs(ce)),
            "js_js": js_divergence(target, joint_probs(js))}
