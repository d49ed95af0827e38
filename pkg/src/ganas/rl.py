"""Rewards, GAE and PPO for the generator, plus one adversarial round."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .discriminator import Discriminator, build_training_pairs
from .generator import Generator, Trajectory
from .graph import Architecture, hash_many, validate_cell

log = logging.getLogger(__name__)


@dataclass
class RewardConfig:
    step_penalty: float = -0.1
    violation_penalty: float = -0.1
    entropy_coef: float = 0.1
    clip_epsilon: float = 0.2
    gae_lambda: float = 0.95
    discount: float = 1.0
    value_coef: float = 0.5
    ppo_epochs: int = 4
    batch_episodes: int = 32
    g_lr: float = 1e-4
    normalize_advantages: bool = True

    def __post_init__(self):
        if self.step_penalty >= 0 or self.violation_penalty >= 0:
            raise ValueError("penalties must be negative")
        if self.entropy_coef < 0:
            raise ValueError("entropy_coef must be >= 0")
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip_epsilon must lie in (0, 1)")


def validity_reward(arch: Architecture, penalty: float = -0.1) -> float:
    """R_v: ``penalty`` per violation; chains are always valid."""
    if arch.kind == "chain":
        return 0.0
    total = validate_cell(arch).total
    # scale through tenths so that e.g. 3 * -0.1 comes out as exactly -0.3
    return total * (penalty * 10) / 10 if total else 0.0


def final_rewards(archs, truth_hashes, disc: Discriminator | None, truth_archs,
                  penalty: float = -0.1) -> np.ndarray:
    """R_final for a batch: R_v when invalid or already in the truth set, else R_D."""
    archs = list(archs)
    r = np.array([validity_reward(a, penalty) for a in archs])
    hashes = hash_many(archs)
    novel = [i for i, h in enumerate(hashes) if r[i] == 0 and h not in truth_hashes]
    if novel:
        r[novel] = disc.reward_scores([archs[i] for i in novel], truth_archs)
    return r


def final_reward(arch: Architecture, truth, disc: Discriminator | None,
                 penalty: float = -0.1) -> float:
    members = list(getattr(truth, "archs", truth))
    return float(final_rewards([arch], set(hash_many(members)), disc, members, penalty)[0])


def compute_gae(traj: Trajectory, discount: float = 1.0, gae_lambda: float = 0.95):
    """Advantages and returns for one episode (bootstrap value 0 after the end)."""
    if not traj.steps:
        raise ValueError("empty trajectory")
    r = traj.rewards
    v = np.array([s.value for s in traj.steps])
    adv = np.zeros(len(r))
    running = 0.0
    for t in range(len(r) - 1, -1, -1):
        nxt = v[t + 1] if t + 1 < len(r) else 0.0
        delta = r[t] + discount * nxt - v[t]
        running = delta + discount * gae_lambda * running
        adv[t] = running
    return adv, adv + v


def clipped_surrogate(ratio, adv, eps: float):
    """Per-sample PPO objective min(r A, clip(r, 1 - eps, 1 + eps) A)."""
    return ad.minimum(ad.mul(ratio, adv), ad.mul(ad.clip(ratio, 1 - eps, 1 + eps), adv))


def ppo_update(gen: Generator, trajectories, config: RewardConfig) -> dict:
    """Clipped-surrogate PPO with value loss and entropy bonus, full batch per epoch.

    The old log-probabilities are the detached first-epoch forward pass, so
    the first-epoch ratios are exactly one.
    """
    trajectories = [t for t in trajectories if t.steps]
    if not trajectories:
        raise ValueError("no trajectories")
    steps, advs, rets = [], [], []
    for t in trajectories:
        a, r = compute_gae(t, config.discount, config.gae_lambda)
        steps += t.steps
        advs.append(a)
        rets.append(r)
    adv = np.concatenate(advs)
    ret = np.concatenate(rets)
    if config.normalize_advantages and len(adv) > 1 and adv.std() > 1e-12:
        adv = (adv - adv.mean()) / adv.std()
    eps = config.clip_epsilon
    old = None
    out = {"ratio_first": None, "policy": [], "value": [], "entropy": []}
    for _ in range(config.ppo_epochs):
        lp, ent, value = gen.evaluate_steps(steps)
        if old is None:
            old = lp.data.copy()
        ratio = ad.exp(ad.add(lp, -old))
        if not np.all(np.isfinite(ratio.data)):
            raise FloatingPointError("non-finite PPO ratio")
        if out["ratio_first"] is None:
            out["ratio_first"] = ratio.data.copy()
        surr = clipped_surrogate(ratio, adv, eps)
        policy_loss = ad.neg(ad.mean(surr))
        diff = ad.add(value, -ret)
        value_loss = ad.mean(ad.mul(diff, diff))
        entropy = ad.mean(ent)
        loss = ad.add(ad.add(policy_loss, ad.mul(value_loss, config.value_coef)),
                      ad.mul(entropy, -config.entropy_coef))
        out["policy"].append(policy_loss.item())
        out["value"].append(value_loss.item())
        out["entropy"].append(entropy.item())
        gen.store.zero_grad()
        ad.backward(loss)
        if config.g_lr > 0:
            gen.store.adam_step(config.g_lr)
    return out


def collect(gen: Generator, n: int, rng, reward_fn, config: RewardConfig) -> list[Trajectory]:
    """Roll out ``n`` episodes and attach final rewards from ``reward_fn(archs)``."""
    trajs = gen.rollout_batch(n, rng, config.step_penalty)
    done = [t for t in trajs if not t.invalid_action]
    if done:
        for t, r in zip(done, reward_fn([t.final_arch for t in done])):
            t.final_reward = float(r)
    return trajs


@dataclass
class RoundStats:
    d_loss: float
    d_accuracy: float
    mean_reward: float
    shortfall: int


def adversarial_round(gen: Generator, disc: Discriminator, truth_archs, config: RewardConfig,
                      rng: np.random.Generator, inner_rounds: int = 5,
                      d_epochs: int | None = None, d_lr: float | None = None) -> list[RoundStats]:
    """``inner_rounds`` alternations of discriminator training and a PPO step."""
    truth_archs = list(truth_archs)
    if len(truth_archs) < 2:
        raise ValueError("adversarial round needs |T| >= 2")
    truth_hashes = set(hash_many(truth_archs))
    stats = []
    for _ in range(inner_rounds):
        fakes, _, shortfall = gen.generate_unique_valid(len(truth_archs), rng, exclude=truth_hashes)
        if shortfall:
            log.warning("generator fell %d cells short of |T|", shortfall)
        pairs = build_training_pairs(truth_archs, fakes)
        if fakes:
            trace = disc.train(pairs, rng, epochs=d_epochs, lr=d_lr)
            d_acc = disc.accuracy(pairs)
        else:
            trace, d_acc = [float("nan")], float("nan")
        trajs = collect(gen, config.batch_episodes, rng,
                        lambda archs: final_rewards(archs, truth_hashes, disc, truth_archs,
                                                    config.violation_penalty), config)
        ppo_update(gen, trajs, config)
        stats.append(RoundStats(trace[-1] if trace else float("nan"), d_acc,
                                float(np.mean([t.total_reward for t in trajs])), shortfall))
    return stats
