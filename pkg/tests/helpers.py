"""Oracles shared by several test modules."""

import numpy as np

from ganas import autodiff as ad


def rel_err(a, b, floor=1e-6):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def gradcheck(loss_fn, tensors, h=1e-4, rng=None, max_coords=None, kink_tol=1e-3,
              stats=None):
    """Max relative error between backward() and central differences.

    ``loss_fn()`` rebuilds the scalar loss from the current ``tensors``.
    With ``max_coords`` only that many random coordinates per tensor are probed.
    Coordinates whose one-sided differences disagree sit on a ReLU kink within
    ``h``; there is no derivative to compare, so they are skipped and counted
    in ``stats["kinks"]``. A wrong backward pass cannot hide this way since the
    numerical side stays self-consistent.
    """
    for t in tensors:
        t.grad = np.zeros_like(t.data)
    f0 = loss_fn()
    ad.backward(f0)
    f0 = f0.item()
    worst, kinks, probed = 0.0, 0, 0
    for t in tensors:
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        keep, num = [], []
        for i in idx:
            old = flat[i]
            flat[i] = old + h
            up = loss_fn().item()
            flat[i] = old - h
            down = loss_fn().item()
            flat[i] = old
            fwd, bwd = (up - f0) / h, (f0 - down) / h
            if abs(fwd - bwd) > kink_tol * max(1.0, abs(fwd), abs(bwd)):
                kinks += 1
                continue
            keep.append(i)
            num.append((up - down) / (2 * h))
        probed += len(idx)
        if keep:
            worst = max(worst, rel_err(t.grad.reshape(-1)[keep], num))
    if stats is not None:
        stats["kinks"] = stats.get("kinks", 0) + kinks
        stats["probed"] = stats.get("probed", 0) + probed
    return worst


class Bandit:
    """Fixed rewards per arm on a one-position chain space."""

    def __init__(self, rewards):
        self.rewards = rewards

    def __call__(self, archs):
        return np.array([self.rewards[a.choices[0]] for a in archs], dtype=np.float64)
