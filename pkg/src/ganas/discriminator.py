"""Pairwise discriminator D(.; phi).

A shared GNN embeds both architectures of a pair, the embeddings are
concatenated (anchor first) and an MLP emits the logit that the candidate
comes from the same distribution as the truth anchor. ``pairwise=False``
gives the single-input ablation: the anchor is ignored.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .graph import Architecture, SearchSpaceSpec, graph_view, hash_many


@dataclass(frozen=True)
class PairSample:
    anchor: Architecture
    candidate: Architecture
    label: int


@dataclass
class DiscriminatorConfig:
    hidden: int = 64
    gnn_layers: int = 2
    lr: float = 1e-3
    epochs: int = 10
    batch_size: int = 64
    pairwise: bool = True
    retain: bool = True


def _members(truth):
    archs = getattr(truth, "archs", truth)
    return list(archs)


def build_training_pairs(truth, fakes) -> list[PairSample]:
    """Each truth cell against every other truth cell (label 1), and against
    every generated cell (label 0). Ordered pairs, anchor always from truth."""
    truth = _members(truth)
    fakes = list(fakes)
    if len(truth) < 2:
        raise ValueError("need at least two truth architectures to form positive pairs")
    pairs = [PairSample(a, c, 1) for i, a in enumerate(truth)
             for j, c in enumerate(truth) if i != j]
    pairs += [PairSample(a, f, 0) for a in truth for f in fakes]
    return pairs


class Discriminator:
    def __init__(self, space: SearchSpaceSpec, rng: np.random.Generator,
                 config: DiscriminatorConfig | None = None):
        self.space = space
        self.config = config or DiscriminatorConfig()
        self.vidx = {n: i for i, n in enumerate(space.vocabulary.names)}
        d = self.config.hidden
        s = self.store = ad.ParamStore()
        s.uniform("embed", (len(self.vidx), d), d, rng)
        for i in range(self.config.gnn_layers):
            ad.init_gnn_layer(s, f"gnn{i}", d, d, rng)
        head_in = 2 * d if self.config.pairwise else d
        ad.init_mlp(s, "cls", (head_in, d, 1), rng)

    def _graph(self, arch: Architecture):
        names, edges = graph_view(arch, self.space)
        return [self.vidx[x] for x in names], edges

    def _embed(self, archs):
        n = max(len(self._graph(a)[0]) for a in archs)
        b = len(archs)
        ids = np.zeros((b, n), dtype=np.int64)
        mask = np.zeros((b, n))
        adj = np.zeros((b, n, n))
        for i, a in enumerate(archs):
            names, edges = self._graph(a)
            ids[i, :len(names)] = names
            mask[i, :len(names)] = 1.0
            for u, v in edges:
                adj[i, u, v] = 1.0
        h = ad.mul(ad.embedding_lookup(self.store["embed"], ids), mask[..., None])
        in_agg, out_agg = ad.mean_aggregators(adj)
        for i in range(self.config.gnn_layers):
            h = ad.gnn_layer(h, in_agg, out_agg, self.store, f"gnn{i}", mask)
        return ad.mean_rows(h, mask)

    def _logits(self, emb, anchor_idx, cand_idx):
        cand = ad.gather(emb, cand_idx, axis=0)
        if self.config.pairwise:
            x = ad.concat([ad.gather(emb, anchor_idx, axis=0), cand], axis=-1)
        else:
            x = cand
        return ad.reshape(ad.mlp(x, self.store, "cls", 2), (len(cand_idx),))

    def _index(self, anchors, cands):
        """Deduplicate architectures by hash and map pairs onto the unique list."""
        all_archs = list(anchors) + list(cands)
        hashes = hash_many(all_archs)
        slot: dict[str, int] = {}
        uniq = []
        idx = np.zeros(len(all_archs), dtype=np.int64)
        for i, (a, h) in enumerate(zip(all_archs, hashes)):
            if h not in slot:
                slot[h] = len(uniq)
                uniq.append(a)
            idx[i] = slot[h]
        return uniq, idx[:len(anchors)], idx[len(anchors):]

    def predict_pairs(self, anchors, candidates) -> np.ndarray:
        uniq, ai, ci = self._index(anchors, candidates)
        with ad.no_grad():
            logit = self._logits(self._embed(uniq), ai, ci).data
        return 1.0 / (1.0 + np.exp(-logit))

    def predict_pair(self, anchor: Architecture, candidate: Architecture) -> float:
        return float(self.predict_pairs([anchor], [candidate])[0])

    def reward_scores(self, candidates, truth) -> np.ndarray:
        """R_D for each candidate: max over truth anchors of the pair probability."""
        truth = _members(truth)
        if not truth:
            raise ValueError("empty truth set")
        candidates = list(candidates)
        if not candidates:
            return np.zeros(0)
        anchors = [t for _ in candidates for t in truth]
        cands = [c for c in candidates for _ in truth]
        p = self.predict_pairs(anchors, cands).reshape(len(candidates), len(truth))
        return p.max(axis=1)

    def reward_score(self, candidate: Architecture, truth) -> float:
        return float(self.reward_scores([candidate], truth)[0])

    def accuracy(self, pairs) -> float:
        p = self.predict_pairs([q.anchor for q in pairs], [q.candidate for q in pairs])
        labels = np.array([q.label for q in pairs])
        return float(np.mean((p > 0.5) == (labels == 1)))

    def train(self, pairs, rng: np.random.Generator, epochs: int | None = None,
              lr: float | None = None) -> list[float]:
        """Minimise binary cross-entropy with Adam on shuffled mini-batches.

        Returns the mean loss of each epoch.
        """
        pairs = list(pairs)
        if not pairs:
            raise ValueError("no training pairs")
        labels = np.array([q.label for q in pairs], dtype=np.float64)
        if labels.min() == labels.max():
            raise ValueError("training pairs contain a single class")
        epochs = self.config.epochs if epochs is None else epochs
        lr = self.config.lr if lr is None else lr
        uniq, ai, ci = self._index([q.anchor for q in pairs], [q.candidate for q in pairs])
        sign = 1.0 - 2.0 * labels  # BCE(l, y) = -log_sigmoid((2y-1) l)
        bs = self.config.batch_size
        trace = []
        for _ in range(epochs):
            order = rng.permutation(len(pairs))
            total = 0.0
            for start in range(0, len(order), bs):
                batch = order[start:start + bs]
                used, local = np.unique(np.concatenate([ai[batch], ci[batch]]), return_inverse=True)
                emb = self._embed([uniq[u] for u in used])
                logit = self._logits(emb, local[:len(batch)], local[len(batch):])
                loss = ad.mean(ad.neg(ad.log_sigmoid(ad.mul(logit, -sign[batch]))))
                self.store.zero_grad()
                ad.backward(loss)
                if lr > 0:
                    self.store.adam_step(lr)
                total += loss.item() * len(batch)
            trace.append(total / len(pairs))
        return trace


def predict_pair(anchor, candidate, disc: Discriminator) -> float:
    return disc.predict_pair(anchor, candidate)


def reward_score(candidate, truth, disc: Discriminator) -> float:
    return disc.reward_score(candidate, truth)


def train_discriminator(pairs, disc: Discriminator, epochs: int, lr: float, rng) -> list[float]:
    return disc.train(pairs, rng, epochs=epochs, lr=lr)
