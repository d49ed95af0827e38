"""Autoregressive architecture generator G(.; theta).

The encoder is a stack of direction-aware message-passing layers over the
partial graph followed by a mean readout. The decoder picks an operator
with an MLP over the readout (plus a one-hot of the step index) and, in
free-DAG spaces, walks the existing nodes in creation order with a GRU that
emits one connect/skip Bernoulli per node. A value head shares the encoder.

All batched work pads graphs to a common node count; padded rows are masked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .graph import INPUT, OUTPUT, Architecture, SearchSpaceSpec, hash_many, validate_cell


@dataclass(frozen=True)
class GeneratorState:
    partial_arch: Architecture
    step: int
    done: bool = False


@dataclass(frozen=True)
class Action:
    op_choice: int
    edge_decisions: tuple[bool, ...] = ()


@dataclass
class Step:
    state: GeneratorState
    action: Action
    log_prob: float
    value: float
    reward: float = 0.0


@dataclass
class Trajectory:
    steps: list[Step] = field(default_factory=list)
    final_arch: Architecture | None = None
    final_reward: float | None = None
    invalid_action: bool = False

    def __len__(self):
        return len(self.steps)

    @property
    def rewards(self) -> np.ndarray:
        r = np.array([s.reward for s in self.steps], dtype=np.float64)
        if self.final_reward is not None and len(r):
            r[-1] += self.final_reward
        return r

    @property
    def total_reward(self) -> float:
        return float(self.rewards.sum())


@dataclass
class GeneratorConfig:
    hidden: int = 64
    gnn_layers: int = 2


class Generator:
    def __init__(self, space: SearchSpaceSpec, rng: np.random.Generator,
                 config: GeneratorConfig | None = None):
        self.space = space
        self.config = config or GeneratorConfig()
        self.vocab = space.vocabulary
        self.vidx = {n: i for i, n in enumerate(self.vocab.names)}
        self.free = space.topology_mode == "free-dag"
        self.actions = list(self.vocab.searchable) + ([OUTPUT] if self.free else [])
        if self.free:
            self.n_steps = space.max_nodes - 1
        else:
            self.n_steps = space.n_slots
        d = self.config.hidden
        head_in = d + self.n_steps
        s = self.store = ad.ParamStore()
        s.uniform("embed", (len(self.vocab), d), d, rng)
        for i in range(self.config.gnn_layers):
            ad.init_gnn_layer(s, f"gnn{i}", d, d, rng)
        ad.init_mlp(s, "op_head", (head_in, d, len(self.actions)), rng)
        ad.init_mlp(s, "value_head", (head_in, d, 1), rng)
        if self.free:
            s.uniform("act_embed", (len(self.actions), d), d, rng)
            ad.init_linear(s, "gru_init", head_in, d, rng)
            ad.init_gru(s, "gru", 2 * d + 1, d, rng)
            ad.init_linear(s, "edge_out", d, 1, rng)

    # ------------------------------------------------------------------
    # state layout

    def initial_state(self) -> GeneratorState:
        if self.space.topology_mode == "chain":
            return GeneratorState(Architecture.chain(()), 0)
        return GeneratorState(Architecture.cell((INPUT,), ()), 0)

    def _state_graph(self, state: GeneratorState):
        arch = state.partial_arch
        if arch.kind == "chain":
            names = [INPUT] + [self.vocab.searchable[c] for c in arch.choices]
            return names, [(i, i + 1) for i in range(len(names) - 1)]
        return list(arch.ops), list(arch.edges)

    def _batch(self, states):
        graphs = [self._state_graph(s) for s in states]
        b = len(states)
        n = max(len(g[0]) for g in graphs)
        ids = np.zeros((b, n), dtype=np.int64)
        mask = np.zeros((b, n))
        adj = np.zeros((b, n, n))
        steps = np.zeros((b, self.n_steps))
        for i, ((names, edges), st) in enumerate(zip(graphs, states)):
            ids[i, :len(names)] = [self.vidx[x] for x in names]
            mask[i, :len(names)] = 1.0
            for u, v in edges:
                adj[i, u, v] = 1.0
            steps[i, min(st.step, self.n_steps - 1)] = 1.0
        counts = mask.sum(axis=1).astype(np.int64)
        return ids, mask, adj, steps, counts

    # ------------------------------------------------------------------
    # network pieces

    def _encode(self, ids, mask, adj):
        s = self.store
        h = ad.mul(ad.embedding_lookup(s["embed"], ids), mask[..., None])
        in_agg, out_agg = ad.mean_aggregators(adj)
        for i in range(self.config.gnn_layers):
            h = ad.gnn_layer(h, in_agg, out_agg, s, f"gnn{i}", mask)
        return ad.mean_rows(h, mask), h

    def encode(self, state: GeneratorState):
        """(graph_embedding, node_embeddings) for one state as numpy arrays."""
        ids, mask, adj, _, _ = self._batch([state])
        with ad.no_grad():
            g, h = self._encode(ids, mask, adj)
        return g.data[0], h.data[0]

    def _heads(self, states):
        ids, mask, adj, steps, counts = self._batch(states)
        g, h = self._encode(ids, mask, adj)
        head_in = ad.concat([g, steps], axis=-1)
        logits = ad.mlp(head_in, self.store, "op_head", 2)
        value = ad.reshape(ad.mlp(head_in, self.store, "value_head", 2), (len(states),))
        return logits, value, head_in, h, counts

    def _edge_scan(self, head_in, h, counts, ops, decisions=None, rng=None):
        """Run the edge GRU; either score given decisions or sample new ones.

        Returns (log_prob (B,), entropy (B,), decisions (B, J) bool).
        """
        s = self.store
        b = h.shape[0]
        span = int(counts.max())
        live = np.arange(span)[None, :] < counts[:, None]
        live &= counts[:, None] > 1  # first node after INPUT is wired to INPUT
        forced = counts == 1
        if decisions is None:
            decisions = np.zeros((b, span), dtype=bool)
            decisions[forced, 0] = True
            sampling = True
        else:
            decisions = np.asarray(decisions, dtype=bool)[:, :span]
            sampling = False
        act = ad.embedding_lookup(s["act_embed"], ops)
        hid = ad.tanh(ad.linear(head_in, s, "gru_init"))
        prev = np.zeros((b, 1))
        lp = ad.Tensor(np.zeros(b))
        ent = ad.Tensor(np.zeros(b))
        for j in range(span):
            node = ad.gather(h, np.array([j]), axis=1)
            node = ad.reshape(node, (b, h.shape[-1]))
            x = ad.concat([node, act, prev], axis=-1)
            hid = ad.gru_cell(hid, x, s, "gru")
            logit = ad.reshape(ad.linear(hid, s, "edge_out"), (b,))
            if sampling:
                p = 1.0 / (1.0 + np.exp(-logit.data))
                draw = rng.random(b) < p
                decisions[:, j] = np.where(live[:, j], draw, decisions[:, j])
            m = live[:, j].astype(np.float64)
            sign = np.where(decisions[:, j], 1.0, -1.0)
            lp = ad.add(lp, ad.mul(ad.log_sigmoid(ad.mul(logit, sign)), m))
            p_on = ad.sigmoid(logit)
            h_j = ad.neg(ad.add(ad.mul(p_on, ad.log_sigmoid(logit)),
                                ad.mul(ad.add(ad.neg(p_on), 1.0), ad.log_sigmoid(ad.neg(logit)))))
            ent = ad.add(ent, ad.mul(h_j, m))
            prev = decisions[:, j:j + 1].astype(np.float64)
        return lp, ent, decisions

    # ------------------------------------------------------------------
    # sampling

    def sample_step(self, state: GeneratorState, rng: np.random.Generator):
        """Draw one action for ``state``: (Action, log_prob, value)."""
        (action,), (lp,), (v,) = self._sample_batch([state], rng)
        return action, lp, v

    def _sample_batch(self, states, rng):
        with ad.no_grad():
            logits, value, head_in, h, counts = self._heads(states)
            logp = ad.log_softmax(logits).data
            probs = np.exp(logp)
            u = rng.random(len(states))
            cdf = np.cumsum(probs, axis=1)
            ops = np.minimum((u[:, None] > cdf).sum(axis=1), len(self.actions) - 1)
            total = logp[np.arange(len(states)), ops]
            if self.free:
                edge_lp, _, dec = self._edge_scan(head_in, h, counts, ops, rng=rng)
                total = total + edge_lp.data
        actions = []
        for i, st in enumerate(states):
            edges = tuple(bool(x) for x in dec[i, :counts[i]]) if self.free else ()
            actions.append(Action(int(ops[i]), edges))
        return actions, total.tolist(), value.data.tolist()

    def _apply(self, state: GeneratorState, action: Action):
        """Return (next_state, invalid_action, finished)."""
        arch = state.partial_arch
        space = self.space
        if space.topology_mode == "chain":
            choices = arch.choices + (action.op_choice,)
            done = len(choices) == space.chain_length
            return GeneratorState(Architecture.chain(choices), state.step + 1, done), False, done
        if space.topology_mode == "fixed-topology":
            n_total, template = space.fixed_edge_template
            ops = arch.ops + (self.actions[action.op_choice],)
            done = len(ops) == n_total - 1
            if done:
                ops = ops + (OUTPUT,)
            edges = [e for e in template if e[1] < len(ops)]
            nxt = Architecture.cell(ops, edges)
            return GeneratorState(nxt, state.step + 1, done), False, done
        i = len(arch.ops)
        name = self.actions[action.op_choice]
        new_edges = [(j, i) for j, on in enumerate(action.edge_decisions) if on]
        edges = arch.edges + tuple(new_edges)
        nxt = Architecture.cell(arch.ops + (name,), edges)
        if space.max_edges is not None and len(edges) > space.max_edges:
            return GeneratorState(nxt, state.step + 1, True), True, True
        done = name == OUTPUT or i + 1 >= space.max_nodes
        return GeneratorState(nxt, state.step + 1, done), False, done

    def rollout_batch(self, n: int, rng: np.random.Generator,
                      step_penalty: float = -0.1) -> list[Trajectory]:
        """Generate ``n`` episodes in lockstep. Final rewards are left unset;
        an invalid action earns ``step_penalty`` and ends its episode."""
        trajs = [Trajectory() for _ in range(n)]
        states = [self.initial_state() for _ in range(n)]
        active = list(range(n))
        while active:
            actions, lps, vals = self._sample_batch([states[i] for i in active], rng)
            still = []
            for i, a, lp, v in zip(active, actions, lps, vals):
                nxt, invalid, done = self._apply(states[i], a)
                step = Step(states[i], a, lp, v, step_penalty if invalid else 0.0)
                trajs[i].steps.append(step)
                states[i] = nxt
                if done:
                    trajs[i].final_arch = nxt.partial_arch
                    trajs[i].invalid_action = invalid
                else:
                    still.append(i)
            active = still
        return trajs

    def rollout(self, rng: np.random.Generator) -> Trajectory:
        return self.rollout_batch(1, rng)[0]

    # ------------------------------------------------------------------
    # scoring for PPO

    def evaluate_steps(self, steps: list[Step]):
        """Differentiable (log_prob, entropy, value) for a flat list of steps."""
        states = [s.state for s in steps]
        ops = np.array([s.action.op_choice for s in steps], dtype=np.int64)
        logits, value, head_in, h, counts = self._heads(states)
        logp_all = ad.log_softmax(logits)
        lp = ad.take_last(logp_all, ops)
        ent = ad.neg(ad.sum(ad.mul(ad.exp(logp_all), logp_all), axis=-1))
        if self.free:
            span = int(counts.max())
            dec = np.zeros((len(steps), span), dtype=bool)
            for i, s in enumerate(steps):
                dec[i, :len(s.action.edge_decisions)] = s.action.edge_decisions
            edge_lp, edge_ent, _ = self._edge_scan(head_in, h, counts, ops, decisions=dec)
            lp = ad.add(lp, edge_lp)
            ent = ad.add(ent, edge_ent)
        return lp, ent, value

    def log_prob_of(self, traj: Trajectory) -> np.ndarray:
        """Per-step log-probabilities of ``traj``'s actions under the current theta."""
        for s in traj.steps:
            if s.action.edge_decisions and not self.free:
                raise ValueError("trajectory carries edge decisions this space lacks")
            if not 0 <= s.action.op_choice < len(self.actions):
                raise ValueError("trajectory action outside this generator's vocabulary")
        with ad.no_grad():
            lp, _, _ = self.evaluate_steps(traj.steps)
        return lp.data.copy()

    def op_distribution(self, state: GeneratorState) -> np.ndarray:
        with ad.no_grad():
            logits, _, _, _, _ = self._heads([state])
            return ad.softmax(logits).data[0]

    # ------------------------------------------------------------------

    def generate_unique_valid(self, n: int, rng: np.random.Generator, attempt_cap: int | None = None,
                              exclude=(), batch: int = 64):
        """Rejection-sample ``n`` valid architectures with distinct hashes.

        Hashes in ``exclude`` are never returned. Returns (archs, hashes,
        shortfall); shortfall > 0 means ``attempt_cap`` rollouts ran out.
        """
        if n < 1:
            raise ValueError("n must be >= 1")
        cap = attempt_cap if attempt_cap is not None else 50 * n
        seen = set(exclude)
        archs, hashes = [], []
        attempts = 0
        while len(archs) < n and attempts < cap:
            size = min(max(batch, 2 * (n - len(archs))), cap - attempts)
            trajs = self.rollout_batch(size, rng)
            attempts += size
            cands = [t.final_arch for t in trajs if not t.invalid_action and self._valid(t.final_arch)]
            for a, h in zip(cands, hash_many(cands)):
                if h in seen:
                    continue
                seen.add(h)
                archs.append(a)
                hashes.append(h)
                if len(archs) == n:
                    break
        return archs, hashes, n - len(archs)

    def _valid(self, arch: Architecture) -> bool:
        return arch.kind == "chain" or validate_cell(arch).is_valid
