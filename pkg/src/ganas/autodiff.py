"""Small reverse-mode autodiff over numpy arrays.

Every op checks its output for NaN/Inf. A graph can be differentiated once:
``backward`` frees the recorded closures, and a second call on the same
loss raises. Parameters live in a :class:`ParamStore` that also carries the
Adam moments.
"""

from __future__ import annotations

import contextlib
import json
from pathlib import Path

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_consumed")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def backward(self):
        backward(self)

    # operator sugar
    def __add__(self, o): return add(self, o)
    def __radd__(self, o): return add(o, self)
    def __sub__(self, o): return add(self, neg(as_tensor(o)))
    def __rsub__(self, o): return add(o, neg(self))
    def __mul__(self, o): return mul(self, o)
    def __rmul__(self, o): return mul(o, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, o): return matmul(self, o)
    def __truediv__(self, o): return mul(self, 1.0 / np.asarray(o, dtype=np.float64))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check(out: np.ndarray, op: str) -> np.ndarray:
    if not np.isfinite(out).all():
        raise FloatingPointError(f"non-finite value produced by {op}")
    return out


def _make(out, parents, backward_fn, op):
    t = Tensor(_check(out, op))
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = parents
        t._backward = backward_fn
    return t


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every grad-requiring leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._consumed:
        raise RuntimeError("graph already differentiated; run the forward pass again")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node._consumed:
            raise RuntimeError("graph already differentiated; run the forward pass again")
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if node._backward is None:
            if g is not None and node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        if g is None:
            continue
        for p, pg in zip(node._parents, node._backward(g)):
            if pg is None or not p.requires_grad:
                continue
            prev = grads.get(id(p))
            grads[id(p)] = pg if prev is None else prev + pg
    for node in order:
        if node._backward is not None:
            node._backward = None
            node._parents = ()
            node._consumed = True


# --------------------------------------------------------------------------
# primitives


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def neg(a) -> Tensor:
    return _make(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul needs operands with ndim >= 2")
    if ad.shape[-1] != bd.shape[-2]:
        raise ValueError(f"matmul shape mismatch {ad.shape} @ {bd.shape}")

    def back(g):
        ga = _unbroadcast(g @ _swap(bd), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(_swap(ad) @ g, bd.shape) if b.requires_grad else None
        return ga, gb
    return _make(ad @ bd, (a, b), back, "matmul")


def sigmoid(a) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def log_sigmoid(a) -> Tensor:
    x = a.data
    return _make(-np.logaddexp(0.0, -x), (a,), lambda g: (g * _sigmoid(-x),), "log_sigmoid")


def tanh(a) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a) -> Tensor:
    pos = a.data > 0
    return _make(a.data * pos, (a,), lambda g: (g * pos,), "relu")


def exp(a) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    x = a.data
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(x)
    return _make(out, (a,), lambda g: (g / x,), "log")


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=-1, keepdims=True)),)
    return _make(out, (a,), back, "softmax")


def log_softmax(a) -> Tensor:
    z = a.data - a.data.max(axis=-1, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    p = np.exp(out)
    return _make(out, (a,), lambda g: (g - p * g.sum(axis=-1, keepdims=True),), "log_softmax")


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def sum(a, axis=None, keepdims=False) -> Tensor:  # noqa: A001
    shape = a.shape

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)
    return _make(a.data.sum(axis=axis, keepdims=keepdims), (a,), back, "sum")


def mean(a, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return mul(sum(a, axis=axis), 1.0 / n)


def mean_rows(a, mask=None) -> Tensor:
    """Mean over the second-to-last axis; ``mask`` (…, rows) selects rows."""
    if mask is None:
        return mean(a, axis=-2)
    mask = np.asarray(mask, dtype=np.float64)
    w = mask / np.maximum(mask.sum(axis=-1, keepdims=True), 1.0)
    return sum(mul(a, w[..., None]), axis=-2)


def reshape(a, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def gather(a, index, axis=0) -> Tensor:
    """Select entries of ``a`` along ``axis`` with an integer index array."""
    index = np.asarray(index, dtype=np.int64)
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, (slice(None),) * (axis % len(shape)) + (index,), g)
        return (out,)
    return _make(np.take(a.data, index, axis=axis), (a,), back, "gather")


def embedding_lookup(table, ids) -> Tensor:
    return gather(table, ids, axis=0)


def take_last(a, index) -> Tensor:
    """out[i...] = a[i..., index[i...]] (pick one entry per row of the last axis)."""
    index = np.asarray(index, dtype=np.int64)
    picked = np.take_along_axis(a.data, index[..., None], axis=-1)[..., 0]
    shape = a.shape

    def back(g):
        out = np.zeros(shape)
        np.put_along_axis(out, index[..., None], g[..., None], axis=-1)
        return (out,)
    return _make(picked, (a,), back, "take_last")


def minimum(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    out = np.where(pick_a, a.data, b.data)
    return _make(out, (a, b), lambda g: (_unbroadcast(g * pick_a, a.shape),
                                         _unbroadcast(g * ~pick_a, b.shape)), "minimum")


def clip(a, lo, hi) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _make(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clip")


# --------------------------------------------------------------------------
# parameters and Adam


class ParamStore:
    """Named parameters plus Adam first/second moments and a step counter."""

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already registered")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def uniform(self, name, shape, fan_in, rng) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self.add(name, rng.uniform(-bound, bound, size=shape))

    def __getitem__(self, name) -> Tensor:
        return self.params[name]

    def __contains__(self, name):
        return name in self.params

    def names(self):
        return sorted(self.params)

    def zero_grad(self):
        for t in self.params.values():
            t.grad = np.zeros_like(t.data)

    def grad_norm(self) -> float:
        return float(np.sqrt(np.sum([np.sum(t.grad ** 2) for t in self.params.values()
                                     if t.grad is not None])))

    def clip_grad_norm(self, max_norm: float) -> float:
        norm = self.grad_norm()
        if norm > max_norm > 0:
            scale = max_norm / (norm + 1e-12)
            for t in self.params.values():
                if t.grad is not None:
                    t.grad = t.grad * scale
        return norm

    def adam_step(self, lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        missing = [n for n, t in self.params.items() if t.grad is None]
        if missing:
            raise ValueError(f"missing gradient for {missing}")
        b1, b2 = betas
        self.step += 1
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        for name, t in self.params.items():
            g = t.grad
            m = self.m[name] = b1 * self.m[name] + (1 - b1) * g
            v = self.v[name] = b2 * self.v[name] + (1 - b2) * g * g
            t.data = t.data - lr * (m / c1) / (np.sqrt(v / c2) + eps)

    def state_vector(self) -> np.ndarray:
        return np.concatenate([self.params[n].data.ravel() for n in self.names()])

    def copy_from(self, other: "ParamStore"):
        for n in self.names():
            self.params[n].data = other.params[n].data.copy()
            self.m[n] = other.m[n].copy()
            self.v[n] = other.v[n].copy()
        self.step = other.step

    # checkpoint: manifest.json + params.bin (little-endian float64)
    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries, offset = [], 0
        with open(directory / "params.bin", "wb") as fh:
            for name in self.names():
                for kind, arr in (("value", self.params[name].data), ("m", self.m[name]),
                                  ("v", self.v[name])):
                    raw = np.ascontiguousarray(arr, dtype="<f8").tobytes()
                    fh.write(raw)
                    entries.append({"name": name, "kind": kind, "shape": list(arr.shape),
                                    "offset": offset, "count": int(arr.size)})
                    offset += len(raw)
        manifest = {"format": "ganas-params-v1", "dtype": "<f8", "step": self.step,
                    "entries": entries}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=1))

    def load(self, directory):
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        raw = (directory / "params.bin").read_bytes()
        for e in manifest["entries"]:
            arr = np.frombuffer(raw, dtype="<f8", count=e["count"], offset=e["offset"])
            arr = arr.reshape(e["shape"]).astype(np.float64)
            name = e["name"]
            if name not in self.params:
                raise KeyError(f"checkpoint has unknown parameter {name!r}")
            if e["kind"] == "value":
                if arr.shape != self.params[name].shape:
                    raise ValueError(f"shape mismatch for {name}")
                self.params[name].data = arr
            else:
                getattr(self, e["kind"])[name] = arr
        self.step = manifest["step"]


# --------------------------------------------------------------------------
# layers


def init_linear(store: ParamStore, name: str, n_in: int, n_out: int, rng):
    store.uniform(f"{name}.W", (n_in, n_out), n_in, rng)
    store.uniform(f"{name}.b", (n_out,), n_in, rng)


def linear(x, store: ParamStore, name: str) -> Tensor:
    return add(matmul(x, store[f"{name}.W"]), store[f"{name}.b"])


def init_mlp(store, name, sizes, rng):
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        init_linear(store, f"{name}.{i}", a, b, rng)


def mlp(x, store, name, n_layers) -> Tensor:
    for i in range(n_layers):
        x = linear(x, store, f"{name}.{i}")
        if i < n_layers - 1:
            x = relu(x)
    return x


def init_gnn_layer(store, name, d_in, d_out, rng):
    for part in ("self", "in", "out"):
        store.uniform(f"{name}.W_{part}", (d_in, d_out), d_in, rng)
    store.uniform(f"{name}.b", (d_out,), d_in, rng)


def mean_aggregators(adj: np.ndarray):
    """Row-normalised in/out aggregation matrices for adjacency (…, N, N)."""
    adj = np.asarray(adj, dtype=np.float64)
    adj_t = np.swapaxes(adj, -1, -2)
    in_agg = adj_t / np.maximum(adj_t.sum(axis=-1, keepdims=True), 1.0)
    out_agg = adj / np.maximum(adj.sum(axis=-1, keepdims=True), 1.0)
    return in_agg, out_agg


def gnn_layer(h, in_agg, out_agg, store, name, mask=None) -> Tensor:
    """h'_v = ReLU(W_self h_v + W_in mean_{u->v} h_u + W_out mean_{v->u} h_u + b).

    ``in_agg``/``out_agg`` come from :func:`mean_aggregators`; nodes without
    neighbours get a zero aggregate. Padded rows are zeroed through ``mask``.
    """
    if in_agg.shape[-1] != h.shape[-2] or out_agg.shape[-1] != h.shape[-2]:
        raise ValueError("adjacency does not match node count")
    pre = matmul(h, store[f"{name}.W_self"])
    pre = add(pre, matmul(matmul(in_agg, h), store[f"{name}.W_in"]))
    pre = add(pre, matmul(matmul(out_agg, h), store[f"{name}.W_out"]))
    out = relu(add(pre, store[f"{name}.b"]))
    if mask is not None:
        out = mul(out, np.asarray(mask, dtype=np.float64)[..., None])
    return out


def init_gru(store, name, d_in, d_h, rng):
    for gate in ("z", "r", "n"):
        store.uniform(f"{name}.W_{gate}", (d_in, d_h), d_h, rng)
        store.uniform(f"{name}.U_{gate}", (d_h, d_h), d_h, rng)
        store.uniform(f"{name}.b_{gate}", (d_h,), d_h, rng)


def gru_cell(h, x, store, name) -> Tensor:
    """z = σ(xW_z + hU_z + b_z), r = σ(xW_r + hU_r + b_r),
    n = tanh(xW_n + r ⊙ (hU_n) + b_n), h' = (1 - z) ⊙ n + z ⊙ h."""
    def gate(g):
        return add(add(matmul(x, store[f"{name}.W_{g}"]), matmul(h, store[f"{name}.U_{g}"])),
                   store[f"{name}.b_{g}"])
    z = sigmoid(gate("z"))
    r = sigmoid(gate("r"))
    cand = tanh(add(add(matmul(x, store[f"{name}.W_n"]),
                        mul(r, matmul(h, store[f"{name}.U_n"]))), store[f"{name}.b_n"]))
    return add(mul(add(neg(z), 1.0), cand), mul(z, h))
