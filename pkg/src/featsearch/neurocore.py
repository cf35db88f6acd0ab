"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only what the sequence model and the Q-networks need: broadcasting
arithmetic, (batched) matmul, a few nonlinearities, reductions, slicing,
stacking, softmax cross-entropy, an LSTM cell and Adam.
"""
from __future__ import annotations

import json
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

CHECKPOINT_VERSION = 1


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_ufunc__ = None  # make numpy defer to the reflected operators

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every leaf's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise InputError("backward() without a gradient needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        owned = set()  # buffers created here, safe to add into in place
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                prev = grads.get(key)
                if prev is None:
                    grads[key] = pg
                elif key in owned:
                    prev += pg
                else:
                    grads[key] = prev + pg
                    owned.add(key)

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Build no graph inside this block (inference only)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _make(data, parents, backward):
    rg = _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents)
    return Tensor(data, rg, parents if rg else (), backward if rg else None)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _check_broadcast(a, b):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise InputError(f"shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    """``a @ b`` for 2-D or batched (leading axes broadcast) operands."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise InputError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), backward)


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    out = _sigmoid(x.data)
    return _make(out, (x,), lambda g: (g * out * (1.0 - out),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sum_(x, axis=None, keepdims=False) -> Tensor:
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(out, (x,), backward)


def mean(x, axis=None) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum_(x, axis), 1.0 / n)


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def getitem(x, key) -> Tensor:
    x = as_tensor(x)

    keys = key if isinstance(key, tuple) else (key,)
    basic = all(k is Ellipsis or k is None or isinstance(k, (slice, int)) for k in keys)

    def backward(g):
        out = np.zeros_like(x.data)
        if basic:
            out[key] = g
        else:
            np.add.at(out, key, g)
        return (out,)

    return _make(x.data[key], (x,), backward)


def take_rows(table, index) -> Tensor:
    """Row lookup ``table[index]`` (an embedding table gather)."""
    table = as_tensor(table)
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, index, g)
        return (out,)

    return _make(table.data[index], (table,), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return _make(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                 lambda g: tuple(np.split(g, cuts, axis=axis)))


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def backward(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def _log_softmax(z, axis=-1):
    zmax = z.max(axis=axis, keepdims=True)
    return z - zmax - np.log(np.exp(z - zmax).sum(axis=axis, keepdims=True))


def softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    out = np.exp(_log_softmax(x.data, axis))

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), backward)


def log_softmax(x, axis=-1) -> Tensor:
    x = as_tensor(x)
    out = _log_softmax(x.data, axis)

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), backward)


def softmax_cross_entropy(logits, target, weight=None) -> Tensor:
    """Weighted sum over rows of ``-log softmax(logits)[target]``.

    ``logits`` is (N, C) or (C,); ``weight`` defaults to 1/N (the mean).
    """
    logits = as_tensor(logits)
    z = logits.data
    squeeze = z.ndim == 1
    if squeeze:
        z = z[None, :]
    target = np.atleast_1d(np.asarray(target, dtype=np.int64))
    if target.shape[0] != z.shape[0]:
        raise InputError(f"{z.shape[0]} rows of logits but {target.shape[0]} targets")
    w = np.full(z.shape[0], 1.0 / z.shape[0]) if weight is None else np.asarray(weight, dtype=np.float64)
    logp = _log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = -(w * logp[rows, target]).sum()

    def backward(g):
        d = np.exp(logp)
        d[rows, target] -= 1.0
        d *= (w * g)[:, None]
        return (d[0] if squeeze else d,)

    return _make(loss, (logits,), backward)


def mse(pred, target) -> Tensor:
    pred = as_tensor(pred)
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=np.float64)
    if pred.shape != target.shape:
        raise InputError(f"mse shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    n = max(diff.size, 1)
    return _make((diff * diff).sum() / n, (pred,), lambda g: (g * 2.0 * diff / n,))


# ---------------------------------------------------------------------------
# layers


def glorot(rng, fan_in, fan_out):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=(fan_in, fan_out))


@dataclass
class LSTMCellParams:
    """Gate weights packed column-wise as [input | forget | output | candidate]."""

    W: Tensor  # (d_in + d, 4d)
    b: Tensor  # (4d,)

    @property
    def hidden(self) -> int:
        return self.b.shape[0] // 4

    @classmethod
    def init(cls, rng, d_in, d):
        lim = 1.0 / np.sqrt(d)
        b = np.zeros(4 * d)
        b[d:2 * d] = 1.0  # forget-gate bias
        return cls(parameter(rng.uniform(-lim, lim, size=(d_in + d, 4 * d))), parameter(b))


def lstm_step(params: LSTMCellParams, x, h_prev, c_prev):
    d = params.hidden
    if as_tensor(h_prev).shape[-1] != d or params.W.shape[0] != as_tensor(x).shape[-1] + d:
        raise InputError("lstm_step dimension mismatch")
    z = concat([x, h_prev], axis=-1) @ params.W + params.b
    i = sigmoid(z[..., 0:d])
    f = sigmoid(z[..., d:2 * d])
    o = sigmoid(z[..., 2 * d:3 * d])
    g = tanh(z[..., 3 * d:4 * d])
    c = f * c_prev + i * g
    h = o * tanh(c)
    return h, c


@dataclass
class Dense:
    W: Tensor
    b: Tensor

    @classmethod
    def init(cls, rng, n_in, n_out):
        return cls(parameter(glorot(rng, n_in, n_out)), parameter(np.zeros(n_out)))

    def __call__(self, x):
        return add(matmul(x, self.W), self.b)


# ---------------------------------------------------------------------------
# optimiser


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def clip_by_global_norm(grads: dict, max_norm: float) -> dict:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > max_norm:
        scale = max_norm / total
        return {k: g * scale for k, g in grads.items()}
    return grads


def adam_step(state: AdamState, params: dict, grads: dict | None = None) -> None:
    """One Adam update in place. ``grads`` defaults to each parameter's ``.grad``."""
    if grads is None:
        grads = {k: p.grad if p.grad is not None else np.zeros_like(p.data) for k, p in params.items()}
    if state.clip_norm is not None:
        grads = clip_by_global_norm(grads, state.clip_norm)
    state.step += 1
    t = state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.data.shape:
            raise InputError(f"gradient for {k} has shape {g.shape}, expected {p.data.shape}")
        m = state.m.get(k)
        v = state.v.get(k)
        m = state.beta1 * m + (1 - state.beta1) * g if m is not None else (1 - state.beta1) * g
        v = state.beta2 * v + (1 - state.beta2) * g * g if v is not None else (1 - state.beta2) * g * g
        state.m[k], state.v[k] = m, v
        mhat = m / (1 - state.beta1 ** t)
        vhat = v / (1 - state.beta2 ** t)
        p.data = p.data - state.lr * mhat / (np.sqrt(vhat) + state.eps)


def zero_grads(params: dict) -> None:
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# checkpoint files


def params_to_dict(params: dict) -> dict:
    return {k: {"shape": list(p.data.shape), "values": p.data.ravel().tolist()} for k, p in params.items()}


def params_from_dict(d: dict) -> dict:
    return {k: parameter(np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])) for k, v in d.items()}


def save_checkpoint(path, params: dict, extra: dict | None = None) -> None:
    payload = {"format_version": CHECKPOINT_VERSION, "params": params_to_dict(params)}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, sort_keys=True))


def load_checkpoint(path) -> tuple[dict, dict]:
    try:
        payload = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise InputError(f"cannot read checkpoint {path}: {e}") from None
    if payload.get("format_version") != CHECKPOINT_VERSION:
        raise InputError(f"unsupported checkpoint version {payload.get('format_version')!r}")
    params = params_from_dict(payload.pop("params"))
    return params, payload
