"""Small dense 2-D tensor engine with a reverse-mode gradient tape.

Every tensor is a 2-D float64 array.  Operations executed while a ``Tape`` is
active and that touch a tensor with ``requires_grad`` are recorded in order;
``Tape.backward`` walks the records in reverse, which is a valid reverse
topological order because records are appended as they are created.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import erf

from .errors import ContractError, ShapeError

LOG_EPS = 1e-7
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    __slots__ = ("value", "requires_grad", "name")

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v[:, None]
        elif v.ndim != 2:
            raise ShapeError(f"tensors are 2-D, got shape {v.shape}")
        self.value = v
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() on tensor of shape {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tag = f" {self.name!r}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, requires_grad={self.requires_grad})"

    __array_priority__ = 100

    def __add__(self, o):
        return add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, o):
        return matmul(self, o)


@dataclass
class _Record:
    out: Tensor
    inputs: tuple
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Ordered log of differentiable operations.

    Usage::

        with Tape() as tape:
            loss = f(params)
        grads = tape.gradients(loss, params)
    """

    _stack: list["Tape"] = []

    def __init__(self):
        self.records: list[_Record] = []

    def __enter__(self):
        Tape._stack.append(self)
        return self

    def __exit__(self, *exc):
        Tape._stack.pop()
        return False

    @classmethod
    def current(cls) -> "Tape | None":
        return cls._stack[-1] if cls._stack else None

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Return adjoints keyed by ``id(tensor)`` for every tensor reached."""
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        adj: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for rec in reversed(self.records):
            g = adj.get(id(rec.out))
            if g is None:
                continue
            for inp, gi in zip(rec.inputs, rec.backward(g)):
                if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in adj:
                    adj[key] = adj[key] + gi
                else:
                    adj[key] = gi
        return adj

    def gradients(self, loss: Tensor, params) -> dict:
        """Gradients for ``params`` (a ParameterStore, dict name->Tensor or list).

        Parameters that the loss does not depend on get a zero gradient.
        """
        adj = self.backward(loss)
        if isinstance(params, ParameterStore):
            items = params.params.items()
        elif isinstance(params, dict):
            items = params.items()
        else:
            items = enumerate(params)
        return {k: adj.get(id(t), np.zeros_like(t.value)) for k, t in items}


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out_value: np.ndarray, inputs: tuple, backward) -> Tensor:
    tape = Tape.current()
    needs = any(isinstance(t, Tensor) and t.requires_grad for t in inputs)
    out = Tensor(out_value, requires_grad=needs and tape is not None)
    if out.requires_grad:
        tape.records.append(_Record(out, inputs, backward))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = g.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor) -> tuple[int, int]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b)
    sa, sb = a.shape, b.shape
    return _record(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b)
    sa, sb = a.shape, b.shape
    return _record(a.value - b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    _check_broadcast(a, b)
    av, bv = a.value, b.value
    return _record(
        av * bv,
        (a, b),
        lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)),
    )


def scale(a: Tensor, c: float) -> Tensor:
    return _record(a.value * c, (a,), lambda g: (g * c,))


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _record(a.value + c, (a,), lambda g: (g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _record(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def spmm(M: sp.spmatrix, x: Tensor) -> Tensor:
    """Sparse constant operator applied to a tensor (no gradient for M)."""
    x = _wrap(x)
    if M.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse {M.shape} @ {x.shape}")
    return _record(np.asarray(M @ x.value), (x,), lambda g: (np.asarray(transpose_of(M) @ g),))


def transpose_of(M: sp.spmatrix) -> sp.csr_matrix:
    """CSR transpose, cached on the matrix object."""
    Mt = getattr(M, "_cached_T", None)
    if Mt is None:
        Mt = M.T.tocsr()
        M._cached_T = Mt
    return Mt


def concat(ts: Sequence[Tensor], axis: int = 1) -> Tensor:
    ts = [_wrap(t) for t in ts]
    other = 1 - axis
    if len({t.shape[other] for t in ts}) > 1:
        raise ShapeError(f"concat along axis {axis}: mismatched shapes {[t.shape for t in ts]}")
    sizes = [t.shape[axis] for t in ts]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return _record(np.concatenate([t.value for t in ts], axis=axis), tuple(ts), back)


def columns(x: Tensor, start: int, stop: int) -> Tensor:
    shape = x.shape

    def back(g):
        out = np.zeros(shape)
        out[:, start:stop] = g
        return (out,)

    return _record(x.value[:, start:stop], (x,), back)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(x: Tensor) -> Tensor:
    v = x.value
    s = np.empty_like(v)
    pos = v >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    s[~pos] = e / (1.0 + e)
    return _record(s, (x,), lambda g: (g * s * (1.0 - s),))


def softmax(x: Tensor, axis: int = 1) -> Tensor:
    v = x.value
    z = np.exp(v - v.max(axis=axis, keepdims=True))
    s = z / z.sum(axis=axis, keepdims=True)
    return _record(s, (x,), lambda g: (s * (g - (g * s).sum(axis=axis, keepdims=True)),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    v = x.value
    neg = alpha * np.expm1(np.minimum(v, 0.0))
    out = np.where(v > 0, v, neg)
    slope = np.where(v > 0, 1.0, neg + alpha)
    return _record(out, (x,), lambda g: (g * slope,))


def gelu(x: Tensor) -> Tensor:
    v = x.value
    cdf = 0.5 * (1.0 + erf(v / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * v * v)
    return _record(v * cdf, (x,), lambda g: (g * (cdf + v * pdf),))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    v = x.value
    d = np.where(v > 0, 1.0, slope)
    return _record(v * d, (x,), lambda g: (g * d,))


def relu(x: Tensor) -> Tensor:
    return leaky_relu(x, 0.0)


def log(x: Tensor) -> Tensor:
    v = x.value
    return _record(np.log(v), (x,), lambda g: (g / v,))


def exp(x: Tensor) -> Tensor:
    e = np.exp(x.value)
    return _record(e, (x,), lambda g: (g * e,))


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    v = x.value
    inside = (v >= lo) & (v <= hi)
    return _record(np.clip(v, lo, hi), (x,), lambda g: (g * inside,))


def abs_(x: Tensor) -> Tensor:
    sgn = np.sign(x.value)
    return _record(np.abs(x.value), (x,), lambda g: (g * sgn,))


# ---------------------------------------------------------------------------
# reductions and normalizations


def sum_(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    if axis is None:
        return _record(np.array([[x.value.sum()]]), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return _record(x.value.sum(axis=axis, keepdims=True), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))


def mean(x: Tensor, axis: int | None = None) -> Tensor:
    count = x.value.size if axis is None else x.shape[axis]
    return scale(sum_(x, axis), 1.0 / count)


def l1_norm(x: Tensor) -> Tensor:
    return sum_(abs_(x))


def l2_normalize_rows(x: Tensor, eps: float = 1e-12) -> Tensor:
    v = x.value
    norm = np.sqrt((v * v).sum(axis=1, keepdims=True))
    safe = np.maximum(norm, eps)
    y = v / safe
    active = norm > eps

    def back(g):
        proj = (g * y).sum(axis=1, keepdims=True)
        return (np.where(active, (g - y * proj) / safe, g / safe),)

    return _record(y, (x,), back)


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, state: BatchNormState, train: bool) -> Tensor:
    """Per-feature normalization; batch statistics in train mode, running
    statistics (a fixed affine map) in eval mode."""
    v = x.value
    if x.shape[1] != gamma.shape[1]:
        raise ShapeError(f"batch_norm width {x.shape[1]} vs {gamma.shape[1]}")
    if not train or v.shape[0] < 2:
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (v - state.running_mean) * inv
        gv, bv = gamma.value, beta.value

        def back_eval(g):
            return (g * gv * inv, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True))

        return _record(xhat * gv + bv, (x, gamma, beta), back_eval)
    n = v.shape[0]
    mu = v.mean(axis=0, keepdims=True)
    xc = v - mu
    var = (xc * xc).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = xc * inv
    m = state.momentum
    state.running_mean = (1 - m) * state.running_mean + m * mu
    state.running_var = (1 - m) * state.running_var + m * var * n / (n - 1)
    gv, bv = gamma.value, beta.value

    def back(g):
        gx = g * gv
        dx = inv * (gx - gx.mean(axis=0, keepdims=True) - xhat * (gx * xhat).mean(axis=0, keepdims=True))
        return (dx, (g * xhat).sum(axis=0, keepdims=True), g.sum(axis=0, keepdims=True))

    return _record(xhat * gv + bv, (x, gamma, beta), back)


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    if not train or rate <= 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in train mode needs a random generator")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _record(x.value * keep, (x,), lambda g: (g * keep,))


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "elu": elu,
    "gelu": gelu,
    "relu": relu,
    "sigmoid": sigmoid,
    "identity": lambda t: t,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    """Look up an activation; ``lrelu:<slope>`` selects a leaky ReLU."""
    key = name.lower()
    if key.startswith("lrelu"):
        slope = float(key.split(":", 1)[1]) if ":" in key else 0.01
        return lambda t: leaky_relu(t, slope)
    if key not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}")
    return ACTIVATIONS[key]


# ---------------------------------------------------------------------------
# parameters and optimization


@dataclass
class ParameterStore:
    params: dict[str, Tensor] = field(default_factory=dict)
    buffers: dict[str, BatchNormState] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(value, requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.value)
        self.v[name] = np.zeros_like(t.value)
        return t

    def add_buffer(self, name: str, width: int) -> BatchNormState:
        st = BatchNormState(np.zeros((1, width)), np.ones((1, width)))
        self.buffers[name] = st
        return st

    def num_parameters(self) -> int:
        return int(sum(t.value.size for t in self.params.values()))

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for k, t in self.params.items():
            out[f"param/{k}"] = t.value
            out[f"adam_m/{k}"] = self.m[k]
            out[f"adam_v/{k}"] = self.v[k]
        for k, st in self.buffers.items():
            out[f"bn_mean/{k}"] = st.running_mean
            out[f"bn_var/{k}"] = st.running_var
        out["adam_step"] = np.array([self.step])
        return out

    def load_arrays(self, arrays) -> None:
        for k, t in self.params.items():
            val = np.asarray(arrays[f"param/{k}"])
            if val.shape != t.value.shape:
                raise ShapeError(f"checkpoint shape for {k}: {val.shape} vs {t.value.shape}")
            t.value = val.copy()
            self.m[k] = np.asarray(arrays[f"adam_m/{k}"]).copy()
            self.v[k] = np.asarray(arrays[f"adam_v/{k}"]).copy()
        for k, st in self.buffers.items():
            st.running_mean = np.asarray(arrays[f"bn_mean/{k}"]).copy()
            st.running_var = np.asarray(arrays[f"bn_var/{k}"]).copy()
        self.step = int(np.asarray(arrays["adam_step"])[0])


def adam_step(
    store: ParameterStore,
    grads: dict[str, np.ndarray],
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParameterStore:
    """In-place bias-corrected Adam update; returns the store for chaining."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    b1, b2 = betas
    store.step += 1
    t = store.step
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for name, p in store.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.value.shape:
            raise ShapeError(f"gradient shape for {name}: {g.shape} vs {p.value.shape}")
        store.m[name] = b1 * store.m[name] + (1 - b1) * g
        store.v[name] = b2 * store.v[name] + (1 - b2) * g * g
        mhat = store.m[name] / c1
        vhat = store.v[name] / c2
        p.value = p.value - lr * mhat / (np.sqrt(vhat) + eps)
    return store


def cosine_lr(epoch: int, total: int, warmup: int, base: float) -> float:
    """Linear warm-up over ``warmup`` epochs, then half-cosine decay to zero."""
    if warmup >= total:
        raise ValueError(f"warmup ({warmup}) must be shorter than training ({total})")
    if not 0 <= epoch < total:
        raise ValueError(f"epoch {epoch} outside [0, {total})")
    if epoch < warmup:
        return base * (epoch + 1) / warmup
    t = epoch - warmup
    span = total - warmup
    return 0.5 * base * (1.0 + math.cos(math.pi * t / span))


def uniform_init(rng: np.random.Generator, fan_in: int, shape: tuple[int, int]) -> np.ndarray:
    bound = 1.0 / math.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
