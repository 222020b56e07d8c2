"""Reverse-mode differentiation over dense numpy arrays.

A :class:`Tensor` wraps an ndarray (2-D, or 3-D with a leading batch axis) and
records the op that produced it. ``backward`` walks the record in reverse
topological order. Leaf gradients accumulate across calls; call
``ParameterStore.zero_grad`` between steps.
"""

from __future__ import annotations

import contextlib
import json
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

_RECORDING = [True]
_BRANCHES: list[list | None] = [None]


@contextlib.contextmanager
def no_grad():
    """Evaluate without building a computation record."""
    prev = _RECORDING[0]
    _RECORDING[0] = False
    try:
        yield
    finally:
        _RECORDING[0] = prev


@contextlib.contextmanager
def record_branches():
    """Collect the branch taken by every piecewise op (relu, minimum, max_,
    abs_) evaluated inside the block, in evaluation order."""
    prev = _BRANCHES[0]
    _BRANCHES[0] = log = []
    try:
        yield log
    finally:
        _BRANCHES[0] = prev


def _branch(choice) -> None:
    if _BRANCHES[0] is not None:
        _BRANCHES[0].append(choice)


@dataclass
class _ArgMax:
    """Branch record of ``max_``: the chosen index plus the candidates, so a
    swap between tied candidates can be told apart from a real hinge."""
    idx: np.ndarray
    values: np.ndarray
    axis: int


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "parents", "backward_fn", "requires_grad", "name")
    __array_priority__ = 100

    def __init__(self, value, parents: Sequence["Tensor"] = (), backward_fn=None,
                 requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value)
        self.grad = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    @property
    def dtype(self):
        return self.value.dtype

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape})"

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(-1)[0]) if self.value.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = None

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

    def __truediv__(self, other):
        return divide(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return slice_(self, idx)

    @property
    def T(self):
        return transpose(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def backward(self, grad=None):
        backward(self, grad)


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x, dtype=dtype)
    return Tensor(arr)


def _needs(*ts: Tensor) -> bool:
    return _RECORDING[0] and any(t.requires_grad for t in ts)


def _make(value, parents, fn) -> Tensor:
    if _needs(*parents):
        return Tensor(value, parents, fn, requires_grad=True)
    return Tensor(value)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def _coerce(a, b):
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


# ---- elementwise binary -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("add", a, b)
    out = a.value + b.value

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)
    return _make(out, (a, b), fn)


def sub(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("sub", a, b)
    out = a.value - b.value

    def fn(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)
    return _make(out, (a, b), fn)


def mul(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("mul", a, b)
    out = a.value * b.value

    def fn(g):
        return _unbroadcast(g * b.value, a.shape), _unbroadcast(g * a.value, b.shape)
    return _make(out, (a, b), fn)


def divide(a, b) -> Tensor:
    a, b = _coerce(a, b)
    _check_broadcast("divide", a, b)
    out = a.value / b.value

    def fn(g):
        ga = g / b.value
        return _unbroadcast(ga, a.shape), _unbroadcast(-ga * out, b.shape)
    return _make(out, (a, b), fn)


def minimum(a, b) -> Tensor:
    """Elementwise ``min(a, b)``, equal to ``a - relu(a - b)``.

    On ties the gradient goes to ``a``.
    """
    a, b = _coerce(a, b)
    _check_broadcast("minimum", a, b)
    out = np.minimum(a.value, b.value)
    to_a = a.value <= b.value
    _branch(to_a)

    def fn(g):
        return _unbroadcast(np.where(to_a, g, 0.0), a.shape), _unbroadcast(np.where(to_a, 0.0, g), b.shape)
    return _make(out, (a, b), fn)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a, b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = a.value @ b.value

    def fn(g):
        ga = g @ np.swapaxes(b.value, -1, -2)
        gb = np.swapaxes(a.value, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return _make(out, (a, b), fn)


# ---- elementwise unary --------------------------------------------------

def _unary(a: Tensor, out: np.ndarray, dfn: Callable[[np.ndarray], np.ndarray]) -> Tensor:
    return _make(out, (a,), lambda g: (g * dfn(out),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    _branch(mask)
    return _make(np.where(mask, a.value, 0.0).astype(a.dtype), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    # split by sign to avoid overflow in exp
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(a.dtype)
    return _unary(a, out, lambda o: o * (1.0 - o))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _unary(a, out, lambda o: 1.0 - o * o)


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.value)
    return _unary(a, out, lambda o: o)


def log(a: Tensor) -> Tensor:
    x = a.value
    return _make(np.log(x), (a,), lambda g: (g / x,))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (g * 0.5 / out,))


def abs_(a: Tensor) -> Tensor:
    s = np.sign(a.value)
    _branch(s)
    return _make(np.abs(a.value), (a,), lambda g: (g * s,))


# ---- reductions ---------------------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.value.sum(axis=axis, keepdims=keepdims)

    def fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _make(out, (a,), fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / float(n))


def max_(a: Tensor, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Max along one axis; gradient routed to the first maximiser."""
    idx = np.argmax(a.value, axis=axis)
    if _BRANCHES[0] is not None:
        _branch(_ArgMax(idx, a.value.copy(), axis))
    out = np.take_along_axis(a.value, np.expand_dims(idx, axis), axis)
    if not keepdims:
        out = np.squeeze(out, axis)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        grad = np.zeros_like(a.value)
        np.put_along_axis(grad, np.expand_dims(idx, axis), g, axis)
        return (grad,)
    return _make(out, (a,), fn)


def logsumexp(a: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    m = a.value.max(axis=axis, keepdims=True)
    e = np.exp(a.value - m)
    s = e.sum(axis=axis, keepdims=True)
    out = np.log(s) + m
    soft = e / s
    if not keepdims:
        out = np.squeeze(out, axis)

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (g * soft,)
    return _make(out, (a,), fn)


def log_normalize(a: Tensor, axes: Sequence[int]) -> Tensor:
    """``exp`` of ``a`` after subtracting its log-sum-exp along each axis of
    ``axes`` in turn. One graph node; the backward pass replays the stored
    softmaxes, ``g <- g - p * sum(g, axis)``.
    """
    L = a.value
    softs = []
    for axis in axes:
        m = L.max(axis=axis, keepdims=True)
        e = np.exp(L - m)
        s = e.sum(axis=axis, keepdims=True)
        L = L - m - np.log(s)
        softs.append((axis, e / s))
    out = softs[-1][1] if softs else np.exp(L)

    def fn(g):
        g = g * out
        for axis, p in reversed(softs):
            g = g - p * g.sum(axis=axis, keepdims=True)
        return (g,)
    return _make(out, (a,), fn)


def alternate_normalize(a: Tensor, axes: Sequence[int], tiny: float | None = None) -> Tensor:
    """``exp(a - max a)`` (max per trailing matrix) divided by its sum along each
    of ``axes`` in turn.

    If any intermediate sum falls below ``tiny`` the linear-domain pass would
    lose entries to underflow, and the log-domain :func:`log_normalize` runs
    instead. The default threshold is ``finfo(dtype).tiny ** 0.8`` (about
    1e-246 in double and 1e-31 in single precision).
    """
    x = a.value
    if tiny is None:
        tiny = float(np.finfo(x.dtype).tiny) ** 0.8
    S0 = np.exp(x - x.max(axis=(-2, -1), keepdims=True))
    if not _needs(a):
        # forward only: divide in place, same values as the recorded path
        S = S0
        for axis in axes:
            s = S.sum(axis=axis, keepdims=True)
            if s.min() < tiny:
                return log_normalize(a, axes)
            np.divide(S, s, out=S)
        return Tensor(S)
    S = S0
    steps = []
    for axis in axes:
        s = S.sum(axis=axis, keepdims=True)
        if s.min() < tiny:
            return log_normalize(a, axes)
        S = S / s
        steps.append((axis, s, S))

    # the output is invariant to the max shift, so it contributes no gradient
    def fn(g):
        for axis, s, y in reversed(steps):
            g = (g - (g * y).sum(axis=axis, keepdims=True)) / s
        return (g * S0,)
    return _make(S, (a,), fn)


def row_sum(a: Tensor) -> Tensor:
    return sum_(a, axis=-1, keepdims=True)


def col_l1(a: Tensor) -> Tensor:
    """L1 norm of every column (reduces axis -2)."""
    return sum_(abs_(a), axis=-2)


def row_normalize(a: Tensor) -> Tensor:
    return divide(a, sum_(a, axis=-1, keepdims=True))


def col_normalize(a: Tensor) -> Tensor:
    return divide(a, sum_(a, axis=-2, keepdims=True))


# ---- shape ops ----------------------------------------------------------

def transpose(a: Tensor) -> Tensor:
    return _make(np.swapaxes(a.value, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a: Tensor, shape) -> Tensor:
    return _make(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def slice_(a: Tensor, idx) -> Tensor:
    out = a.value[idx]
    parts = idx if isinstance(idx, tuple) else (idx,)
    basic = all(p is Ellipsis or p is None or isinstance(p, (slice, int, np.integer)) for p in parts)

    def fn(g):
        grad = np.zeros_like(a.value)
        if basic:
            grad[idx] += g
        else:
            np.add.at(grad, idx, g)
        return (grad,)
    return _make(out, (a,), fn)


def take(a: Tensor, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis``; repeated indices accumulate gradient."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.take(a.value, indices, axis=axis)

    def fn(g):
        grad = np.zeros_like(a.value)
        moved = np.moveaxis(grad, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (grad,)
    return _make(out, (a,), fn)


def scatter_rows(a: Tensor, indices, num_rows: int) -> Tensor:
    """Sum rows of ``a`` into a zero matrix of ``num_rows`` rows at ``indices``."""
    indices = np.asarray(indices, dtype=np.int64)
    out = np.zeros((num_rows,) + a.shape[1:], dtype=a.dtype)
    np.add.at(out, indices, a.value)
    return _make(out, (a,), lambda g: (g[indices],))


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.value for t in tensors], axis=axis)
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def fn(g):
        return tuple(np.split(g, sizes, axis=axis))
    return _make(out, tuple(tensors), fn)


# ---- backward -----------------------------------------------------------

def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor, grad=None) -> None:
    """Populate ``.grad`` on every leaf reachable from the scalar ``root``.

    Leaf gradients are added to whatever is already stored.
    """
    if root.value.size != 1:
        raise ShapeError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.value) if grad is None
                                     else np.asarray(grad, dtype=root.dtype).reshape(root.shape)}
    for node in reversed(_topo(root)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.backward_fn(g)):
            if not parent.requires_grad or pg is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


# ---- parameters ---------------------------------------------------------

PARAM_GROUPS = ("theta", "phi", "alpha", "beta", "w")
CHECKPOINT_VERSION = 1


class ParameterStore:
    """Named parameter groups: theta (encoder), phi (alignment), alpha (edge
    scorer), beta (noise filter) and w (non-negative mixing weights)."""

    def __init__(self, seed: int = 0, dtype=np.float64):
        self.groups: dict[str, OrderedDict[str, Tensor]] = {g: OrderedDict() for g in PARAM_GROUPS}
        self.dtype = np.dtype(dtype)
        self.rng = np.random.default_rng(seed)
        self.seed = seed
        self.opt_state: dict = {}

    def add(self, group: str, name: str, value) -> Tensor:
        if group not in self.groups:
            raise KeyError(f"unknown parameter group {group!r}")
        t = Tensor(np.array(value, dtype=self.dtype), requires_grad=True, name=f"{group}/{name}")
        self.groups[group][name] = t
        return t

    def uniform(self, group: str, name: str, shape, bound: float) -> Tensor:
        return self.add(group, name, self.rng.uniform(-bound, bound, size=shape))

    def get(self, group: str, name: str) -> Tensor:
        return self.groups[group][name]

    def __getitem__(self, key: str) -> Tensor:
        group, name = key.split("/", 1)
        return self.groups[group][name]

    def items(self) -> Iterable[tuple[str, Tensor]]:
        for g in PARAM_GROUPS:
            for n, t in self.groups[g].items():
                yield f"{g}/{n}", t

    def params(self, groups: Iterable[str] | None = None) -> list[Tensor]:
        groups = PARAM_GROUPS if groups is None else tuple(groups)
        return [t for g in groups for t in self.groups[g].values()]

    def zero_grad(self):
        for _, t in self.items():
            t.grad = None

    def project(self):
        for t in self.groups["w"].values():
            np.maximum(t.value, 0.0, out=t.value)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.value.copy() for k, t in self.items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        for k, t in self.items():
            if k not in state:
                raise KeyError(f"checkpoint lacks parameter {k}")
            v = np.asarray(state[k])
            if v.shape != t.shape:
                raise ShapeError(f"{k}: checkpoint shape {v.shape} != model shape {t.shape}")
            t.value = v.astype(self.dtype)

    def astype(self, dtype):
        self.dtype = np.dtype(dtype)
        for _, t in self.items():
            t.value = t.value.astype(self.dtype)
        return self


def adam_step(store: ParameterStore, lr: float = 1e-3, weight_decay: float = 5e-4,
              betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
    """One Adam update with L2 weight decay folded into the gradient.

    Moment estimates live in ``store.opt_state``. Group ``w`` is clamped to be
    non-negative afterwards.
    """
    st = store.opt_state
    st["t"] = st.get("t", 0) + 1
    t = st["t"]
    b1, b2 = betas
    m, v = st.setdefault("m", {}), st.setdefault("v", {})
    for key, p in store.items():
        if p.grad is None:
            g = np.zeros_like(p.value)
        else:
            g = p.grad.astype(p.dtype)
        if weight_decay:
            g = g + weight_decay * p.value
        m[key] = b1 * m.get(key, 0.0) + (1 - b1) * g
        v[key] = b2 * v.get(key, 0.0) + (1 - b2) * g * g
        m_hat = m[key] / (1 - b1 ** t)
        v_hat = v[key] / (1 - b2 ** t)
        p.value = (p.value - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    store.project()


@dataclass
class GradCheckReport:
    max_rel_err: float = 0.0
    checked: int = 0
    straddled: int = 0     # stencils that cross a relu/min/max/abs hinge


def _same_branch(a, b, rtol: float = 1e-12) -> bool:
    if not isinstance(a, _ArgMax):
        return np.array_equal(a, b)
    if np.array_equal(a.idx, b.idx):
        return True
    # a new maximiser that was tied with the old one at the base point is the
    # same function (e.g. mirror entries of a symmetric matrix)
    old = np.take_along_axis(a.values, np.expand_dims(a.idx, a.axis), a.axis)
    new = np.take_along_axis(a.values, np.expand_dims(b.idx, a.axis), a.axis)
    return bool(np.all(np.abs(old - new) <= rtol * np.maximum(np.abs(old), 1.0)))


def _same_branches(x: list, y: list) -> bool:
    return len(x) == len(y) and all(_same_branch(a, b) for a, b in zip(x, y))


def grad_check_report(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
                      floor: float | None = None, max_entries: int | None = None, seed: int = 0,
                      skip_hinges: bool = False) -> GradCheckReport:
    """Compare backprop against central differences entry by entry.

    The error per entry is ``|a - n| / max(|a|, |n|, floor)``. The default
    floor is ``1e-6 * max(1, |f|)``: central differences of a function of size
    ``|f|`` carry roundoff near ``1e-11 * |f|`` at ``eps = 1e-5``, so
    exactly-zero gradients must not be scored against a fixed absolute floor.
    With ``max_entries`` only that many randomly chosen coordinates of each
    input are probed.

    With ``skip_hinges`` an entry is scored only when every piecewise op takes
    the same branch at ``x - eps``, ``x`` and ``x + eps``; otherwise the
    function is not differentiable along the stencil and the entry is counted
    in ``straddled`` instead.
    """
    rng = np.random.default_rng(seed)
    for t in inputs:
        t.grad = None
    with record_branches() as base:
        out = f()
    if floor is None:
        floor = 1e-6 * max(1.0, float(np.abs(out.value).sum()))
    backward(out)
    analytic = [np.zeros_like(t.value) if t.grad is None else t.grad.copy() for t in inputs]
    report = GradCheckReport()
    with no_grad():
        for t, a in zip(inputs, analytic):
            flat = t.value.reshape(-1)
            idx = range(flat.size)
            if max_entries is not None and flat.size > max_entries:
                idx = sorted(rng.choice(flat.size, size=max_entries, replace=False).tolist())
            for i in idx:
                orig = flat[i]
                flat[i] = orig + eps
                with record_branches() as up:
                    fp = float(f().value.sum())
                flat[i] = orig - eps
                with record_branches() as down:
                    fm = float(f().value.sum())
                flat[i] = orig
                if skip_hinges and not (_same_branches(base, up) and _same_branches(base, down)):
                    report.straddled += 1
                    continue
                num = (fp - fm) / (2 * eps)
                ana = float(a.reshape(-1)[i])
                err = abs(ana - num) / max(abs(ana), abs(num), floor)
                report.max_rel_err = max(report.max_rel_err, err)
                report.checked += 1
    for t in inputs:
        t.grad = None
    return report


def grad_check(f: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-5,
               floor: float | None = None, max_entries: int | None = None, seed: int = 0,
               skip_hinges: bool = False) -> float:
    """Max relative error between backprop and central differences; see
    :func:`grad_check_report`."""
    return grad_check_report(f, inputs, eps, floor, max_entries, seed, skip_hinges).max_rel_err


def save_checkpoint(store: ParameterStore, path: str | Path, meta: dict | None = None) -> None:
    """Write ``group/name -> shape + row-major values`` as versioned JSON.

    Floats go through ``repr`` so the round trip is exact.
    """
    params = {k: {"shape": list(v.shape), "values": [float(x) for x in v.reshape(-1).astype(np.float64)]}
              for k, v in store.state_dict().items()}
    doc = {"version": CHECKPOINT_VERSION, "meta": meta or {}, "params": params}
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
    state = {k: np.array(v["values"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()}
    return state, doc.get("meta", {})
