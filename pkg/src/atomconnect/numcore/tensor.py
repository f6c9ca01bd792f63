"""Dense f64 arrays with a reverse-mode tape.

Operations on :class:`DiffArray` are recorded on the innermost active
:class:`Tape` whenever at least one input requires a gradient. With no tape
active the same code runs as a plain numpy forward pass, which is what the
finite-difference checker relies on.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

_local = threading.local()


def _tape_stack() -> list["Tape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


@dataclass
class Record:
    op: str
    inputs: tuple["DiffArray", ...]
    output: "DiffArray"
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


@dataclass
class Tape:
    """Ordered log of executed primitives; use as a context manager."""

    records: list[Record] = field(default_factory=list)

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        assert stack and stack[-1] is self
        stack.pop()

    def record(self, op, inputs, output, backward) -> None:
        self.records.append(Record(op, tuple(inputs), output, backward))

    def backward(self, root: "DiffArray") -> None:
        """Replay the tape in reverse, accumulating ``grad`` on every leaf."""
        if root.data.size != 1:
            raise ValueError("backward requires a scalar root")
        grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
        for rec in reversed(self.records):
            g = grads.pop(id(rec.output), None)
            if g is None:
                continue
            in_grads = rec.backward(g)
            for inp, gi in zip(rec.inputs, in_grads):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                if inp.is_leaf:
                    # leaves never appear as record outputs; flush immediately
                    inp._accumulate(grads.pop(key))
        if root.is_leaf and id(root) in grads:
            root._accumulate(grads.pop(id(root)))


def _as_data(x) -> np.ndarray:
    if isinstance(x, DiffArray):
        return x.data
    return np.asarray(x, dtype=np.float64)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    ndim_extra = g.ndim - len(shape)
    if ndim_extra > 0:
        g = g.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


class DiffArray:
    """A float64 array that can take part in a recorded computation."""

    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, *, _leaf: bool = True):
        self.data = np.array(data, dtype=np.float64) if _leaf else data
        self.requires_grad = requires_grad
        self.is_leaf = _leaf
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __len__(self) -> int:
        return self.data.shape[0]

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"DiffArray(shape={self.shape}{flag})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "DiffArray":
        return DiffArray(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        g = np.asarray(g, dtype=np.float64).reshape(self.data.shape)
        self.grad = g.copy() if self.grad is None else self.grad + g

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __pow__(self, p: float):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    @property
    def T(self):
        return transpose(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def asdiff(x) -> DiffArray:
    return x if isinstance(x, DiffArray) else DiffArray(x)


def _make(op: str, data: np.ndarray, inputs: Sequence, backward) -> DiffArray:
    """Wrap a primitive's output and record it if any input needs a gradient."""
    tape = active_tape()
    diff_inputs = [x for x in inputs if isinstance(x, DiffArray)]
    needs = tape is not None and any(x.requires_grad for x in diff_inputs)
    out = DiffArray(np.asarray(data, dtype=np.float64), requires_grad=needs, _leaf=False)
    if needs:
        tape.record(op, [asdiff(x) for x in inputs], out, backward)
    return out


def constant(x) -> DiffArray:
    return DiffArray(x)


def zeros(shape) -> DiffArray:
    return DiffArray(np.zeros(shape))


# elementwise arithmetic


def add(a, b) -> DiffArray:
    ad, bd = _as_data(a), _as_data(b)
    return _make("add", ad + bd, [a, b], lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(g, bd.shape)))


def sub(a, b) -> DiffArray:
    ad, bd = _as_data(a), _as_data(b)
    return _make("sub", ad - bd, [a, b], lambda g: (_unbroadcast(g, ad.shape), _unbroadcast(-g, bd.shape)))


def mul(a, b) -> DiffArray:
    ad, bd = _as_data(a), _as_data(b)
    return _make(
        "mul", ad * bd, [a, b],
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
    )


def div(a, b) -> DiffArray:
    ad, bd = _as_data(a), _as_data(b)
    out = ad / bd
    return _make(
        "div", out, [a, b],
        lambda g: (_unbroadcast(g / bd, ad.shape), _unbroadcast(-g * out / bd, bd.shape)),
    )


def power(a: DiffArray, p: float) -> DiffArray:
    ad = _as_data(a)
    return _make("pow", ad**p, [a], lambda g: (g * p * ad ** (p - 1),))


def exp(a: DiffArray) -> DiffArray:
    out = np.exp(_as_data(a))
    return _make("exp", out, [a], lambda g: (g * out,))


def log(a: DiffArray) -> DiffArray:
    ad = _as_data(a)
    return _make("log", np.log(ad), [a], lambda g: (g / ad,))


def sqrt(a: DiffArray) -> DiffArray:
    out = np.sqrt(_as_data(a))
    return _make("sqrt", out, [a], lambda g: (g * 0.5 / out,))


def abs_(a: DiffArray) -> DiffArray:
    ad = _as_data(a)
    return _make("abs", np.abs(ad), [a], lambda g: (g * np.sign(ad),))


def cos(a: DiffArray) -> DiffArray:
    ad = _as_data(a)
    return _make("cos", np.cos(ad), [a], lambda g: (-g * np.sin(ad),))


def tanh(a: DiffArray) -> DiffArray:
    out = np.tanh(_as_data(a))
    return _make("tanh", out, [a], lambda g: (g * (1.0 - out * out),))


def sigmoid(a: DiffArray) -> DiffArray:
    out = 0.5 * (1.0 + np.tanh(0.5 * _as_data(a)))
    return _make("sigmoid", out, [a], lambda g: (g * out * (1.0 - out),))


def silu(a: DiffArray) -> DiffArray:
    ad = _as_data(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * ad))
    return _make("silu", ad * s, [a], lambda g: (g * (s + ad * s * (1.0 - s)),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: DiffArray) -> DiffArray:
    """tanh-approximated GELU."""
    x = _as_data(a)
    inner = _GELU_C * (x + 0.044715 * x**3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner),)

    return _make("gelu", out, [a], back)


# shape manipulation and reductions


def matmul(a, b) -> DiffArray:
    ad, bd = _as_data(a), _as_data(b)
    if ad.ndim < 2 or bd.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def back(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        gb = np.swapaxes(ad, -1, -2) @ g
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _make("matmul", ad @ bd, [a, b], back)


def sum_(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    ad = _as_data(a)
    out = ad.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, ad.shape).copy(),)

    return _make("sum", out, [a], back)


def mean(a: DiffArray, axis=None, keepdims: bool = False) -> DiffArray:
    ad = _as_data(a)
    count = ad.size if axis is None else np.prod([ad.shape[i] for i in np.atleast_1d(axis)])
    return sum_(a, axis, keepdims) * (1.0 / count)


def reshape(a: DiffArray, shape) -> DiffArray:
    ad = _as_data(a)
    return _make("reshape", ad.reshape(shape), [a], lambda g: (g.reshape(ad.shape),))


def transpose(a: DiffArray, axes=None) -> DiffArray:
    ad = _as_data(a)
    if axes is None:
        axes = tuple(reversed(range(ad.ndim)))
    inv = np.argsort(axes)
    return _make("transpose", ad.transpose(axes), [a], lambda g: (g.transpose(inv),))


def swapaxes(a: DiffArray, i: int, j: int) -> DiffArray:
    axes = list(range(a.ndim))
    axes[i], axes[j] = axes[j], axes[i]
    return transpose(a, tuple(axes))


def _has_advanced(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def getitem(a: DiffArray, idx) -> DiffArray:
    ad = _as_data(a)
    advanced = _has_advanced(idx)

    def back(g):
        full = np.zeros_like(ad)
        if advanced:
            np.add.at(full, idx, g)
        else:
            full[idx] += g
        return (full,)

    return _make("getitem", ad[idx], [a], back)


def take_rows(a: DiffArray, index) -> DiffArray:
    """Gather rows along axis 0 with an integer index array (duplicates allowed)."""
    index = np.asarray(index, dtype=np.int64)
    return getitem(a, index)


def segment_sum(a: DiffArray, segment_ids, num_segments: int) -> DiffArray:
    """out[s] = sum of rows i with segment_ids[i] == s."""
    ad = _as_data(a)
    seg = np.asarray(segment_ids, dtype=np.int64)
    out = np.zeros((num_segments,) + ad.shape[1:])
    np.add.at(out, seg, ad)
    return _make("segment_sum", out, [a], lambda g: (g[seg],))


def concat(arrays: Sequence, axis: int = 0) -> DiffArray:
    datas = [_as_data(x) for x in arrays]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make("concat", np.concatenate(datas, axis=axis), list(arrays), back)


def stack(arrays: Sequence, axis: int = 0) -> DiffArray:
    expanded = [reshape(asdiff(x), _as_data(x).shape[:axis] + (1,) + _as_data(x).shape[axis:])
                for x in arrays]
    return concat(expanded, axis=axis)


def pad_rows(a: DiffArray, total: int) -> DiffArray:
    """Zero-pad along axis 0 up to ``total`` rows."""
    ad = _as_data(a)
    extra = total - ad.shape[0]
    if extra < 0:
        raise ValueError("cannot pad to fewer rows")
    if extra == 0:
        return asdiff(a)
    return concat([a, DiffArray(np.zeros((extra,) + ad.shape[1:]))], axis=0)


def dropout(a: DiffArray, p: float, rng: np.random.Generator | None) -> DiffArray:
    """Inverted dropout; the mask is drawn once here and reused by backward."""
    if rng is None or p <= 0.0:
        return asdiff(a)
    keep = (rng.random(_as_data(a).shape) >= p).astype(np.float64) / (1.0 - p)
    return mul(a, keep)
