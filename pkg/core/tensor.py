"""
Dense float tensors with reverse-mode automatic differentiation.

Every differentiable op records a node carrying a global sequence number.
`backward` replays the nodes reachable from the loss in exact reverse
execution order and releases them afterwards.
"""
from __future__ import annotations

import contextlib
import contextvars
import itertools
import logging
from dataclasses import dataclass, field

import numpy as np

from core.exceptions import BackwardError, NonFiniteError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

_grad_enabled = contextvars.ContextVar("grad_enabled", default=True)
_sequence = itertools.count()


@contextlib.contextmanager
def no_grad():
    token = _grad_enabled.set(False)
    try:
        yield
    finally:
        _grad_enabled.reset(token)


def is_grad_enabled():
    return _grad_enabled.get()


class Node:
    __slots__ = ("seq", "op", "inputs", "output", "backward_fn", "released")

    def __init__(self, op, inputs, output, backward_fn):
        self.seq = next(_sequence)
        self.op = op
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn
        self.released = False

    def release(self):
        self.backward_fn = None
        self.inputs = ()
        self.released = True


class Tensor:
    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is None:
            dtype = arr.dtype if arr.dtype in (np.float32, np.float64) else DEFAULT_DTYPE
        self.data = np.ascontiguousarray(arr, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self._grad = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def grad(self):
        if self.requires_grad and self._grad is None:
            self._grad = np.zeros_like(self.data)
        return self._grad

    @grad.setter
    def grad(self, value):
        self._grad = value

    def zero_grad(self):
        if self.requires_grad:
            self._grad = np.zeros_like(self.data)

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {list(self.shape)}")
        return float(self.data.reshape(-1)[0])

    def numpy(self):
        return self.data

    def __repr__(self):
        return f"Tensor(shape={list(self.shape)}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other, like=self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def as_tensor(value, like=None):
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype) if dtype is not None else value, dtype=dtype)


def make_result(op, data, inputs, backward_fn):
    """Wrap an op's output, check finiteness and record a tape node if needed."""
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")
    needs_grad = is_grad_enabled() and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad, dtype=data.dtype)
    if needs_grad:
        out._node = Node(op, tuple(inputs), out, backward_fn)
    return out


def unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: cannot broadcast {list(a.shape)} with {list(b.shape)}") from exc


def add(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast("add", a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(g, b.shape)

    return make_result("add", a.data + b.data, (a, b), backward)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast("sub", a, b)

    def backward(g):
        return unbroadcast(g, a.shape), unbroadcast(-g, b.shape)

    return make_result("sub", a.data - b.data, (a, b), backward)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b, like=a if isinstance(a, Tensor) else None)
    _check_broadcast("mul", a, b)

    def backward(g):
        return unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)

    return make_result("mul", a.data * b.data, (a, b), backward)


def neg(a):
    return make_result("neg", -a.data, (a,), lambda g: (-g,))


def scale(a, factor):
    factor = a.dtype.type(factor)
    return make_result("scale", a.data * factor, (a,), lambda g: (g * factor,))


def sum_all(a):
    def backward(g):
        return (np.broadcast_to(g, a.shape).astype(a.dtype),)

    return make_result("sum", np.asarray(a.data.sum(), dtype=a.dtype), (a,), backward)


def mean_all(a):
    n = a.data.size

    def backward(g):
        return (np.broadcast_to(g / n, a.shape).astype(a.dtype),)

    return make_result("mean", np.asarray(a.data.mean(), dtype=a.dtype), (a,), backward)


def reshape(a, shape):
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {list(a.shape)} as {list(shape)}") from exc
    return make_result("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


@dataclass
class Tape:
    """Ordered record of the differentiable ops that produced a loss."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_loss(cls, loss):
        if loss._node is None:
            raise BackwardError("loss is detached from the tape")
        seen = set()
        stack = [loss._node]
        nodes = []
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            if node.released:
                raise BackwardError(
                    "graph already consumed by a previous backward; re-run the forward pass"
                )
            nodes.append(node)
            stack.extend(t._node for t in node.inputs if t._node is not None)
        nodes.sort(key=lambda n: n.seq)
        return cls(nodes)

    def backward(self, loss):
        for node in self.nodes:
            node.output._grad = None
        loss._grad = np.ones_like(loss.data)
        for node in reversed(self.nodes):
            g_out = node.output._grad
            if g_out is None:
                continue
            grads = node.backward_fn(g_out)
            for tensor, g in zip(node.inputs, grads):
                if g is None or not tensor.requires_grad:
                    continue
                if g.shape != tensor.shape:
                    raise ShapeError(
                        f"{node.op} backward produced {list(g.shape)} for input {list(tensor.shape)}"
                    )
                g = g.astype(tensor.dtype, copy=False)
                tensor._grad = g.copy() if tensor._grad is None else tensor._grad + g
        for node in self.nodes:
            node.release()


def backward(loss):
    if not isinstance(loss, Tensor) or loss.data.size != 1 or loss.ndim > 1:
        raise BackwardError(f"backward needs a scalar loss, got shape {list(getattr(loss, 'shape', []))}")
    if not loss.requires_grad:
        raise BackwardError("loss is detached from the tape")
    tape = Tape.from_loss(loss)
    tape.backward(loss)
    logger.debug("backward replayed %d ops", len(tape.nodes))
