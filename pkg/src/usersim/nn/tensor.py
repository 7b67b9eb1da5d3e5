"""Reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps a float64 array and remembers how it was computed.
Calling :func:`backward` on a scalar tensor walks the recorded graph in
reverse topological order and accumulates ``d loss / d leaf`` into the
``grad`` attribute of every leaf that requires gradients.

Only the handful of operations the simulator's layers need are provided;
broadcasting is limited to adding a bias row to a batch.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, ShapeError

DTYPE = np.float64


def _as_array(value):
    arr = np.asarray(value, dtype=DTYPE)
    return arr


def _unbroadcast(grad, shape):
    # Sum out leading axes and axes that were size 1 in the operand.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array node in a differentiation graph."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _backward=None):
        self.data = _as_array(data)
        self.requires_grad = requires_grad
        self.name = name
        self.grad = np.zeros_like(self.data) if requires_grad and not _parents else None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return not self._parents

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        if self.grad is not None:
            self.grad = np.zeros_like(self.data)

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


def tensor(value, requires_grad=False, name=None):
    return Tensor(value, requires_grad=requires_grad, name=name)


def _wrap(value):
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data, parents, backward):
    parents = tuple(p for p in parents if p.requires_grad)
    if not parents:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _backward=backward)


def _accumulate(t, g):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=DTYPE, copy=True)
    else:
        t.grad = t.grad + g


# elementwise ops ------------------------------------------------------------

def add(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _node(out, (a, b), backward)


def sub(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _node(out, (a, b), backward)


def mul(a, b):
    a, b = _wrap(a), _wrap(b)
    out = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _node(out, (a, b), backward)


def tanh(x):
    x = _wrap(x)
    out = np.tanh(x.data)

    def backward(g):
        _accumulate(x, g * (1.0 - out * out))

    return _node(out, (x,), backward)


def sigmoid(x):
    x = _wrap(x)
    # Split by sign so exp never overflows.
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    e = np.exp(d[~pos])
    out[~pos] = e / (1.0 + e)

    def backward(g):
        _accumulate(x, g * out * (1.0 - out))

    return _node(out, (x,), backward)


def log(x, floor=None):
    """Natural log; with ``floor`` the input is clamped from below first.

    Entries that hit the clamp receive zero gradient.
    """
    x = _wrap(x)
    d = x.data if floor is None else np.maximum(x.data, floor)
    out = np.log(d)

    def backward(g):
        grad = g / d
        if floor is not None:
            grad = np.where(x.data > floor, grad, 0.0)
        _accumulate(x, grad)

    return _node(out, (x,), backward)


def square(x):
    x = _wrap(x)

    def backward(g):
        _accumulate(x, 2.0 * g * x.data)

    return _node(x.data * x.data, (x,), backward)


# linear algebra / reshaping -------------------------------------------------

def matmul(x, w):
    """``x @ w.T`` for a weight stored as ``[out, in]``.

    ``x`` may be a vector ``[in]`` or a batch ``[B, in]``.
    """
    x, w = _wrap(x), _wrap(w)
    if w.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {w.shape}")
    if x.shape[-1] != w.shape[1]:
        raise ShapeError(f"input dim {x.shape[-1]} does not match weight columns {w.shape[1]}")
    out = x.data @ w.data.T

    def backward(g):
        _accumulate(x, g @ w.data)
        if w.requires_grad:
            g2 = np.atleast_2d(g)
            x2 = np.atleast_2d(x.data)
            _accumulate(w, g2.T @ x2)

    return _node(out, (x, w), backward)


def concat(parts, axis=-1):
    parts = [_wrap(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = np.cumsum([p.shape[axis] for p in parts])[:-1]

    def backward(g):
        for p, gp in zip(parts, np.split(g, sizes, axis=axis)):
            _accumulate(p, gp)

    return _node(out, parts, backward)


def getitem(x, index):
    x = _wrap(x)
    out = x.data[index]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        _accumulate(x, full)

    return _node(np.array(out, dtype=DTYPE), (x,), backward)


def take_rows(x, columns):
    """Pick ``x[i, columns[i]]`` for every row ``i`` of a 2-D tensor."""
    x = _wrap(x)
    columns = np.asarray(columns, dtype=np.intp)
    rows = np.arange(x.shape[0])
    return getitem(x, (rows, columns))


# reductions -----------------------------------------------------------------

def sum_(x, axis=None):
    x = _wrap(x)
    out = x.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            grad = np.broadcast_to(g, x.shape)
        else:
            grad = np.broadcast_to(np.expand_dims(g, axis), x.shape)
        _accumulate(x, grad)

    return _node(out, (x,), backward)


def mean(x):
    x = _wrap(x)
    if x.data.size == 0:
        raise ContractError("mean of an empty tensor")
    return mul(sum_(x), 1.0 / x.data.size)


def softmax(logits):
    """Softmax over the last axis, max-shifted for stability."""
    x = _wrap(logits)
    if x.data.size == 0 or x.shape[-1] == 0:
        raise ShapeError("softmax of an empty vector")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(x, out * (g - dot))

    return _node(out, (x,), backward)


# graph traversal ------------------------------------------------------------

def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss):
    """Accumulate gradients of the scalar ``loss`` into every leaf.

    Intermediate nodes hold their gradient only for the duration of the
    sweep; leaves (parameters) keep theirs until explicitly cleared.
    """
    if not isinstance(loss, Tensor):
        raise ContractError("backward() needs a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    order = _topological_order(loss)
    for node in order:
        if not node.is_leaf:
            node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.is_leaf or node.grad is None:
            continue
        node._backward(node.grad)
        node.grad = None
