"""
Dense float64 tensors with a dynamic tape for reverse-mode differentiation.

Every public operation builds its output eagerly with numpy. When any input
requires a gradient the output carries a Node that remembers the operation
name, its inputs and a closure mapping the output gradient to input
gradients. Nodes receive increasing ids at creation, so id order is a valid
topological order of the tape; backward() walks it in reverse.
"""

import itertools
from contextlib import contextmanager

import numpy as np

from constrained_clustering.exceptions import (
    DomainError,
    NonFiniteError,
    NonScalarLossError,
    ShapeMismatchError,
)

_node_ids = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    """Run forward computations without recording them on the tape"""
    global _grad_enabled
    previous = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = previous


class Node:
    __slots__ = ("id", "op", "inputs", "backward_fn")

    def __init__(self, op, inputs, backward_fn):
        self.id = next(_node_ids)
        self.op = op
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_node")
    __array_priority__ = 100  # so ndarray <op> Tensor defers to Tensor

    def __init__(self, data, requires_grad=False):
        self.data = np.array(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def values(self):
        """Row-major flat view of the data"""
        return self.data.reshape(-1)

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self._node is None

    def numpy(self):
        return self.data.copy()

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

    # Operator sugar, all routed through the module-level primitives

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None, keepdims=False):
        return sum_axis(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_axis(self, axis=axis, keepdims=keepdims)

    def relu(self):
        return relu(self)

    def sigmoid(self):
        return sigmoid(self)

    def square(self):
        return square(self)

    def sqrt(self):
        return sqrt(self)

    def log(self):
        return log(self)

    def exp(self):
        return exp(self)

    def clamp_min(self, value):
        return maximum_scalar(self, value)

    def clamp_max(self, value):
        return minimum_scalar(self, value)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def take_rows(self, index):
        return take_rows(self, index)


class Graph:
    """Tape reachable from one output, in topological (creation) order"""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, output):
        seen = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            if tensor._node is None or id(tensor) in seen:
                continue
            seen[id(tensor)] = tensor
            stack.extend(tensor._node.inputs)
        return cls(sorted(seen.values(), key=lambda tensor: tensor._node.id))

    def __len__(self):
        return len(self.nodes)

    def ops(self):
        return [tensor._node.op for tensor in self.nodes]


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _record(op, out_data, inputs, backward_fn):
    if not np.all(np.isfinite(out_data)):
        raise NonFiniteError(op)
    out = Tensor.__new__(Tensor)
    out.data = out_data
    out.grad = None
    out.requires_grad = False
    out._node = None
    if _grad_enabled and any(tensor.requires_grad for tensor in inputs):
        out.requires_grad = True
        out._node = Node(op, inputs, backward_fn)
    return out


def _unbroadcast(grad, shape):
    """Sum a broadcast gradient back down to `shape`"""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatchError(op, a.shape, b.shape) from None


# Elementwise binary


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)

    return _record("add", a.data + b.data, (a, b), backward_fn)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward_fn(grad):
        return _unbroadcast(grad, a.shape), _unbroadcast(-grad, b.shape)

    return _record("sub", a.data - b.data, (a, b), backward_fn)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward_fn(grad):
        return (
            _unbroadcast(grad * b.data, a.shape),
            _unbroadcast(grad * a.data, b.shape),
        )

    return _record("mul", a.data * b.data, (a, b), backward_fn)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise DomainError("div: denominator contains exact zeros")

    def backward_fn(grad):
        return (
            _unbroadcast(grad / b.data, a.shape),
            _unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
        )

    return _record("div", a.data / b.data, (a, b), backward_fn)


def neg(a):
    a = as_tensor(a)
    return _record("neg", -a.data, (a,), lambda grad: (-grad,))


# Linear algebra


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatchError("matmul", a.shape, b.shape)

    def backward_fn(grad):
        return grad @ b.data.T, a.data.T @ grad

    return _record("matmul", a.data @ b.data, (a, b), backward_fn)


# Elementwise unary


def relu(a):
    a = as_tensor(a)
    mask = a.data > 0
    return _record("relu", np.where(mask, a.data, 0.0), (a,), lambda grad: (grad * mask,))


def sigmoid(a):
    a = as_tensor(a)
    out_data = 0.5 * (1.0 + np.tanh(0.5 * a.data))

    def backward_fn(grad):
        return (grad * out_data * (1.0 - out_data),)

    return _record("sigmoid", out_data, (a,), backward_fn)


def square(a):
    a = as_tensor(a)
    return _record("square", a.data * a.data, (a,), lambda grad: (2.0 * grad * a.data,))


def sqrt(a):
    a = as_tensor(a)
    if np.any(a.data < 0):
        raise DomainError("sqrt: input contains negative values")
    out_data = np.sqrt(a.data)

    def backward_fn(grad):
        # subgradient 0 at the origin
        safe = np.where(out_data > 0, out_data, 1.0)
        return (np.where(out_data > 0, grad / (2.0 * safe), 0.0),)

    return _record("sqrt", out_data, (a,), backward_fn)


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise DomainError("log: input must be strictly positive, clamp before calling")
    return _record("log", np.log(a.data), (a,), lambda grad: (grad / a.data,))


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)
    return _record("exp", out_data, (a,), lambda grad: (grad * out_data,))


def maximum_scalar(a, value):
    a = as_tensor(a)
    mask = a.data > value
    return _record(
        "max_scalar", np.where(mask, a.data, float(value)), (a,), lambda grad: (grad * mask,)
    )


def minimum_scalar(a, value):
    a = as_tensor(a)
    mask = a.data < value
    return _record(
        "min_scalar", np.where(mask, a.data, float(value)), (a,), lambda grad: (grad * mask,)
    )


# Reductions and shape


def sum_axis(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = np.sum(a.data, axis=axis, keepdims=keepdims)

    def backward_fn(grad):
        if axis is not None and not keepdims:
            grad = np.expand_dims(grad, axis)
        return (np.broadcast_to(grad, a.shape).copy(),)

    return _record("sum", np.asarray(out_data, dtype=np.float64), (a,), backward_fn)


def mean_axis(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    return sum_axis(a, axis=axis, keepdims=keepdims) / float(count)


def normalize_rows(a):
    """Divide every row by its sum (rows must sum to a non-zero value)"""
    a = as_tensor(a)
    return a / a.sum(axis=1, keepdims=True)


def reshape(a, shape):
    a = as_tensor(a)
    try:
        out_data = a.data.reshape(shape)
    except ValueError:
        raise ShapeMismatchError("reshape", a.shape, shape) from None
    return _record("reshape", out_data, (a,), lambda grad: (grad.reshape(a.shape),))


def take_rows(a, index):
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)

    def backward_fn(grad):
        full = np.zeros_like(a.data)
        np.add.at(full, index, grad)
        return (full,)

    return _record("take_rows", a.data[index], (a,), backward_fn)


def concatenate(tensors, axis=0):
    tensors = [as_tensor(tensor) for tensor in tensors]
    try:
        out_data = np.concatenate([tensor.data for tensor in tensors], axis=axis)
    except ValueError:
        raise ShapeMismatchError(
            "concatenate", tensors[0].shape, tensors[-1].shape
        ) from None
    bounds = np.cumsum([tensor.shape[axis] for tensor in tensors])[:-1]

    def backward_fn(grad):
        return tuple(np.split(grad, bounds, axis=axis))

    return _record("concatenate", out_data, tuple(tensors), backward_fn)


# Reverse pass


def backward(loss):
    """Accumulate d(loss)/d(leaf) into .grad of every requires_grad leaf"""
    if loss.data.size != 1:
        raise NonScalarLossError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    if loss.is_leaf:
        _accumulate(loss, np.ones_like(loss.data))
        return

    graph = Graph.from_output(loss)
    pending = {id(loss): np.ones_like(loss.data)}
    for tensor in reversed(graph.nodes):
        grad = pending.pop(id(tensor), None)
        if grad is None:
            continue
        node = tensor._node
        for parent, parent_grad in zip(node.inputs, node.backward_fn(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                _accumulate(parent, parent_grad)
            elif id(parent) in pending:
                pending[id(parent)] = pending[id(parent)] + parent_grad
            else:
                pending[id(parent)] = parent_grad


def _accumulate(leaf, grad):
    grad = np.asarray(grad, dtype=np.float64).reshape(leaf.shape)
    if leaf.grad is None:
        leaf.grad = grad.copy()
    else:
        leaf.grad = leaf.grad + grad


def zero_grad(tensors):
    for tensor in tensors:
        tensor.zero_grad()
