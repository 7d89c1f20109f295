"""Reverse-mode automatic differentiation over numpy arrays.

A dynamically recorded tape: every operation on a `Tensor` whose inputs
require gradients stores closures that map the output adjoint to input
adjoints. `backward(loss)` walks the recorded graph in reverse
topological order and accumulates (+=) gradients into leaf tensors.

Interior nodes never keep gradients; only leaves created with
``requires_grad=True`` do, so calling backward twice without zeroing
doubles the leaf gradients and nothing else. Operations on tensors that
do not require gradients skip graph recording entirely, which makes the
same code path cheap at inference time.

Arrays keep whatever float dtype they were created with; training code
uses float32, gradient-check tests use float64.
"""

from __future__ import annotations

import numpy as np


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the tape bookkeeping needed for backward()."""

    __slots__ = ("data", "grad", "requires_grad", "_parents")

    def __init__(self, data, requires_grad: bool = False, _parents=()):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or bool(_parents)
        self._parents = _parents

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.item())

    # -- arithmetic ----------------------------------------------------

    def __add__(self, other):
        other = _coerce_like(other, self)
        data = self.data + other.data
        return _record(data, "add", (self, other), lambda g: (
            _unbroadcast(g, self.data.shape),
            _unbroadcast(g, other.data.shape),
        ))

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce_like(other, self)
        data = self.data - other.data
        return _record(data, "sub", (self, other), lambda g: (
            _unbroadcast(g, self.data.shape),
            _unbroadcast(-g, other.data.shape),
        ))

    def __rsub__(self, other):
        return _coerce_like(other, self) - self

    def __mul__(self, other):
        other = _coerce_like(other, self)
        data = self.data * other.data
        return _record(data, "mul", (self, other), lambda g: (
            _unbroadcast(g * other.data, self.data.shape),
            _unbroadcast(g * self.data, other.data.shape),
        ))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce_like(other, self)
        data = self.data / other.data
        return _record(data, "div", (self, other), lambda g: (
            _unbroadcast(g / other.data, self.data.shape),
            _unbroadcast(-g * self.data / (other.data * other.data), other.data.shape),
        ))

    def __rtruediv__(self, other):
        return _coerce_like(other, self) / self

    def __neg__(self):
        return _record(-self.data, "neg", (self,), lambda g: (-g,))

    def __matmul__(self, other):
        other = _coerce(other)
        if self.data.ndim != 2 or other.data.ndim != 2 or self.data.shape[1] != other.data.shape[0]:
            raise ValueError(f"matmul: incompatible shapes {self.data.shape} and {other.data.shape}")
        data = self.data @ other.data
        return _record(data, "matmul", (self, other), lambda g: (
            g @ other.data.T,
            self.data.T @ g,
        ))

    def __getitem__(self, key):
        data = self.data[key]

        def grab(g):
            full = np.zeros_like(self.data)
            np.add.at(full, key, g)
            return (full,)

        return _record(data, "getitem", (self,), grab)

    # -- shape ops -----------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        data = self.data.reshape(shape)
        return _record(data, "reshape", (self,), lambda g: (g.reshape(old),))

    # -- elementwise ---------------------------------------------------

    def exp(self):
        data = np.exp(self.data)
        return _record(data, "exp", (self,), lambda g: (g * data,))

    def log(self):
        data = np.log(self.data)
        return _record(data, "log", (self,), lambda g: (g / self.data,))

    def log1p(self):
        data = np.log1p(self.data)
        return _record(data, "log1p", (self,), lambda g: (g / (1.0 + self.data),))

    def sqrt(self):
        data = np.sqrt(self.data)
        return _record(data, "sqrt", (self,), lambda g: (g * 0.5 / data,))

    def sigmoid(self):
        data = _sigmoid(self.data)
        return _record(data, "sigmoid", (self,), lambda g: (g * data * (1.0 - data),))

    def softplus(self):
        data = _softplus(self.data)
        return _record(data, "softplus", (self,), lambda g: (g * _sigmoid(self.data),))

    def relu(self):
        data = np.maximum(self.data, 0.0)
        return _record(data, "relu", (self,), lambda g: (g * (self.data > 0),))

    def leaky_relu(self, slope: float = 0.2):
        data = np.where(self.data > 0, self.data, slope * self.data)
        return _record(data, "leaky_relu", (self,),
                       lambda g: (g * np.where(self.data > 0, 1.0, slope),))

    def clip(self, lo=None, hi=None):
        """Clamp values; gradient is zero outside [lo, hi]."""
        data = np.clip(self.data, lo, hi)
        inside = np.ones_like(self.data, dtype=bool)
        if lo is not None:
            inside &= self.data >= lo
        if hi is not None:
            inside &= self.data <= hi
        return _record(data, "clip", (self,), lambda g: (g * inside,))

    # -- reductions ----------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def grab(g):
            g = np.asarray(g)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, self.data.shape).copy(),)

        return _record(data, "sum", (self,), grab)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def prod(self, axis=None, keepdims: bool = False):
        """Product reduction. Gradient uses out/x; undefined at exact zeros."""
        data = self.data.prod(axis=axis, keepdims=keepdims)

        def grab(g):
            g = np.asarray(g)
            d = data
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
                d = np.expand_dims(d, axis)
            return (g * d / self.data,)

        return _record(data, "prod", (self,), grab)

    def softmax(self, axis: int = -1):
        shifted = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=axis, keepdims=True)

        def grab(g):
            inner = (g * data).sum(axis=axis, keepdims=True)
            return (data * (g - inner),)

        return _record(data, "softmax", (self,), grab)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x))


def _coerce_like(x, like: Tensor) -> Tensor:
    """Wrap scalars as constants of the peer's dtype (no silent upcasting)."""
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.data.dtype))


def _record(data, op: str, inputs: tuple, grad_fn) -> Tensor:
    if any(t.requires_grad for t in inputs):
        return Tensor(data, _parents=((inputs, grad_fn),))
    return Tensor(data)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # saturated well before the clip bound, so clipping is exact
    z = np.clip(x, -60.0, 60.0)
    return 1.0 / (1.0 + np.exp(-z))


def _softplus(x: np.ndarray) -> np.ndarray:
    # max(x, 0) + log1p(exp(-|x|)) never overflows
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


# -- multi-input ops -----------------------------------------------------


def maximum(a: Tensor, b) -> Tensor:
    """Elementwise max; at exact ties the gradient goes to `a`."""
    a = _coerce(a)
    b = _coerce_like(b, a)
    data = np.maximum(a.data, b.data)
    take_a = a.data >= b.data
    return _record(data, "maximum", (a, b), lambda g: (
        _unbroadcast(g * take_a, a.data.shape),
        _unbroadcast(g * ~take_a, b.data.shape),
    ))


def minimum(a: Tensor, b) -> Tensor:
    """Elementwise min; at exact ties the gradient goes to `a`."""
    a = _coerce(a)
    b = _coerce_like(b, a)
    data = np.minimum(a.data, b.data)
    take_a = a.data <= b.data
    return _record(data, "minimum", (a, b), lambda g: (
        _unbroadcast(g * take_a, a.data.shape),
        _unbroadcast(g * ~take_a, b.data.shape),
    ))


def where(cond: np.ndarray, a: Tensor, b) -> Tensor:
    """Select by a constant boolean mask; gradients route per element."""
    cond = np.asarray(cond, dtype=bool)
    a = _coerce(a)
    b = _coerce_like(b, a)
    data = np.where(cond, a.data, b.data)
    return _record(data, "where", (a, b), lambda g: (
        _unbroadcast(g * cond, a.data.shape),
        _unbroadcast(g * ~cond, b.data.shape),
    ))


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def grab(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(data, "concat", tuple(tensors), grab)


def dropout(x: Tensor, p: float, train: bool, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: scales by 1/(1-p) at train time, identity otherwise."""
    if not train or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout: rng required when train=True")
    keep = (rng.random(x.data.shape) >= p).astype(x.data.dtype) / (1.0 - p)
    return x * Tensor(keep)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into each requires_grad leaf's .grad."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.data.shape}")

    # iterative post-order topological sort
    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inputs, _ in node._parents:
            for parent in inputs:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))

    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(topo):
        g = adjoint.pop(id(node), None)
        if g is None:
            continue
        if not node._parents:
            if node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                node.grad += g.reshape(node.data.shape)
            continue
        for inputs, grad_fn in node._parents:
            contribs = grad_fn(g)
            for parent, contrib in zip(inputs, contribs):
                if not parent.requires_grad:
                    continue
                key = id(parent)
                if key in adjoint:
                    adjoint[key] = adjoint[key] + contrib
                else:
                    adjoint[key] = contrib
