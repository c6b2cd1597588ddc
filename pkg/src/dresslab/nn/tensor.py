"""Minimal reverse-mode autodiff over float64 numpy arrays.

Small tape-based engine: every op records its parents and a closure that
routes the incoming gradient. Enough machinery for the point networks,
FiLM blocks and losses in this package; not a general-purpose framework.
All arithmetic is float64 so finite-difference checks are meaningful.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor", "constant", "parameter", "concat", "stack", "relu", "tanh",
    "exp", "log", "softplus", "maximum_axis", "gather", "gather_points",
    "where", "no_grad",
]

_grad_enabled = True


class no_grad:
    """Context manager that skips tape construction (inference only).

    The same numpy arithmetic runs either way, so outputs are bitwise
    identical with and without the tape.
    """

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _sum_to_shape(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if grad.shape == shape:
        return grad
    # collapse leading broadcast axes
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Tensor:
    """Node in the autodiff graph wrapping a float64 ndarray."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._backward = backward

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # -- graph construction helpers ------------------------------------------

    @staticmethod
    def _wrap(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(other)

    def _make(self, data, parents, backward) -> "Tensor":
        req = _grad_enabled and any(p.requires_grad for p in parents)
        return Tensor(data, requires_grad=req,
                      parents=parents if req else (),
                      backward=backward if req else None)

    # -- arithmetic ------------------------------------------------------------

    def __add__(self, other):
        other = self._wrap(other)
        out_data = self.data + other.data

        def backward(grad, out):
            if self.requires_grad:
                self._accum(_sum_to_shape(grad, self.data.shape))
            if other.requires_grad:
                other._accum(_sum_to_shape(grad, other.data.shape))

        return self._make(out_data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(grad, out):
            if self.requires_grad:
                self._accum(-grad)
        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._wrap(other))

    def __rsub__(self, other):
        return self._wrap(other) + (-self)

    def __mul__(self, other):
        other = self._wrap(other)
        out_data = self.data * other.data

        def backward(grad, out):
            if self.requires_grad:
                self._accum(_sum_to_shape(grad * other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_sum_to_shape(grad * self.data, other.data.shape))

        return self._make(out_data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._wrap(other)
        out_data = self.data / other.data

        def backward(grad, out):
            if self.requires_grad:
                self._accum(_sum_to_shape(grad / other.data, self.data.shape))
            if other.requires_grad:
                other._accum(_sum_to_shape(-grad * self.data / (other.data ** 2),
                                           other.data.shape))

        return self._make(out_data, (self, other), backward)

    def __rtruediv__(self, other):
        return self._wrap(other) / self

    def __pow__(self, exponent):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def backward(grad, out):
            if self.requires_grad:
                self._accum(grad * exponent * self.data ** (exponent - 1))

        return self._make(out_data, (self,), backward)

    def __matmul__(self, other):
        other = self._wrap(other)
        out_data = self.data @ other.data

        def backward(grad, out):
            if self.requires_grad:
                g = grad @ np.swapaxes(other.data, -1, -2)
                self._accum(_sum_to_shape(g, self.data.shape))
            if other.requires_grad:
                g = np.swapaxes(self.data, -1, -2) @ grad
                other._accum(_sum_to_shape(g, other.data.shape))

        return self._make(out_data, (self, other), backward)

    # -- shape ops -------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward(grad, out):
            if self.requires_grad:
                self._accum(grad.reshape(old_shape))

        return self._make(out_data, (self,), backward)

    def swapaxes(self, a, b):
        out_data = np.swapaxes(self.data, a, b)

        def backward(grad, out):
            if self.requires_grad:
                self._accum(np.swapaxes(grad, a, b))

        return self._make(out_data, (self,), backward)

    def __getitem__(self, key):
        out_data = self.data[key]

        def backward(grad, out):
            if self.requires_grad:
                full = np.zeros_like(self.data)
                np.add.at(full, key, grad)
                self._accum(full)

        return self._make(out_data, (self,), backward)

    # -- reductions ------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(grad, out):
            if not self.requires_grad:
                return
            g = np.asarray(grad)
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accum(np.broadcast_to(g, self.data.shape).copy())

        return self._make(out_data, (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def max(self, axis, keepdims=False):
        """Max along one axis. Ties route the gradient to the lowest index."""
        return maximum_axis(self, axis, keepdims=keepdims)

    def clip(self, lo, hi):
        """Clamp with zero gradient outside [lo, hi]."""
        out_data = np.clip(self.data, lo, hi)
        inside = (self.data >= lo) & (self.data <= hi)

        def backward(grad, out):
            if self.requires_grad:
                self._accum(grad * inside)

        return self._make(out_data, (self,), backward)

    # -- backward pass -----------------------------------------------------

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        """Backpropagate from this tensor (defaults to d(out)/d(out) = 1)."""
        if grad is None:
            grad = np.ones_like(self.data)
        # deterministic topological order via iterative DFS
        topo, visited, stack = [], set(), [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self._accum(np.asarray(grad, dtype=np.float64))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad, node)


# -- free functions ---------------------------------------------------------

def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def parameter(data) -> Tensor:
    return Tensor(data, requires_grad=True)


def relu(x: Tensor) -> Tensor:
    out_data = np.maximum(x.data, 0.0)
    mask = x.data > 0.0

    def backward(grad, out):
        if x.requires_grad:
            x._accum(grad * mask)

    return x._make(out_data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    out_data = np.tanh(x.data)

    def backward(grad, out):
        if x.requires_grad:
            x._accum(grad * (1.0 - out_data ** 2))

    return x._make(out_data, (x,), backward)


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)

    def backward(grad, out):
        if x.requires_grad:
            x._accum(grad * out_data)

    return x._make(out_data, (x,), backward)


def log(x: Tensor) -> Tensor:
    out_data = np.log(x.data)

    def backward(grad, out):
        if x.requires_grad:
            x._accum(grad / x.data)

    return x._make(out_data, (x,), backward)


def softplus(x: Tensor) -> Tensor:
    """log(1 + e^x), computed without overflow for large |x|."""
    out_data = np.logaddexp(0.0, x.data)
    sig = 1.0 / (1.0 + np.exp(-x.data))

    def backward(grad, out):
        if x.requires_grad:
            x._accum(grad * sig)

    return x._make(out_data, (x,), backward)


def maximum_axis(x: Tensor, axis: int, keepdims=False) -> Tensor:
    out_data = x.data.max(axis=axis, keepdims=keepdims)
    # lowest index wins on ties, matching np.argmax
    arg = np.expand_dims(x.data.argmax(axis=axis), axis)

    def backward(grad, out):
        if not x.requires_grad:
            return
        g = np.asarray(grad)
        if not keepdims:
            g = np.expand_dims(g, axis)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, arg, g, axis)
        x._accum(full)

    return x._make(out_data, (x,), backward)


def concat(tensors, axis=-1) -> Tensor:
    tensors = [Tensor._wrap(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(grad, out):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * grad.ndim
                idx[axis] = slice(lo, hi)
                t._accum(grad[tuple(idx)])

    req = _grad_enabled and any(t.requires_grad for t in tensors)
    return Tensor(out_data, requires_grad=req,
                  parents=tuple(tensors) if req else (),
                  backward=backward if req else None)


def stack(tensors, axis=0) -> Tensor:
    tensors = [Tensor._wrap(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(grad, out):
        moved = np.moveaxis(grad, axis, 0)
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t._accum(moved[i])

    req = _grad_enabled and any(t.requires_grad for t in tensors)
    return Tensor(out_data, requires_grad=req,
                  parents=tuple(tensors) if req else (),
                  backward=backward if req else None)


def gather_points(x: Tensor, idx: np.ndarray) -> Tensor:
    """Row gather for batched point features: x (B,N,D), idx (B,M) -> (B,M,D)."""
    idx = np.asarray(idx)
    B = x.data.shape[0]
    b_idx = np.arange(B)[:, None]
    out_data = x.data[b_idx, idx]

    def backward(grad, out):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, (b_idx, idx), grad)
            x._accum(full)

    return x._make(out_data, (x,), backward)


def gather(x: Tensor, idx: np.ndarray, axis: int) -> Tensor:
    """take_along_axis with scatter-add backward.

    idx must broadcast against x everywhere except `axis`.
    """
    idx = np.asarray(idx)
    out_data = np.take_along_axis(x.data, idx, axis=axis)

    def backward(grad, out):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, _expand_index(idx, x.data.shape, axis), grad)
            x._accum(full)

    return x._make(out_data, (x,), backward)


def _expand_index(idx: np.ndarray, shape: tuple, axis: int):
    """Build a fancy-index tuple equivalent to take_along_axis(idx, axis)."""
    axis = axis % len(shape)
    index = []
    for ax in range(len(shape)):
        if ax == axis:
            index.append(idx)
        else:
            ix = np.arange(idx.shape[ax]).reshape(
                [1] * ax + [idx.shape[ax]] + [1] * (idx.ndim - ax - 1))
            index.append(ix)
    return tuple(index)


def where(cond: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise select with a constant (non-differentiable) condition."""
    a, b = Tensor._wrap(a), Tensor._wrap(b)
    cond = np.asarray(cond, dtype=bool)
    out_data = np.where(cond, a.data, b.data)

    def backward(grad, out):
        if a.requires_grad:
            a._accum(_sum_to_shape(grad * cond, a.data.shape))
        if b.requires_grad:
            b._accum(_sum_to_shape(grad * ~cond, b.data.shape))

    req = _grad_enabled and (a.requires_grad or b.requires_grad)
    return Tensor(out_data, requires_grad=req,
                  parents=(a, b) if req else (),
                  backward=backward if req else None)
