"""Reverse-mode autodiff on float64 numpy arrays.

The graph is built eagerly: every op returns a new Tensor holding the
result plus a closure that pushes gradients into its parents. Calling
``backward()`` on a scalar walks the graph once in reverse topological
order. Gradients accumulate with ``+=`` so shared parameters compose.
"""

from __future__ import annotations

import contextlib

import numpy as np


class NonFiniteError(FloatingPointError):
    """A forward op produced NaN or Inf."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (pure inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"non-finite values produced by op '{op}'")


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        _check_finite(self.data, "constructor")
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn = None

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents, backward_fn, op: str) -> "Tensor":
        """Wrap an op result; record the edge only if grads are live."""
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._parents = ()
        out._backward_fn = None
        out.requires_grad = False
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        return out

    def accumulate_grad(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            # copy: g may alias a consumer's grad buffer (e.g. through add/reshape)
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar; accumulates into every reachable
        requires_grad tensor's ``.grad``."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar loss, got shape {self.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited and p.requires_grad:
                    stack.append((p, False))
        self.accumulate_grad(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)

    def zero_grad(self) -> None:
        self.grad = None

    # -- shape helpers -----------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def backward_fn(g, self=self, old_shape=old_shape):
            self.accumulate_grad(g.reshape(old_shape))

        return Tensor._from_op(out_data, (self,), backward_fn, "reshape")

    def transpose2d(self) -> "Tensor":
        if self.ndim != 2:
            raise ValueError("transpose2d expects a 2-D tensor")
        out_data = self.data.T.copy()

        def backward_fn(g, self=self):
            self.accumulate_grad(g.T)

        return Tensor._from_op(out_data, (self,), backward_fn, "transpose2d")

    # -- elementwise arithmetic (numpy broadcasting, grads unbroadcast) -----

    @staticmethod
    def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
        """Sum gradient over axes that were broadcast in the forward op."""
        if g.shape == shape:
            return g
        extra = g.ndim - len(shape)
        if extra > 0:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return g

    @staticmethod
    def _coerce(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))

    def __add__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data + other.data

        def backward_fn(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(Tensor._unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(Tensor._unbroadcast(g, b.data.shape))

        return Tensor._from_op(out_data, (self, other), backward_fn, "add")

    __radd__ = __add__

    def __sub__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data - other.data

        def backward_fn(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(Tensor._unbroadcast(g, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(Tensor._unbroadcast(-g, b.data.shape))

        return Tensor._from_op(out_data, (self, other), backward_fn, "sub")

    def __rsub__(self, other):
        return Tensor._coerce(other) - self

    def __neg__(self):
        out_data = -self.data

        def backward_fn(g, a=self):
            a.accumulate_grad(-g)

        return Tensor._from_op(out_data, (self,), backward_fn, "neg")

    def __mul__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data * other.data

        def backward_fn(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(Tensor._unbroadcast(g * b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(Tensor._unbroadcast(g * a.data, b.data.shape))

        return Tensor._from_op(out_data, (self, other), backward_fn, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = Tensor._coerce(other)
        out_data = self.data / other.data

        def backward_fn(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(Tensor._unbroadcast(g / b.data, a.data.shape))
            if b.requires_grad:
                b.accumulate_grad(Tensor._unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._from_op(out_data, (self, other), backward_fn, "div")

    def __rtruediv__(self, other):
        return Tensor._coerce(other) / self

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** exponent

        def backward_fn(g, a=self, p=float(exponent)):
            a.accumulate_grad(g * p * a.data ** (p - 1.0))

        return Tensor._from_op(out_data, (self,), backward_fn, "pow")

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)

        def backward_fn(g, a=self, out_data=out_data):
            a.accumulate_grad(g * 0.5 / out_data)

        return Tensor._from_op(out_data, (self,), backward_fn, "sqrt")

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)

        def backward_fn(g, a=self, out_data=out_data):
            a.accumulate_grad(g * out_data)

        return Tensor._from_op(out_data, (self,), backward_fn, "exp")

    def log(self) -> "Tensor":
        out_data = np.log(self.data)

        def backward_fn(g, a=self):
            a.accumulate_grad(g / a.data)

        return Tensor._from_op(out_data, (self,), backward_fn, "log")

    # -- reductions ----------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward_fn(g, a=self, axis=axis, keepdims=keepdims):
            if axis is None:
                a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())

        return Tensor._from_op(np.asarray(out_data), (self,), backward_fn, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            count = 1
            for ax in axes:
                count *= self.data.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- linear algebra -------------------------------------------------------

    def __matmul__(self, other):
        other = Tensor._coerce(other)
        if self.ndim != 2 or other.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        out_data = self.data @ other.data

        def backward_fn(g, a=self, b=other):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)

        return Tensor._from_op(out_data, (self, other), backward_fn, "matmul")


def concat(tensors, axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; gradient splits back to the inputs."""
    tensors = [Tensor._coerce(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward_fn(g, tensors=tensors, offsets=offsets, axis=axis):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t.accumulate_grad(g[tuple(idx)])

    return Tensor._from_op(out_data, tuple(tensors), backward_fn, "concat")
