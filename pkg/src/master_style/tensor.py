"""Dense float64 tensors with tape-based reverse-mode differentiation.

Every operation that touches a tensor with ``requires_grad=True`` records its
parents and a closure that pushes the output gradient back to them.  Calling
:meth:`Tensor.backward` on a scalar accumulates gradients into the leaf
tensors in reverse topological order.  The intermediate nodes are released
afterwards, so a graph can be consumed only once.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

_state = threading.local()


def grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (per thread)."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class GraphError(RuntimeError):
    """Raised when backward is called on something that has no usable graph."""


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{tag})"

    def __len__(self) -> int:
        return len(self.data)

    # -- graph plumbing ---------------------------------------------------
    def _accumulate(self, g: np.ndarray) -> None:
        g = _unbroadcast(g, self.data.shape)
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every participating leaf."""
        if self.data.size != 1:
            raise GraphError(f"backward needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            raise GraphError("backward on a tensor that is not connected to any parameter")
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError("non-finite loss")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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

        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is None:
                continue
            if node.grad is not None:
                node._backward(node.grad)
            # release the tape entry; intermediates do not keep gradients
            node.grad = None
            node._parents = ()
            node._backward = None

    # -- arithmetic ---------------------------------------------------------
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
        return _make(-self.data, (self,), lambda g: self._accumulate(-g))

    def __pow__(self, p: float):
        x = self.data
        return _make(x**p, (self,), lambda g: self._accumulate(g * p * x ** (p - 1)))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        x = self.data

        def bw(g):
            full = np.zeros_like(x)
            if _fancy(idx):
                np.add.at(full, idx, g)
            else:
                full[idx] = g
            self._accumulate(full)

        return _make(x[idx], (self,), bw)

    # -- reductions / reshaping -----------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        x = self.data

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, x.shape))

        return _make(x.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod([self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape
        return _make(self.data.reshape(shape), (self,), lambda g: self._accumulate(g.reshape(old)))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return _make(self.data.transpose(axes), (self,), lambda g: self._accumulate(g.transpose(inv)))

    def swap_last(self):
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(axes)

    # -- elementwise nonlinearities ---------------------------------------------
    def relu(self):
        mask = self.data > 0
        return _make(self.data * mask, (self,), lambda g: self._accumulate(g * mask))

    def exp(self):
        y = np.exp(self.data)
        return _make(y, (self,), lambda g: self._accumulate(g * y))

    def log(self):
        x = self.data
        return _make(np.log(x), (self,), lambda g: self._accumulate(g / x))

    def sqrt(self):
        """Square root whose gradient is defined as 0 where the output is 0."""
        y = np.sqrt(self.data)

        def bw(g):
            safe = np.where(y > 0, y, 1.0)
            self._accumulate(np.where(y > 0, g / (2.0 * safe), 0.0))

        return _make(y, (self,), bw)

    def abs(self):
        s = np.sign(self.data)
        return _make(np.abs(self.data), (self,), lambda g: self._accumulate(g * s))

    def softmax(self, axis: int = -1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

        def bw(g):
            self._accumulate(y * (g - (g * y).sum(axis=axis, keepdims=True)))

        return _make(y, (self,), bw)


def _fancy(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# binary ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(g)

    return _make(a.data + b.data, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g)
        if b.requires_grad:
            b._accumulate(-g)

    return _make(a.data - b.data, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * b.data)
        if b.requires_grad:
            b._accumulate(g * a.data)

    return _make(a.data * b.data, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g / b.data)
        if b.requires_grad:
            b._accumulate(-g * a.data / (b.data * b.data))

    return _make(a.data / b.data, (a, b), bw)


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes, numpy broadcasting on the rest."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul inner extents differ: {a.shape} @ {b.shape}")

    def bw(g):
        if a.requires_grad:
            a._accumulate(g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            b._accumulate(np.swapaxes(a.data, -1, -2) @ g)

    return _make(a.data @ b.data, (a, b), bw)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat of an empty sequence")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw)


def pad(x: Tensor, widths: Sequence[tuple[int, int]]) -> Tensor:
    """Zero padding; ``widths`` follows ``np.pad``."""
    widths = [tuple(w) for w in widths]
    region = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, x.shape))
    return _make(np.pad(x.data, widths), (x,), lambda g: x._accumulate(g[region]))


def roll(x: Tensor, shift, axis) -> Tensor:
    neg = tuple(-s for s in shift) if isinstance(shift, (tuple, list)) else -shift
    return _make(np.roll(x.data, shift, axis=axis), (x,), lambda g: x._accumulate(np.roll(g, neg, axis=axis)))


# ---------------------------------------------------------------------------
# image ops, channels-last (B, H, W, C)
# ---------------------------------------------------------------------------


def conv3x3(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """3x3 convolution with zero padding 1, stride 1.

    ``w`` is stored flattened as ``(9 * C_in, C_out)`` with rows ordered by
    (dy, dx, c_in), which is exactly the column order of the im2col matrix,
    so forward and both backward products are single GEMMs.
    """
    B, H, W, C = x.shape
    if w.shape[0] != 9 * C:
        raise ValueError(f"conv weight rows {w.shape[0]} != 9 * {C}")
    co = w.shape[1]
    xp = np.pad(x.data, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = np.empty((B, H, W, 9, C))
    for s in range(9):
        i, j = divmod(s, 3)
        cols[:, :, :, s, :] = xp[:, i : i + H, j : j + W, :]
    cols = cols.reshape(-1, 9 * C)
    out = (cols @ w.data).reshape(B, H, W, co)
    if b is not None:
        out = out + b.data
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        g2 = g.reshape(-1, co)
        if w.requires_grad:
            w._accumulate(cols.T @ g2)
        if b is not None and b.requires_grad:
            b._accumulate(g2.sum(axis=0))
        if x.requires_grad:
            gcols = (g2 @ w.data.T).reshape(B, H, W, 9, C)
            gxp = np.zeros(xp.shape)
            for s in range(9):
                i, j = divmod(s, 3)
                gxp[:, i : i + H, j : j + W, :] += gcols[:, :, :, s, :]
            x._accumulate(gxp[:, 1:-1, 1:-1, :])

    return _make(out, parents, bw)


def avg_pool2(x: Tensor) -> Tensor:
    """2x2 average pooling; an odd trailing row/column is dropped."""
    B, H, W, C = x.shape
    h, w = H // 2, W // 2
    if h == 0 or w == 0:
        raise ValueError(f"cannot pool a {H}x{W} map")
    out = x.data[:, : 2 * h, : 2 * w].reshape(B, h, 2, w, 2, C).mean(axis=(2, 4))

    def bw(g):
        full = np.zeros(x.shape)
        full[:, : 2 * h, : 2 * w] = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        x._accumulate(full)

    return _make(out, (x,), bw)


def upsample2(x: Tensor) -> Tensor:
    """Nearest-neighbour 2x upsampling."""
    B, H, W, C = x.shape
    out = np.repeat(np.repeat(x.data, 2, axis=1), 2, axis=2)

    def bw(g):
        x._accumulate(g.reshape(B, H, 2, W, 2, C).sum(axis=(2, 4)))

    return _make(out, (x,), bw)


# ---------------------------------------------------------------------------
# convenience
# ---------------------------------------------------------------------------


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax of a matrix (or of the last axis in general)."""
    return as_tensor(x).softmax(axis=-1)


def norm(x: Tensor, axis=None) -> Tensor:
    """Euclidean norm; gradient is 0 at the origin."""
    return (x * x).sum(axis=axis).sqrt()


def zeros(shape, requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=requires_grad)


def parameters_finite(tensors: Iterable[Tensor]) -> bool:
    return all(np.all(np.isfinite(t.data)) for t in tensors)
