"""Reverse-mode automatic differentiation over float64 numpy arrays.

A ``Tensor`` wraps an ndarray and records the operations that produced
it; ``backward()`` walks the graph once in reverse topological order and
accumulates gradients into every tensor created with
``requires_grad=True``. Broadcasting in elementwise ops is undone by
summing over the broadcast axes.
"""
from __future__ import annotations

import numpy as np
from scipy.special import expit

__all__ = [
    "Tensor",
    "ensure_tensor",
    "parameter",
    "concat",
    "mse",
    "chamfer_loss",
]


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (the pre-broadcast operand shape)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _accumulate(tensor, grad):
    if not tensor.requires_grad:
        return
    if tensor.grad is None:
        tensor.grad = np.zeros_like(tensor.data)
    tensor.grad += grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None

    # -- bookkeeping ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data.copy())

    # -- graph-producing ops ---------------------------------------------
    def _track(self, data, parents, backward):
        out = Tensor(data)
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def __add__(self, other):
        other = ensure_tensor(other)

        def bw(g):
            _accumulate(self, _unbroadcast(g, self.data.shape))
            _accumulate(other, _unbroadcast(g, other.data.shape))

        return self._track(self.data + other.data, (self, other), bw)

    __radd__ = __add__

    def __neg__(self):
        def bw(g):
            _accumulate(self, -g)

        return self._track(-self.data, (self,), bw)

    def __sub__(self, other):
        other = ensure_tensor(other)

        def bw(g):
            _accumulate(self, _unbroadcast(g, self.data.shape))
            _accumulate(other, _unbroadcast(-g, other.data.shape))

        return self._track(self.data - other.data, (self, other), bw)

    def __rsub__(self, other):
        return ensure_tensor(other) - self

    def __mul__(self, other):
        other = ensure_tensor(other)

        def bw(g):
            _accumulate(self, _unbroadcast(g * other.data, self.data.shape))
            _accumulate(other, _unbroadcast(g * self.data, other.data.shape))

        return self._track(self.data * other.data, (self, other), bw)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = ensure_tensor(other)

        def bw(g):
            _accumulate(self, _unbroadcast(g / other.data, self.data.shape))
            _accumulate(other, _unbroadcast(-g * self.data / other.data ** 2,
                                            other.data.shape))

        return self._track(self.data / other.data, (self, other), bw)

    def __rtruediv__(self, other):
        return ensure_tensor(other) / self

    def __matmul__(self, other):
        other = ensure_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError("matmul supports 2-D tensors only")

        def bw(g):
            _accumulate(self, g @ other.data.T)
            _accumulate(other, self.data.T @ g)

        return self._track(self.data @ other.data, (self, other), bw)

    @property
    def T(self):
        if self.data.ndim != 2:
            raise ValueError("transpose supports 2-D tensors only")

        def bw(g):
            _accumulate(self, g.T)

        return self._track(self.data.T, (self,), bw)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.data.shape

        def bw(g):
            _accumulate(self, g.reshape(old))

        return self._track(self.data.reshape(shape), (self,), bw)

    def slice_rows(self, start, stop):
        """Rows [start, stop) of a 2-D tensor."""
        if self.data.ndim != 2:
            raise ValueError("slice_rows needs a 2-D tensor")
        n = self.data.shape[0]

        def bw(g):
            full = np.zeros((n, self.data.shape[1]))
            full[start:stop] = g
            _accumulate(self, full)

        return self._track(self.data[start:stop].copy(), (self,), bw)

    # -- reductions --------------------------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.data.shape

        def bw(g):
            if axis is None:
                _accumulate(self, np.broadcast_to(g, shape).copy())
                return
            gg = g if keepdims else np.expand_dims(g, axis)
            _accumulate(self, np.broadcast_to(gg, shape).copy())

        return self._track(self.data.sum(axis=axis, keepdims=keepdims), (self,), bw)

    def mean(self, axis=None, keepdims=False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def _extremum(self, axis, keepdims, kind):
        data = self.data
        arg = np.argmin(data, axis=axis) if kind == "min" else np.argmax(data, axis=axis)
        value = data.min(axis=axis, keepdims=keepdims) if kind == "min" \
            else data.max(axis=axis, keepdims=keepdims)

        def bw(g):
            full = np.zeros_like(data)
            if axis is None:
                full.flat[arg] = g
            else:
                gg = g if keepdims else np.expand_dims(g, axis)
                np.put_along_axis(full, np.expand_dims(arg, axis), gg, axis=axis)
            _accumulate(self, full)

        return self._track(value, (self,), bw)

    def min(self, axis=None, keepdims=False):
        """Minimum; ties send the gradient to the first minimizer."""
        return self._extremum(axis, keepdims, "min")

    def max(self, axis=None, keepdims=False):
        """Maximum; ties send the gradient to the first maximizer."""
        return self._extremum(axis, keepdims, "max")

    # -- nonlinearities ------------------------------------------------------
    def relu(self):
        mask = self.data > 0.0

        def bw(g):
            _accumulate(self, g * mask)

        return self._track(np.where(mask, self.data, 0.0), (self,), bw)

    def leaky_relu(self, slope=0.2):
        factor = np.where(self.data > 0.0, 1.0, slope)

        def bw(g):
            _accumulate(self, g * factor)

        return self._track(np.where(self.data > 0.0, self.data, slope * self.data),
                           (self,), bw)

    def sigmoid(self):
        s = expit(self.data)

        def bw(g):
            _accumulate(self, g * s * (1.0 - s))

        return self._track(s, (self,), bw)

    def softplus(self):
        """log(1 + exp(x)), computed stably."""
        s = expit(self.data)

        def bw(g):
            _accumulate(self, g * s)

        return self._track(np.logaddexp(0.0, self.data), (self,), bw)

    def log(self):
        def bw(g):
            _accumulate(self, g / self.data)

        return self._track(np.log(self.data), (self,), bw)

    def sqrt(self):
        root = np.sqrt(self.data)

        def bw(g):
            _accumulate(self, g / (2.0 * root))

        return self._track(root, (self,), bw)

    # -- structured ops --------------------------------------------------------
    def masked_softmax(self, mask):
        """Row-wise softmax of a 2-D tensor restricted to ``mask`` entries.

        Masked-out positions get probability 0. A row with no valid entry
        raises, because no distribution exists for it.
        """
        if self.data.ndim != 2:
            raise ValueError("masked_softmax needs a 2-D tensor")
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != self.data.shape:
            raise ValueError("mask shape must match the tensor shape")
        if not mask.any(axis=1).all():
            raise ValueError("masked_softmax row with no valid entries")
        z = np.where(mask, self.data, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.where(mask, np.exp(z), 0.0)
        p = e / e.sum(axis=1, keepdims=True)

        def bw(g):
            inner = (g * p).sum(axis=1, keepdims=True)
            _accumulate(self, p * (g - inner))

        return self._track(p, (self,), bw)

    def softmax(self):
        """Row-wise softmax of a 2-D tensor."""
        return self.masked_softmax(np.ones_like(self.data, dtype=bool))

    def segment_mean(self, segment_ids, num_segments):
        """Mean of rows grouped by ``segment_ids``; every segment must be hit."""
        if self.data.ndim != 2:
            raise ValueError("segment_mean needs a 2-D tensor")
        ids = np.asarray(segment_ids, dtype=np.int64)
        if ids.shape != (self.data.shape[0],):
            raise ValueError("need one segment id per row")
        counts = np.bincount(ids, minlength=num_segments).astype(np.float64)
        if (counts == 0).any():
            raise ValueError("segment_mean with an empty segment")
        totals = np.zeros((num_segments, self.data.shape[1]))
        np.add.at(totals, ids, self.data)
        out = totals / counts[:, None]

        def bw(g):
            _accumulate(self, g[ids] / counts[ids, None])

        return self._track(out, (self,), bw)

    # -- backward pass -----------------------------------------------------
    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=np.float64)
            if grad.shape != self.data.shape:
                raise ValueError("gradient shape must match the tensor shape")
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        _accumulate(self, grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def ensure_tensor(value):
    """Pass tensors through; wrap arrays and scalars as constants."""
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data):
    """A trainable tensor (requires_grad=True) holding a copy of ``data``."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True)


def concat(tensors, axis=0):
    """Concatenate tensors along an axis."""
    tensors = [ensure_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    out = Tensor(data)
    if any(t.requires_grad for t in tensors):
        out.requires_grad = True
        out._parents = tuple(tensors)
        offsets = np.cumsum([0] + sizes)

        def bw(g):
            for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _accumulate(t, g[tuple(sl)])

        out._backward = bw
    return out


def mse(a, b):
    """Mean squared elementwise difference between two tensors."""
    diff = ensure_tensor(a) - ensure_tensor(b)
    return (diff * diff).mean()


def chamfer_loss(p, q):
    """Symmetric squared-distance Chamfer loss between two point sets.

    mean over p of the squared distance to the nearest q, plus the same
    with the roles swapped. Differentiable with respect to both clouds.
    """
    p = ensure_tensor(p)
    q = ensure_tensor(q)
    if p.ndim != 2 or q.ndim != 2 or p.shape[1] != q.shape[1]:
        raise ValueError("chamfer_loss needs two (n, d) point sets of equal d")
    p2 = (p * p).sum(axis=1, keepdims=True)       # (n, 1)
    q2 = (q * q).sum(axis=1, keepdims=True).T     # (1, m)
    d2 = p2 + q2 - 2.0 * (p @ q.T)                # (n, m)
    return d2.min(axis=1).mean() + d2.min(axis=0).mean()
