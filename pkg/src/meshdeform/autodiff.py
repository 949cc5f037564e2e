"""Minimal reverse-mode automatic differentiation over dense float64 arrays.

Graph nodes hold numpy data plus backward closures; ``Tensor.backward()``
topologically sorts the graph and accumulates adjoints, so fan-out adds
gradients. A ``no_grad()`` context skips graph construction for inference.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

_STATE = threading.local()


def _grad_enabled():
    return getattr(_STATE, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Skip graph construction; per-thread, so concurrent inference passes
    cannot disturb each other."""
    prev = _grad_enabled()
    _STATE.enabled = False
    try:
        yield
    finally:
        _STATE.enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
            if self.grad.shape != self.data.shape:
                self.grad = np.broadcast_to(self.grad, self.data.shape).copy()
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is not None:
                node._backward_fn(node.grad)
        # interior nodes don't keep their adjoints
        for node in topo:
            if node is not self and not node.requires_grad:
                node.grad = None

    def item(self):
        return self.data.item()

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn):
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad or p._parents for p in parents):
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _wants(t):
    return t.requires_grad or t._parents


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g.reshape(shape)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def bwd(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g, a.data.shape))
        if _wants(b):
            b._accumulate(_unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data - b.data

    def bwd(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g, a.data.shape))
        if _wants(b):
            b._accumulate(_unbroadcast(-g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def neg(a):
    a = as_tensor(a)

    def bwd(g):
        if _wants(a):
            a._accumulate(-g)

    return _node(-a.data, (a,), bwd)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def bwd(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if _wants(b):
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _node(out_data, (a, b), bwd)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data @ b.data

    def bwd(g):
        if _wants(a):
            a._accumulate(_unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.data.shape))
        if _wants(b):
            b._accumulate(_unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.data.shape))

    return _node(out_data, (a, b), bwd)


def concat(parts, axis=-1):
    parts = [as_tensor(p) for p in parts]
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        for p, piece in zip(parts, np.split(g, splits, axis=axis)):
            if _wants(p):
                p._accumulate(piece)

    return _node(out_data, tuple(parts), bwd)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.data.shape

    def bwd(g):
        if _wants(a):
            a._accumulate(g.reshape(old))

    return _node(a.data.reshape(shape), (a,), bwd)


def swap_last2(a):
    a = as_tensor(a)

    def bwd(g):
        if _wants(a):
            a._accumulate(np.swapaxes(g, -1, -2))

    return _node(np.ascontiguousarray(np.swapaxes(a.data, -1, -2)), (a,), bwd)


def tanh(a):
    a = as_tensor(a)
    out_data = np.tanh(a.data)

    def bwd(g):
        if _wants(a):
            a._accumulate(g * (1.0 - out_data**2))

    return _node(out_data, (a,), bwd)


def relu(a):
    a = as_tensor(a)
    out_data = np.maximum(a.data, 0.0)

    def bwd(g):
        if _wants(a):
            a._accumulate(g * (a.data > 0.0))

    return _node(out_data, (a,), bwd)


def exp(a):
    a = as_tensor(a)
    out_data = np.exp(a.data)

    def bwd(g):
        if _wants(a):
            a._accumulate(g * out_data)

    return _node(out_data, (a,), bwd)


def powc(a, p):
    """Elementwise power with a constant exponent."""
    a = as_tensor(a)
    out_data = a.data**p

    def bwd(g):
        if _wants(a):
            a._accumulate(g * p * a.data ** (p - 1.0))

    return _node(out_data, (a,), bwd)


def sqrt(a):
    return powc(a, 0.5)


def tsum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not _wants(a):
            return
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            gg = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return _node(out_data, (a,), bwd)


def tmean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else a.data.shape[axis]
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def row_scale(a, s):
    """Scale each row of a 2D tensor by a per-row factor."""
    a, s = as_tensor(a), as_tensor(s)
    out_data = a.data * s.data[:, None]

    def bwd(g):
        if _wants(a):
            a._accumulate(g * s.data[:, None])
        if _wants(s):
            s._accumulate((g * a.data).sum(axis=1))

    return _node(out_data, (a, s), bwd)


def cross3(a, b):
    """Cross product along the last axis (size 3)."""
    a, b = as_tensor(a), as_tensor(b)
    out_data = np.cross(a.data, b.data)

    def bwd(g):
        if _wants(a):
            a._accumulate(np.cross(b.data, g))
        if _wants(b):
            b._accumulate(np.cross(g, a.data))

    return _node(out_data, (a, b), bwd)


def spmm(matrix, x, matrix_t=None):
    """Multiply by a constant scipy sparse matrix."""
    x = as_tensor(x)
    mt = matrix_t if matrix_t is not None else matrix.T.tocsr()

    def bwd(g):
        if _wants(x):
            x._accumulate(mt @ g)

    return _node(matrix @ x.data, (x,), bwd)


def poisson_apply(system, jacobians):
    """Differentiable Poisson reconstruction; forward and backward share the
    cached factorization of the mesh's reduced Laplacian."""
    jacobians = as_tensor(jacobians)

    def bwd(g):
        if _wants(jacobians):
            jacobians._accumulate(system.adjoint(g))

    return _node(system.solve(jacobians.data), (jacobians,), bwd)


def gradcheck(fn, tensors, samples=5, eps=1e-5, rtol=1e-4, atol=1e-7, rng=None):
    """Compare analytic gradients of a scalar-valued ``fn`` against central
    finite differences on randomly sampled entries; returns the worst
    relative error."""
    rng = rng or np.random.default_rng(0)
    for t in tensors:
        t.zero_grad()
    out = fn()
    out.backward()
    grads = [np.array(t.grad if t.grad is not None else np.zeros_like(t.data)) for t in tensors]
    worst = 0.0
    for t, g in zip(tensors, grads):
        flat = t.data.reshape(-1)
        idx = rng.choice(flat.size, size=min(samples, flat.size), replace=False)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + eps
            hi = fn().item()
            flat[i] = keep - eps
            lo = fn().item()
            flat[i] = keep
            fd = (hi - lo) / (2.0 * eps)
            an = g.reshape(-1)[i]
            err = abs(an - fd) / max(abs(an), abs(fd), atol)
            worst = max(worst, err)
    for t in tensors:
        t.zero_grad()
    if worst > rtol:
        raise AssertionError(f"gradcheck failed: relative error {worst:.3e} > {rtol:.1e}")
    return worst
