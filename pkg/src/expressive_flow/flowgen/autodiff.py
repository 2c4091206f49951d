"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and remembers the op that produced it;
``backward()`` walks the tape in reverse topological order and accumulates
vector-Jacobian products. Only the ops the velocity-field network needs
exist here, and the heavy ones (conv1d, group_norm) are fused primitives
with hand-written VJPs. The finite-difference suite in the tests pins
every one of them down.

Gradients are only tracked while recording is enabled (see
:func:`no_grad`); the serving path runs tape-free.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = True


@contextmanager
def no_grad():
    """Disable tape recording inside the block (inference mode)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        """Accumulate gradients of a scalar output into the leaf tensors."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        order = _toposort(self)
        self.grad = np.asarray(grad)
        for node in order:
            g = node.grad
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not parent.requires_grad:
                    continue
                parent.grad = pg if parent.grad is None else parent.grad + pg
            node.grad = None  # interior grads are not kept


def _toposort(root: Tensor):
    order, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    return list(reversed(order))


def _node(data: np.ndarray, parents, vjp) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to `shape` to undo numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# elementwise / shape ops

def add(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _node(a.data + b.data, (a, b), vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _node(a.data - b.data, (a, b), vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    def vjp(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return _node(a.data * b.data, (a, b), vjp)


def add_scalar(a: Tensor, c: float) -> Tensor:
    return _node(a.data + c, (a,), lambda g: (g,))


def scale(a: Tensor, c: float) -> Tensor:
    return _node(a.data * c, (a,), lambda g: (g * c,))


def reshape(a: Tensor, shape) -> Tensor:
    orig = a.data.shape
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(orig),))


def concat(tensors, axis: int) -> Tensor:
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), vjp)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _node(a.data[idx], (a,), vjp)


def sum_all(a: Tensor) -> Tensor:
    shape = a.data.shape
    return _node(np.asarray(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, shape),))


def silu(a: Tensor) -> Tensor:
    x = a.data
    # numerically stable sigmoid without fancy indexing
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0.0, 1.0, e) / (1.0 + e)
    y = x * s

    def vjp(g):
        return (g * (s + y * (1.0 - s)),)

    return _node(y, (a,), vjp)


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (np.ascontiguousarray(g.transpose(inv)),)

    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,), vjp)


# ---------------------------------------------------------------------------
# dense / conv / norm primitives

def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """y = x @ w + b for x of shape (B, F_in), w (F_in, F_out), b (F_out,)."""
    y = x.data @ w.data + b.data

    def vjp(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return _node(y, (x, w, b), vjp)


def conv1d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1) -> Tensor:
    """Temporal convolution with zero padding of K // 2.

    Feature maps are channels-first: ``x`` is (C_in, B, T), ``w`` is
    (C_out, C_in, K), ``b`` is (C_out,), output is (C_out, B, T_out).
    That layout makes the im2col GEMM result a free view instead of a
    transpose copy; the VJP scatters back through the same columns.
    """
    Ci, B, T = x.data.shape
    Co, Ci2, K = w.data.shape
    if Ci != Ci2:
        raise ValueError(f"conv1d channel mismatch: input {Ci}, weight {Ci2}")
    pad = K // 2
    tp = T + 2 * pad
    t_out = (tp - K) // stride + 1
    if pad:
        xp = np.zeros((Ci, B, tp), dtype=x.data.dtype)
        xp[:, :, pad : pad + T] = x.data
    else:
        xp = x.data
    cols = np.empty((Ci, K, B, t_out), dtype=x.data.dtype)
    for k in range(K):
        cols[:, k] = xp[:, :, k : k + stride * t_out : stride]
    cm = cols.reshape(Ci * K, B * t_out)
    wm = w.data.reshape(Co, Ci * K)
    y = (wm @ cm).reshape(Co, B, t_out)
    y += b.data[:, None, None]

    def vjp(g):
        gm = g.reshape(Co, B * t_out)
        dw = (gm @ cm.T).reshape(Co, Ci, K)
        db = g.sum(axis=(1, 2))
        dcols = (wm.T @ gm).reshape(Ci, K, B, t_out)
        dxp = np.zeros((Ci, B, tp), dtype=g.dtype)
        for k in range(K):
            dxp[:, :, k : k + stride * t_out : stride] += dcols[:, k]
        dx = dxp[:, :, pad : pad + T] if pad else dxp
        return dx, dw, db

    return _node(y, (x, w, b), vjp)


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, groups: int, eps: float = 1e-5) -> Tensor:
    """Normalize (C, B, T) features per sample over channel groups."""
    C, B, T = x.data.shape
    if C % groups:
        raise ValueError(f"channels {C} not divisible by {groups} groups")
    xg = x.data.reshape(groups, C // groups, B, T)
    mu = xg.mean(axis=(1, 3), keepdims=True)
    var = xg.var(axis=(1, 3), keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat_g = (xg - mu) * inv
    xhat = xhat_g.reshape(C, B, T)
    y = gamma.data[:, None, None] * xhat + beta.data[:, None, None]

    def vjp(g):
        dgamma = (g * xhat).sum(axis=(1, 2))
        dbeta = g.sum(axis=(1, 2))
        dh = (g * gamma.data[:, None, None]).reshape(groups, C // groups, B, T)
        dx = inv * (
            dh
            - dh.mean(axis=(1, 3), keepdims=True)
            - xhat_g * (dh * xhat_g).mean(axis=(1, 3), keepdims=True)
        )
        return dx.reshape(C, B, T), dgamma, dbeta

    return _node(y, (x, gamma, beta), vjp)


def upsample_nearest(x: Tensor, factor: int = 2) -> Tensor:
    C, B, T = x.data.shape

    def vjp(g):
        return (g.reshape(C, B, T, factor).sum(axis=3),)

    return _node(np.repeat(x.data, factor, axis=2), (x,), vjp)
