"""Dense float64 tensors with reverse-mode automatic differentiation.

Every op checks shapes explicitly; there is no implicit broadcasting between
two tensors. Constants (plain numpy arrays or Python scalars) may be combined
with a tensor under numpy's usual rules since they carry no gradient.
"""
from __future__ import annotations

import numpy as np

from ..errors import IndexOutOfRange, ShapeMismatch

DTYPE = np.float64


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeMismatch("backward", self.shape, "scalar (pass grad explicitly)")
            grad = np.ones_like(self.data)
        order = _topological_order(self)
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._backward(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g

    # operator sugar; tensor-tensor combinations go through the checked ops
    def __add__(self, other):
        return add(self, other) if isinstance(other, Tensor) else add_const(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other) if isinstance(other, Tensor) else add_const(self, -np.asarray(other))

    def __rsub__(self, other):
        return add_const(neg(self), other)

    def __mul__(self, other):
        return mul(self, other) if isinstance(other, Tensor) else mul_const(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division by a tensor is not supported")
        return mul_const(self, 1.0 / np.asarray(other, dtype=DTYPE))

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return take(self, key)


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, finished = stack.pop()
        if finished:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _result(data, parents, backward):
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward)
    return Tensor(data)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_same(op, a, b):
    if a.shape != b.shape:
        raise ShapeMismatch(op, b.shape, a.shape)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# -- elementwise --------------------------------------------------------

def add(a, b):
    _check_same("add", a, b)
    return _result(a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _check_same("sub", a, b)
    return _result(a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _check_same("mul", a, b)
    return _result(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def neg(a):
    return _result(-a.data, (a,), lambda g: (-g,))


def add_const(a, c):
    out = a.data + c
    if out.shape != a.shape:
        raise ShapeMismatch("add_const", np.shape(c), a.shape)
    return _result(out, (a,), lambda g: (g,))


def mul_const(a, c):
    out = a.data * c
    if out.shape != a.shape:
        raise ShapeMismatch("mul_const", np.shape(c), a.shape)
    return _result(out, (a,), lambda g: (g * c,))


def relu(x):
    pos = x.data > 0
    return _result(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


def tanh(x):
    t = np.tanh(x.data)
    return _result(t, (x,), lambda g: (g * (1.0 - t * t),))


def sigmoid(x):
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result(s, (x,), lambda g: (g * s * (1.0 - s),))


def exp(x):
    e = np.exp(x.data)
    return _result(e, (x,), lambda g: (g * e,))


def log(x):
    return _result(np.log(x.data), (x,), lambda g: (g / x.data,))


# -- reductions & shape -------------------------------------------------

def sum(x):  # noqa: A001 - mirrors numpy naming
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.full(x.shape, g),))


def mean(x):
    n = x.data.size
    return _result(np.asarray(x.data.mean()), (x,), lambda g: (np.full(x.shape, g / n),))


def reshape(x, shape):
    out = x.data.reshape(shape)
    return _result(out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    inverse = np.argsort(axes)
    return _result(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def _is_basic_key(key):
    parts = key if isinstance(key, tuple) else (key,)
    return all(isinstance(k, (int, np.integer, slice)) or k is None or k is Ellipsis for k in parts)


def take(x, key):
    """Indexing/slicing; gradients scatter back into the source positions."""
    out = x.data[key]
    basic = _is_basic_key(key)

    def backward(g):
        gx = np.zeros(x.shape)
        if basic:
            gx[key] += g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return _result(out, (x,), backward)


def concat(tensors, axis=-1):
    tensors = [_as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    ax = axis % len(ref)
    for t in tensors[1:]:
        if t.ndim != len(ref) or t.shape[:ax] + t.shape[ax + 1:] != ref[:ax] + ref[ax + 1:]:
            raise ShapeMismatch("concat", t.shape, ref)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=ax)
    return _result(out, tensors, lambda g: tuple(np.split(g, bounds, axis=ax)))


# -- linear algebra -----------------------------------------------------

def matmul(a, b):
    """a @ b for (..., n, k) @ (k, m) or batched (..., n, k) @ (..., k, m)."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatch("matmul", (a.shape, b.shape), "operands with ndim >= 2")
    if b.ndim == 2:
        if a.shape[-1] != b.shape[0]:
            raise ShapeMismatch("matmul", b.shape, (a.shape[-1], "m"))
        out = a.data @ b.data

        def backward(g):
            ga = g @ b.data.T if a.requires_grad else None
            gb = None
            if b.requires_grad:
                gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb

        return _result(out, (a, b), backward)
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatch("matmul", b.shape, a.shape[:-2] + (a.shape[-1], "m"))
    out = a.data @ b.data

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2) if a.requires_grad else None
        gb = np.swapaxes(a.data, -1, -2) @ g if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), backward)


def linear(x, w, b=None):
    """x @ w + b over the last axis of x; w is (in, out), b is (out,)."""
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise ShapeMismatch("linear", w.shape, (x.shape[-1], "out"))
    if b is not None and b.shape != (w.shape[1],):
        raise ShapeMismatch("linear.bias", b.shape, (w.shape[1],))
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = g @ w.data.T if x.requires_grad else None
        gw = x.data.reshape(-1, x.shape[-1]).T @ g2 if w.requires_grad else None
        gb = g2.sum(axis=0) if b is not None and b.requires_grad else None
        return gx, gw, gb

    parents = (x, w) if b is None else (x, w, b)
    return _result(out, parents, lambda g: backward(g)[: len(parents)])


# -- neural-network primitives -------------------------------------------

def softmax(x, axis=-1, mask=None):
    """Softmax along `axis`; entries where `mask` is False get probability 0."""
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=axis, keepdims=True)),)

    return _result(s, (x,), backward)


def mean_pool(x, mask=None):
    """Average over axis 1 of a (batch, seq, d) tensor, skipping masked-out steps."""
    if x.ndim != 3:
        raise ShapeMismatch("mean_pool", x.shape, ("batch", "seq", "d"))
    B, L, _ = x.shape
    if mask is None:
        w = np.full((B, L), 1.0 / L)
    else:
        if mask.shape != (B, L):
            raise ShapeMismatch("mean_pool.mask", mask.shape, (B, L))
        m = mask.astype(DTYPE)
        w = m / np.maximum(m.sum(axis=1, keepdims=True), 1.0)
    out = (x.data * w[:, :, None]).sum(axis=1)
    return _result(out, (x,), lambda g: (g[:, None, :] * w[:, :, None],))


def dropout(x, p, training, rng):
    if not training or p == 0.0:
        return x
    keep = rng.random(x.shape) >= p
    scale = keep / (1.0 - p)
    return _result(x.data * scale, (x,), lambda g: (g * scale,))


def embedding(table, indices):
    indices = np.asarray(indices)
    if table.ndim != 2:
        raise ShapeMismatch("embedding", table.shape, ("vocab", "d"))
    if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
        raise IndexOutOfRange(int(indices.max()), table.shape[0])
    out = table.data[indices]

    def backward(g):
        gt = np.zeros(table.shape)
        np.add.at(gt, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(out, (table,), backward)


def layer_norm(x, gamma, beta, eps=1e-8):
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch("layer_norm", gamma.shape, (d,))
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        gh = g * gamma.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                    - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def batch_norm(x, gamma, beta, running_mean, running_var, training,
               momentum=0.9, eps=1e-5):
    """Normalise each feature (last axis) over all leading axes.

    In training mode batch statistics are used and the running buffers are
    updated in place as running = momentum * running + (1 - momentum) * batch.
    """
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeMismatch("batch_norm", gamma.shape, (d,))
    lead = tuple(range(x.ndim - 1))
    if training:
        mu = x.data.mean(axis=lead)
        xc = x.data - mu
        var = (xc * xc).mean(axis=lead)
        running_mean.data[...] = momentum * running_mean.data + (1 - momentum) * mu
        running_var.data[...] = momentum * running_var.data + (1 - momentum) * var
        inv = 1.0 / np.sqrt(var + eps)
        xhat = xc * inv

        def backward(g):
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=lead) - xhat * (gh * xhat).mean(axis=lead))
            return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)
    else:
        inv = 1.0 / np.sqrt(running_var.data + eps)
        xhat = (x.data - running_mean.data) * inv

        def backward(g):
            return g * gamma.data * inv, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


# -- losses ---------------------------------------------------------------

def cross_entropy(logits, targets):
    """Mean over the batch of -log softmax(logits)[target]."""
    targets = np.asarray(targets)
    single = logits.ndim == 1
    z = logits.data[None, :] if single else logits.data
    t = targets.reshape(-1)
    if z.ndim != 2 or t.shape[0] != z.shape[0]:
        raise ShapeMismatch("cross_entropy", logits.shape, (len(t), "classes"))
    if t.size and (t.min() < 0 or t.max() >= z.shape[1]):
        raise IndexOutOfRange(int(t.max()), z.shape[1])
    shifted = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(t))
    loss = (lse - shifted[rows, t]).mean()

    def backward(g):
        p = np.exp(shifted - lse[:, None])
        p[rows, t] -= 1.0
        p *= g / len(t)
        return (p[0] if single else p,)

    return _result(np.asarray(loss), (logits,), backward)


def mse(pred, target):
    """Mean squared error over every component."""
    target = np.asarray(target, dtype=DTYPE)
    if target.shape != pred.shape:
        raise ShapeMismatch("mse", target.shape, pred.shape)
    diff = pred.data - target
    n = diff.size
    return _result(np.asarray((diff * diff).mean()), (pred,), lambda g: (2.0 * g * diff / n,))
