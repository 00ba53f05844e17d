"""Parameterised building blocks on top of the tensor ops.

Initialisation: Xavier-uniform for every weight matrix (attention, linear,
LSTM input and recurrent kernels), zeros for biases, N(0, 1/sqrt(d)) for
embedding tables, ones/zeros for normalisation scale/shift.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import IndivisibleHeads, ShapeMismatch
from . import tensor as T
from .tensor import Tensor


def xavier(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=(fan_in, fan_out)), requires_grad=True)


def zeros(*shape):
    return Tensor(np.zeros(shape), requires_grad=True)


class Module:
    """Walks attributes in definition order to name parameters and buffers.

    Trainable tensors are parameters; tensors with requires_grad=False are
    buffers (e.g. batch-norm running statistics). Lists of modules are named
    ``attr0``, ``attr1``, ...
    """

    def _children(self):
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Tensor, Module)):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, v in enumerate(value):
                    yield f"{name}{i}", v

    def named_tensors(self, prefix=""):
        for name, value in self._children():
            path = f"{prefix}{name}"
            if isinstance(value, Tensor):
                yield path, value
            else:
                yield from value.named_tensors(path + "/")

    def parameters(self):
        return OrderedDict((n, t) for n, t in self.named_tensors() if t.requires_grad)

    def buffers(self):
        return OrderedDict((n, t) for n, t in self.named_tensors() if not t.requires_grad)

    def zero_grad(self):
        for t in self.parameters().values():
            t.grad = None


class Linear(Module):
    def __init__(self, d_in, d_out, rng):
        self.w = xavier(rng, d_in, d_out)
        self.b = zeros(d_out)

    def __call__(self, x):
        return T.linear(x, self.w, self.b)


class Embedding(Module):
    def __init__(self, vocab, dim, rng):
        self.table = Tensor(rng.normal(0.0, dim ** -0.5, size=(vocab, dim)), requires_grad=True)

    def __call__(self, indices):
        return T.embedding(self.table, indices)


class LayerNorm(Module):
    def __init__(self, dim):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = zeros(dim)

    def __call__(self, x):
        return T.layer_norm(x, self.gamma, self.beta)


class BatchNorm(Module):
    def __init__(self, dim, momentum=0.9):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = zeros(dim)
        self.running_mean = Tensor(np.zeros(dim))
        self.running_var = Tensor(np.ones(dim))
        self._momentum = momentum

    def __call__(self, x, training):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean,
                            self.running_var, training, self._momentum)


class MLP(Module):
    """Stack of Linear layers with an activation between them (not after the last)."""

    def __init__(self, dims, rng, activation=T.relu):
        self.layer = [Linear(a, b, rng) for a, b in zip(dims[:-1], dims[1:])]
        self._act = activation

    def __call__(self, x):
        for i, lin in enumerate(self.layer):
            x = lin(x)
            if i < len(self.layer) - 1:
                x = self._act(x)
        return x


def multi_head_attention(x, heads, q, k, v, out, mask=None):
    """Scaled dot-product self-attention over a (batch, seq, d_model) tensor.

    `mask` is a boolean (batch, seq) array marking real (non-padding) steps;
    padded keys receive exactly zero attention weight.
    Returns the output and the attention weights (batch, heads, seq, seq).
    """
    B, L, d = x.shape
    if d % heads:
        raise IndivisibleHeads(d, heads)
    dh = d // heads

    def split(t):
        return T.transpose(T.reshape(t, (B, L, heads, dh)), (0, 2, 1, 3))

    qh, kh, vh = split(q(x)), split(k(x)), split(v(x))
    scores = T.matmul(qh, T.transpose(kh, (0, 1, 3, 2))) * (1.0 / np.sqrt(dh))
    key_mask = None if mask is None else mask[:, None, None, :]
    weights = T.softmax(scores, axis=-1, mask=key_mask)
    ctx = T.matmul(weights, vh)
    ctx = T.reshape(T.transpose(ctx, (0, 2, 1, 3)), (B, L, d))
    return out(ctx), weights


class MultiHeadAttention(Module):
    def __init__(self, d_model, heads, rng):
        if d_model % heads:
            raise IndivisibleHeads(d_model, heads)
        self.w_q = Linear(d_model, d_model, rng)
        self.w_k = Linear(d_model, d_model, rng)
        self.w_v = Linear(d_model, d_model, rng)
        self.w_o = Linear(d_model, d_model, rng)
        self._heads = heads

    def __call__(self, x, mask=None, return_weights=False):
        y, w = multi_head_attention(x, self._heads, self.w_q, self.w_k, self.w_v, self.w_o, mask)
        return (y, w) if return_weights else y


class EncoderLayer(Module):
    """Post-norm Transformer block: MHA and a ReLU feed-forward, each with residual + LayerNorm."""

    def __init__(self, d_model, heads, ff_dim, dropout, rng):
        self.mha = MultiHeadAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, ff_dim, rng)
        self.ff2 = Linear(ff_dim, d_model, rng)
        self.norm2 = LayerNorm(d_model)
        self._p = dropout

    def __call__(self, x, mask, training, rng):
        a = T.dropout(self.mha(x, mask), self._p, training, rng)
        x = self.norm1(x + a)
        f = self.ff2(T.relu(self.ff1(x)))
        f = T.dropout(f, self._p, training, rng)
        return self.norm2(x + f)


class Encoder(Module):
    def __init__(self, layers, d_model, heads, ff_dim, dropout, rng):
        self.encoder = [EncoderLayer(d_model, heads, ff_dim, dropout, rng) for _ in range(layers)]

    def __call__(self, x, mask, training, rng):
        for layer in self.encoder:
            x = layer(x, mask, training, rng)
        return x


def lstm_layer(x, w, u, b):
    """Run an LSTM over a (batch, seq, d_in) tensor from zero initial state.

    Gate layout along the 4*hidden axis is (input, forget, cell, output).
    Returns (hidden sequence (batch, seq, hidden), last hidden (batch, hidden)).
    """
    if x.ndim != 3:
        raise ShapeMismatch("lstm_layer", x.shape, ("batch", "seq", "d_in"))
    B, L, _ = x.shape
    hsz = u.shape[0]
    if w.shape != (x.shape[2], 4 * hsz) or u.shape != (hsz, 4 * hsz) or b.shape != (4 * hsz,):
        raise ShapeMismatch("lstm_layer", (w.shape, u.shape, b.shape), (x.shape[2], 4 * hsz))
    xw = T.linear(x, w, b)
    h = Tensor(np.zeros((B, hsz)))
    c = Tensor(np.zeros((B, hsz)))
    hs = []
    for t in range(L):
        z = xw[:, t, :]
        if t:
            z = z + T.matmul(h, u)
        i = T.sigmoid(z[:, :hsz])
        f = T.sigmoid(z[:, hsz:2 * hsz])
        g = T.tanh(z[:, 2 * hsz:3 * hsz])
        o = T.sigmoid(z[:, 3 * hsz:])
        c = i * g if t == 0 else f * c + i * g
        h = o * T.tanh(c)
        hs.append(T.reshape(h, (B, 1, hsz)))
    return T.concat(hs, axis=1), h


class LSTM(Module):
    def __init__(self, d_in, hidden, rng):
        self.w = xavier(rng, d_in, 4 * hidden)
        self.u = xavier(rng, hidden, 4 * hidden)
        self.b = zeros(4 * hidden)

    def __call__(self, x):
        return lstm_layer(x, self.w, self.u, self.b)


def sinusoidal_positions(length, dim):
    pos = np.arange(length)[:, None]
    rate = 1.0 / np.power(10000.0, (2 * (np.arange(dim) // 2)) / dim)
    angles = pos * rate[None, :]
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angles[:, 0::2])
    pe[:, 1::2] = np.cos(angles[:, 1::2])
    return pe
