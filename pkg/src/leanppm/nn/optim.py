from __future__ import annotations

import numpy as np


class Adam:
    """Bias-corrected Adam over a name -> Tensor mapping.

    Moment buffers are kept per parameter name, so the state survives across
    steps and can be inspected.
    """

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros(p.shape) for n, p in params.items()}
        self.v = {n: np.zeros(p.shape) for n, p in params.items()}

    def step(self):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def count_params(store):
    """Total number of trainable scalars in a name -> Tensor mapping."""
    return int(sum(int(np.prod(t.shape)) for t in store.values()))


def make_rng(seed):
    """PCG64 generator; every random draw in the package goes through one of these."""
    return np.random.Generator(np.random.PCG64(seed))
