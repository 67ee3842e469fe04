"""Adam and AdamW over lists of numpy arrays, updated in place."""

import numpy as np


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def _direction(self, i, g):
        self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
        self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
        m_hat = self.m[i] / (1 - self.beta1**self.t)
        v_hat = self.v[i] / (1 - self.beta2**self.t)
        return m_hat / (np.sqrt(v_hat) + self.eps)

    def step(self, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            p -= self.lr * self._direction(i, g)


class AdamW(Adam):
    """Adam with weight decay applied to the parameters, not folded into the gradient."""

    def __init__(self, params, lr=1e-3, weight_decay=0.01, **kwargs):
        super().__init__(params, lr, **kwargs)
        self.weight_decay = weight_decay

    def step(self, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            p -= self.lr * (self._direction(i, g) + self.weight_decay * p)


def make_optimizer(name, params, lr, weight_decay=0.01):
    if name == "adam":
        return Adam(params, lr)
    if name == "adamw":
        return AdamW(params, lr, weight_decay)
    raise ValueError(f"unknown optimizer {name!r}")
