"""Adam with bias correction, plus the step-decay schedule used for training."""

import numpy as np


class Adam:
    """Holds (name, Tensor) parameter pairs and per-parameter moment state.

    Parameters whose .grad is absent are skipped by step(), which is how
    frozen or unused components stay untouched.  The learning rate is a
    plain attribute so a schedule can overwrite it between epochs.
    """

    def __init__(self, named_params, lr=2e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.named_params = list(named_params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for _, p in self.named_params]
        self._v = [np.zeros_like(p.data) for _, p in self.named_params]

    def zero_grad(self):
        for _, p in self.named_params:
            p.grad = None

    def step(self):
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for i, (name, p) in enumerate(self.named_params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient in '{name}'")
            m = self._m[i]
            v = self._v[i]
            m += (1.0 - self.beta1) * (g - m)
            v += (1.0 - self.beta2) * (g * g - v)
            p.data -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def lr_at(epoch, lr0, decay, interval):
    """Step decay: lr0 * decay^floor(epoch/interval), epochs counted from 0."""
    if interval <= 0:
        raise ValueError(f"decay interval must be positive, got {interval}")
    return lr0 * decay ** (epoch // interval)
