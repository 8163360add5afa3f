import numpy as np


def lr_at(schedule, epoch):
    """Piecewise-constant rate: ``schedule`` is ascending (start_epoch, lr) pairs."""
    lr = schedule[0][1]
    for start, rate in schedule:
        if epoch >= start:
            lr = rate
    return lr


class Adam:
    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.tensors.items()}
        self.t = 0

    def step(self, grads, lr):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for k, p in self.params.tensors.items():
            g = grads[k].astype(p.dtype, copy=False)
            m = self.m[k]
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            p -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
        self.params.bump()
