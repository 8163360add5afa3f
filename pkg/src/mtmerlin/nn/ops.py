"""Differentiable ops on NHWC arrays. Each returns (value, output variable id)."""
import numpy as np

from .. import _kernels

LEAK = 0.1


def conv3x3(tape, x, xv, w, wv, b, bv):
    """Same-size 3x3 convolution with zero padding. ``w``: (3, 3, Cin, Cout)."""
    n, h, wd, cin = x.shape
    cout = w.shape[-1]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = _kernels.im2col3x3(xp).reshape(n * h * wd, 9 * cin)
    wm = w.reshape(9 * cin, cout)
    y = (cols @ wm + b).reshape(n, h, wd, cout)

    def bwd(g, need):
        g2 = g.reshape(-1, cout)
        dx = None
        if need[0]:
            dcols = (g2 @ wm.T).reshape(n, h, wd, 9, cin)
            dx = _kernels.col2im3x3(dcols)[:, 1:-1, 1:-1, :]
        dw = (cols.T @ g2).reshape(w.shape) if need[1] else None
        db = g2.sum(axis=0) if need[2] else None
        return dx, dw, db

    return y, tape.add("conv3x3", (xv, wv, bv), bwd)


def leaky_relu(tape, x, xv, slope=LEAK):
    pos = x > 0
    y = np.where(pos, x, slope * x)

    def bwd(g, need):
        return (np.where(pos, g, slope * g),)

    return y, tape.add("leaky_relu", (xv,), bwd)


def maxpool2(tape, x, xv):
    y, idx = _kernels.maxpool2(np.ascontiguousarray(x))

    def bwd(g, need):
        return (_kernels.maxpool2_backward(np.ascontiguousarray(g), idx),)

    return y, tape.add("maxpool2", (xv,), bwd)


def upsample2(tape, x, xv):
    y = np.repeat(np.repeat(x, 2, axis=1), 2, axis=2)
    n, h, w, c = x.shape

    def bwd(g, need):
        return (g.reshape(n, h, 2, w, 2, c).sum(axis=(2, 4)),)

    return y, tape.add("upsample2", (xv,), bwd)


def concat(tape, xs, xvs):
    sizes = [x.shape[-1] for x in xs]
    y = np.concatenate(xs, axis=-1)
    bounds = np.cumsum([0] + sizes)

    def bwd(g, need):
        return tuple(g[..., bounds[i]:bounds[i + 1]] if need[i] else None for i in range(len(xs)))

    return y, tape.add("concat", tuple(xvs), bwd)


def affine(tape, x, xv, shift, scale):
    """Fixed per-channel normalisation (x - shift) * scale."""
    y = (x - shift) * scale

    def bwd(g, need):
        return (g * scale,)

    return y, tape.add("affine", (xv,), bwd)


def bias_map(tape, shape, b, bv):
    """Constant output plane filled with a learned bias."""
    y = np.broadcast_to(b, shape).copy()

    def bwd(g, need):
        return (g.reshape(-1, b.size).sum(axis=0),)

    return y, tape.add("bias", (bv,), bwd)


def exp(tape, x, xv):
    y = np.exp(x)

    def bwd(g, need):
        return (g * y,)

    return y, tape.add("exp", (xv,), bwd)
