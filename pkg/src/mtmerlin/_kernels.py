"""Hot inner loops, each in two flavours: numba ``@njit`` and plain numpy.

The numba versions are used when numba imports cleanly, unless the
environment variable ``MTMERLIN_KERNELS=numpy`` is set. Both paths produce
bit-identical results (same accumulation order); ``benchmarks/bench_kernels.py``
compares their speed.

Array conventions: feature maps are NHWC, float32 or float64.
"""
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False

_OFFSETS = [(dy, dx) for dy in range(3) for dx in range(3)]


# ---------------------------------------------------------------- numpy path

def im2col3x3_np(xp):
    """(N, H+2, W+2, C) padded input -> (N, H, W, 9, C) patch tensor."""
    n, hp, wp, c = xp.shape
    h, w = hp - 2, wp - 2
    cols = np.empty((n, h, w, 9, c), dtype=xp.dtype)
    for k, (dy, dx) in enumerate(_OFFSETS):
        cols[:, :, :, k, :] = xp[:, dy:dy + h, dx:dx + w, :]
    return cols


def col2im3x3_np(cols):
    n, h, w, _, c = cols.shape
    xp = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
    for k, (dy, dx) in enumerate(_OFFSETS):
        xp[:, dy:dy + h, dx:dx + w, :] += cols[:, :, :, k, :]
    return xp


def maxpool2_np(x):
    """2x2 max-pool. Returns pooled map and the winning offset (0..3) per output."""
    n, h, w, c = x.shape
    blocks = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    blocks = blocks.reshape(n, h // 2, w // 2, 4, c)
    idx = np.argmax(blocks, axis=3).astype(np.int8)
    y = np.take_along_axis(blocks, idx[:, :, :, None, :].astype(np.intp), axis=3)[:, :, :, 0, :]
    return y, idx


def maxpool2_backward_np(dy, idx):
    n, h2, w2, c = dy.shape
    onehot = idx[:, :, :, None, :] == np.arange(4, dtype=np.int8)[None, None, None, :, None]
    dblocks = onehot * dy[:, :, :, None, :]
    dx = dblocks.reshape(n, h2, w2, 2, 2, c).transpose(0, 1, 3, 2, 4, 5)
    return dx.reshape(n, 2 * h2, 2 * w2, c).astype(dy.dtype, copy=False)


def box_sum_np(img, half):
    """Sum over a (2*half+1)^2 window clipped at the borders, via an integral image."""
    h, w = img.shape
    ii = np.zeros((h + 1, w + 1), dtype=img.dtype)
    ii[1:, 1:] = img.cumsum(0).cumsum(1)
    y0 = np.clip(np.arange(h) - half, 0, h)
    y1 = np.clip(np.arange(h) + half + 1, 0, h)
    x0 = np.clip(np.arange(w) - half, 0, w)
    x1 = np.clip(np.arange(w) + half + 1, 0, w)
    return (ii[y1][:, x1] - ii[y0][:, x1] - ii[y1][:, x0] + ii[y0][:, x0])


def strict_local_max_np(a):
    """True where a pixel exceeds all of its (in-bounds) 8 neighbours."""
    h, w = a.shape
    p = np.full((h + 2, w + 2), -np.inf)
    p[1:-1, 1:-1] = a
    out = np.ones((h, w), dtype=bool)
    for dy, dx in _OFFSETS:
        if dy == 1 and dx == 1:
            continue
        out &= a > p[dy:dy + h, dx:dx + w]
    return out


# ---------------------------------------------------------------- numba path

if HAS_NUMBA:
    @numba.njit(cache=True)
    def im2col3x3_nb(xp):
        n, hp, wp, c = xp.shape
        h, w = hp - 2, wp - 2
        cols = np.empty((n, h, w, 9, c), dtype=xp.dtype)
        for b in range(n):
            for i in range(h):
                for j in range(w):
                    k = 0
                    for dy in range(3):
                        for dx in range(3):
                            for ch in range(c):
                                cols[b, i, j, k, ch] = xp[b, i + dy, j + dx, ch]
                            k += 1
        return cols

    @numba.njit(cache=True)
    def col2im3x3_nb(cols):
        n, h, w, _, c = cols.shape
        xp = np.zeros((n, h + 2, w + 2, c), dtype=cols.dtype)
        # offset-major loop keeps the summation order of the numpy path
        k = 0
        for dy in range(3):
            for dx in range(3):
                for b in range(n):
                    for i in range(h):
                        for j in range(w):
                            for ch in range(c):
                                xp[b, i + dy, j + dx, ch] += cols[b, i, j, k, ch]
                k += 1
        return xp

    @numba.njit(cache=True)
    def maxpool2_nb(x):
        n, h, w, c = x.shape
        y = np.empty((n, h // 2, w // 2, c), dtype=x.dtype)
        idx = np.empty((n, h // 2, w // 2, c), dtype=np.int8)
        for b in range(n):
            for i in range(h // 2):
                for j in range(w // 2):
                    for ch in range(c):
                        best = x[b, 2 * i, 2 * j, ch]
                        arg = 0
                        for q in range(1, 4):
                            v = x[b, 2 * i + q // 2, 2 * j + q % 2, ch]
                            if v > best:
                                best = v
                                arg = q
                        y[b, i, j, ch] = best
                        idx[b, i, j, ch] = arg
        return y, idx

    @numba.njit(cache=True)
    def maxpool2_backward_nb(dy, idx):
        n, h2, w2, c = dy.shape
        dx = np.zeros((n, 2 * h2, 2 * w2, c), dtype=dy.dtype)
        for b in range(n):
            for i in range(h2):
                for j in range(w2):
                    for ch in range(c):
                        q = idx[b, i, j, ch]
                        dx[b, 2 * i + q // 2, 2 * j + q % 2, ch] = dy[b, i, j, ch]
        return dx

    @numba.njit(cache=True)
    def _box_sum_nb(img, half):
        h, w = img.shape
        ii = np.zeros((h + 1, w + 1), dtype=img.dtype)
        for i in range(h):
            for j in range(w):
                ii[i + 1, j + 1] = img[i, j]
        # same cumulative order as cumsum(0).cumsum(1)
        for i in range(1, h + 1):
            for j in range(1, w + 1):
                ii[i, j] += ii[i - 1, j]
        for i in range(1, h + 1):
            for j in range(1, w + 1):
                ii[i, j] += ii[i, j - 1]
        out = np.empty((h, w), dtype=img.dtype)
        for i in range(h):
            y0 = max(i - half, 0)
            y1 = min(i + half + 1, h)
            for j in range(w):
                x0 = max(j - half, 0)
                x1 = min(j + half + 1, w)
                out[i, j] = ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]
        return out

    def box_sum_nb(img, half):
        return _box_sum_nb(np.ascontiguousarray(img), half)

    @numba.njit(cache=True)
    def strict_local_max_nb(a):
        h, w = a.shape
        out = np.zeros((h, w), dtype=np.bool_)
        for i in range(h):
            for j in range(w):
                v = a[i, j]
                ok = True
                for dy in range(-1, 2):
                    for dx in range(-1, 2):
                        if dy == 0 and dx == 0:
                            continue
                        y, x = i + dy, j + dx
                        if 0 <= y < h and 0 <= x < w and not v > a[y, x]:
                            ok = False
                out[i, j] = ok
        return out


def backend():
    if HAS_NUMBA and os.environ.get("MTMERLIN_KERNELS", "numba").lower() != "numpy":
        return "numba"
    return "numpy"


_IMPLS = {
    "numpy": dict(im2col3x3=im2col3x3_np, col2im3x3=col2im3x3_np,
                  maxpool2=maxpool2_np, maxpool2_backward=maxpool2_backward_np,
                  box_sum=box_sum_np, strict_local_max=strict_local_max_np),
}
if HAS_NUMBA:
    _IMPLS["numba"] = dict(im2col3x3=im2col3x3_nb, col2im3x3=col2im3x3_nb,
                           maxpool2=maxpool2_nb, maxpool2_backward=maxpool2_backward_nb,
                           box_sum=box_sum_nb, strict_local_max=strict_local_max_nb)


def get(name, which=None):
    """Return kernel ``name`` for backend ``which`` (default: active backend)."""
    return _IMPLS[which or backend()][name]


def im2col3x3(xp):
    return get("im2col3x3")(xp)


def col2im3x3(cols):
    return get("col2im3x3")(cols)


def maxpool2(x):
    return get("maxpool2")(x)


def maxpool2_backward(dy, idx):
    return get("maxpool2_backward")(dy, idx)


def box_sum(img, half):
    return get("box_sum")(img, half)


def strict_local_max(a):
    return get("strict_local_max")(a)
