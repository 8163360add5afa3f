"""Independent reference computations, frozen to ``frozen.json``.

Written with plain Python loops and the ``cmath`` module only; nothing from
the package under test is imported. Run once and commit the JSON:

    python3 tests/oracles/make_frozen.py
"""
import cmath
import json
import math
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))


def cplx(z):
    return [z.real, z.imag]


def direct_dft2(img, inverse=False):
    """Unitary 2-D DFT by the defining double sum."""
    h, w = len(img), len(img[0])
    sgn = 1 if inverse else -1
    out = [[0j] * w for _ in range(h)]
    for u in range(h):
        for v in range(w):
            acc = 0j
            for y in range(h):
                for x in range(w):
                    acc += img[y][x] * cmath.exp(sgn * 2j * math.pi * (u * y / h + v * x / w))
            out[u][v] = acc / math.sqrt(h * w)
    return out


def hamming_window_1d(n, taper, oversampling):
    """Raised-cosine window over the band |f| <= 1/(2 oversampling) cycles/sample, FFT order."""
    width = n / oversampling                        # band width in frequency bins
    out = []
    for k in range(n):
        f = k if k < (n + 1) // 2 else k - n        # signed frequency index
        if abs(f) <= width / 2 + 1e-9:
            x = f / width                           # in (-1/2, 1/2)
            out.append(taper + (1 - taper) * math.cos(2 * math.pi * x))
        else:
            out.append(0.0)
    return out


def apodized_impulse(n, taper, oversampling):
    """Spatial response of Q for an impulse at the origin: inverse DFT of W, W normalised to mean|W|^2 = 1."""
    wy = hamming_window_1d(n, taper, oversampling[0])
    wx = hamming_window_1d(n, taper, oversampling[1])
    W = [[wy[u] * wx[v] for v in range(n)] for u in range(n)]
    p = sum(abs(W[u][v]) ** 2 for u in range(n) for v in range(n)) / (n * n)
    W = [[W[u][v] / math.sqrt(p) for v in range(n)] for u in range(n)]
    # Q = F^-1 diag(W) F ; F(delta) = 1/n everywhere (unitary)
    spec = [[W[u][v] / n for v in range(n)] for u in range(n)]
    return direct_dft2(spec, inverse=True)


def hand_cholesky(a):
    n = len(a)
    L = [[0j] * n for _ in range(n)]
    for j in range(n):
        s = a[j][j] - sum(abs(L[j][k]) ** 2 for k in range(j))
        L[j][j] = math.sqrt(s.real)
        for i in range(j + 1, n):
            L[i][j] = (a[i][j] - sum(L[i][k] * L[j][k].conjugate() for k in range(j))) / L[j][j]
    return L


def gamma_bar(gamma):
    t = len(gamma)
    return sum(abs(gamma[i][j]) for i in range(t) for j in range(t)) / t ** 2


def exp_coherence(dates, tau):
    return [[math.exp(-abs(a - b) / tau) for b in dates] for a in dates]


def conv3x3_same(x, k):
    """Zero-padded 'same' correlation, single channel."""
    h, w = len(x), len(x[0])
    out = [[0.0] * w for _ in range(h)]
    for i in range(h):
        for j in range(w):
            acc = 0.0
            for dy in range(3):
                for dx in range(3):
                    y, xx = i + dy - 1, j + dx - 1
                    if 0 <= y < h and 0 <= xx < w:
                        acc += x[y][xx] * k[dy][dx]
            out[i][j] = acc
    return out


def main():
    rnd = random.Random(20240611)
    frozen = {}

    # index map of a (T=2, H=1, W=2) date-major -> pixel-major permutation
    frozen["permute_T2H1W2"] = ["z11", "z21", "z12", "z22"]

    # unitary DFT of an impulse on a 4x4 grid
    delta = [[1.0 if (y, x) == (0, 0) else 0.0 for x in range(4)] for y in range(4)]
    frozen["dft_impulse_4x4"] = [[cplx(v) for v in row] for row in direct_dft2(delta)]

    # random 5x3 image and its DFT
    img = [[complex(rnd.gauss(0, 1), rnd.gauss(0, 1)) for _ in range(3)] for _ in range(5)]
    frozen["dft_random_in"] = [[cplx(v) for v in row] for row in img]
    frozen["dft_random_out"] = [[cplx(v) for v in row] for row in direct_dft2(img)]

    # coherence model
    frozen["exp_coherence_one_tau"] = math.exp(-1.0)
    frozen["gamma_bar_T2_half"] = gamma_bar([[1, 0.5], [0.5, 1]])
    grid = {}
    for tau in (0.25, 0.5, 1.0, 2.0, 5.0):
        g = exp_coherence([0, 1, 2], tau)
        off = sum(g[i][j] for i in range(3) for j in range(3) if i != j) / 6
        grid[str(tau)] = [gamma_bar(g), off]
    frozen["gamma_bar_T3_grid"] = grid
    irregular = [0.0, 0.7, 3.1, 4.0]
    frozen["gamma_bar_irregular"] = dict(dates=irregular, tau=1.7,
                                         value=gamma_bar(exp_coherence(irregular, 1.7)))

    frozen["cholesky_2x2"] = [[v.real for v in row] for row in hand_cholesky([[1, 0.6], [0.6, 1]])]
    herm = [[1, 0.3 + 0.4j, 0.1j], [0.3 - 0.4j, 1, 0.2], [-0.1j, 0.2, 1]]
    frozen["cholesky_3x3_in"] = [[cplx(complex(v)) for v in row] for row in herm]
    frozen["cholesky_3x3_out"] = [[cplx(v) for v in row] for row in hand_cholesky(herm)]

    # SAR response: impulse through the apodized, oversampled Q
    frozen["apodized_impulse_8"] = dict(
        n=8, taper=0.54, oversampling=[1.6, 1.6],
        kernel=[[cplx(v) for v in row] for row in apodized_impulse(8, 0.54, (1.6, 1.6))])
    frozen["apodized_impulse_9"] = dict(
        n=9, taper=0.54, oversampling=[1.0, 2.0],
        kernel=[[cplx(v) for v in row] for row in apodized_impulse(9, 0.54, (1.0, 2.0))])

    # whitening by hand: gamma = 0.8, z_ref = 1, z_i = 0.8
    tau_w = 1 / math.sqrt(1 - 0.8 ** 2)
    frozen["whiten_hand"] = dict(tau_w=tau_w, out=tau_w * 0.8 - tau_w * 0.8 * 1.0)

    # MERLIN loss arithmetic
    frozen["loss_a2_u4"] = 0.5 * math.log(4) + 4 / 4
    frozen["grad_a1_w_ln2"] = 0.5 - 1 * math.exp(-math.log(2))
    r_t, d = 2.0, 3 + 4j
    frozen["optimal_uv"] = dict(u=r_t + 2 * d.imag ** 2, v=r_t + 2 * d.real ** 2,
                                combined=r_t + abs(d) ** 2)

    # PSNR
    frozen["psnr_offset1_peak10"] = 10 * math.log10(10 ** 2 / 1 ** 2)
    frozen["psnr_doubling_drop"] = 20 * math.log10(2)

    # bilinear profile on an affine image 2 + 0.5 r - 0.25 c from (1, 1) to (5, 4)
    r0, c0, r1, c1 = 1.0, 1.0, 5.0, 4.0
    length = math.hypot(r1 - r0, c1 - c0)
    n = int(math.floor(length)) + 1
    ss = [i / length for i in range(n)]
    if ss[-1] < 1:
        ss.append(1.0)
    frozen["profile_affine"] = [2 + 0.5 * (r0 + s * (r1 - r0)) - 0.25 * (c0 + s * (c1 - c0)) for s in ss]

    # direct 3x3 convolution
    x = [[rnd.uniform(-1, 1) for _ in range(6)] for _ in range(5)]
    k = [[rnd.uniform(-1, 1) for _ in range(3)] for _ in range(3)]
    frozen["conv_in"] = x
    frozen["conv_kernel"] = k
    frozen["conv_out"] = conv3x3_same(x, k)

    with open(os.path.join(HERE, "frozen.json"), "w") as fh:
        json.dump(frozen, fh, indent=1, sort_keys=True)


if __name__ == "__main__":
    main()
