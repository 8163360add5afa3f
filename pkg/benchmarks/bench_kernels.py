"""Time every kernel under the numba and numpy backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per kernel with the best time of each backend and the ratio.
The first numba call of each kernel is excluded (compilation).
"""
import argparse
import timeit

import numpy as np

from mtmerlin import _kernels


def cases():
    g = np.random.default_rng(0)
    x = g.standard_normal((16, 34, 34, 16)).astype(np.float32)
    cols = _kernels.get("im2col3x3", "numpy")(x)
    feat = g.standard_normal((16, 32, 32, 32)).astype(np.float32)
    pooled, idx = _kernels.get("maxpool2", "numpy")(feat)
    img = g.standard_normal((256, 256)) + 1j * g.standard_normal((256, 256))
    inten = np.abs(img) ** 2
    return [
        ("im2col3x3", (x,)),
        ("col2im3x3", (cols,)),
        ("maxpool2", (feat,)),
        ("maxpool2_backward", (pooled, idx)),
        ("box_sum", (img, 3)),
        ("strict_local_max", (inten,)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])
    print(f"{'kernel':<20}" + "".join(f"{b + ' [ms]':>14}" for b in backends) + f"{'numpy/numba':>14}")
    for name, inputs in cases():
        best = {}
        for b in backends:
            fn = _kernels.get(name, b)
            fn(*inputs)  # warm-up (numba compiles here)
            best[b] = min(timeit.repeat(lambda: fn(*inputs), number=1, repeat=args.repeat)) * 1e3
        ratio = f"{best['numpy'] / best['numba']:>14.2f}" if "numba" in best else ""
        print(f"{name:<20}" + "".join(f"{best[b]:>14.3f}" for b in backends) + ratio)


if __name__ == "__main__":
    main()
