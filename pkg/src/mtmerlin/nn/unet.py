"""Small U-Net regression model producing one log-intensity plane."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import as_rng
from ..errors import ShapeMismatch
from . import ops
from .tape import Tape


@dataclass(frozen=True)
class ArchSpec:
    """Encoder-decoder layout.

    Level ``l`` of the encoder has ``base_width * 2**l`` channels; the
    bottleneck has ``base_width * 2**depth``. ``bias_only`` replaces the whole
    network by a single learned constant (a degenerate model for tests).
    """
    in_channels: int
    depth: int = 2
    base_width: int = 16
    kernel: int = 3
    leak: float = 0.1
    bias_only: bool = False

    def __post_init__(self):
        if self.kernel != 3:
            raise ValueError("only 3x3 kernels are supported")
        if self.in_channels < 1 or self.depth < 0 or self.base_width < 1:
            raise ValueError(f"invalid architecture {self}")

    def layers(self):
        """Ordered (name, cin, cout) of every convolution."""
        if self.bias_only:
            return []
        B, D = self.base_width, self.depth
        out = []
        cin = self.in_channels
        for lvl in range(D):
            out.append((f"enc{lvl}", cin, B * 2 ** lvl))
            cin = B * 2 ** lvl
        out.append(("mid", cin, B * 2 ** D))
        cin = B * 2 ** D
        for lvl in reversed(range(D)):
            skip = B * 2 ** lvl
            out.append((f"dec{lvl}", cin + skip, skip))
            cin = skip
        out.append(("head", cin, 1))
        return out

    def tensor_shapes(self):
        if self.bias_only:
            return {"head.b": (1,)}
        shapes = {}
        for name, cin, cout in self.layers():
            shapes[f"{name}.w"] = (3, 3, cin, cout)
            shapes[f"{name}.b"] = (cout,)
        return shapes

    @property
    def multiple(self):
        return 2 ** self.depth


@dataclass
class EstimatorParams:
    arch: ArchSpec
    tensors: dict                       # ordered name -> array
    norm_shift: np.ndarray              # per input channel
    norm_scale: np.ndarray
    encoding: str = "log-intensity"
    meta: dict = field(default_factory=dict)
    version: int = field(default=0, compare=False)

    @property
    def dtype(self):
        return next(iter(self.tensors.values())).dtype

    @property
    def n_params(self):
        return sum(t.size for t in self.tensors.values())

    def astype(self, dtype):
        return EstimatorParams(self.arch, {k: v.astype(dtype) for k, v in self.tensors.items()},
                               self.norm_shift.astype(dtype), self.norm_scale.astype(dtype),
                               self.encoding, dict(self.meta))

    def copy(self):
        return self.astype(self.dtype)

    def bump(self):
        self.version += 1


def init_params(arch: ArchSpec, rng, dtype=np.float32, out_bias=0.0,
                norm_shift=None, norm_scale=None, encoding="log-intensity") -> EstimatorParams:
    """He-style fan-in initialisation; the head bias starts at ``out_bias``."""
    rng = as_rng(rng)
    tensors = {}
    for i, (name, shape) in enumerate(arch.tensor_shapes().items()):
        if name.endswith(".b"):
            tensors[name] = np.zeros(shape, dtype=dtype)
            continue
        fan_in = shape[0] * shape[1] * shape[2]
        std = math.sqrt(2.0 / ((1 + arch.leak ** 2) * fan_in))
        if name.startswith("head"):
            std *= 0.1
        g = rng.child(i).generator()
        tensors[name] = (g.standard_normal(shape) * std).astype(dtype)
    tensors["head.b"][...] = out_bias
    c = arch.in_channels
    shift = np.zeros(c) if norm_shift is None else np.asarray(norm_shift, dtype=np.float64)
    scale = np.ones(c) if norm_scale is None else np.asarray(norm_scale, dtype=np.float64)
    return EstimatorParams(arch, tensors, shift.astype(dtype), scale.astype(dtype), encoding)


def forward(params: EstimatorParams, x):
    """Log-output ``w`` for inputs ``x`` of shape (H, W, C) or (N, H, W, C)."""
    arch = params.arch
    single = x.ndim == 3
    x = np.asarray(x, dtype=params.dtype)
    if single:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != arch.in_channels:
        raise ShapeMismatch(f"expected (N, H, W, {arch.in_channels}) inputs, got {x.shape}")
    n, h, w, _ = x.shape
    if h % arch.multiple or w % arch.multiple:
        raise ShapeMismatch(f"spatial size {h}x{w} must be a multiple of {arch.multiple}")

    tape = Tape(params)
    T = params.tensors

    def p(key):
        return T[key], tape.param(key)

    if arch.bias_only:
        y, yv = ops.bias_map(tape, (n, h, w, 1), *p("head.b"))
    else:
        hcur, hv = ops.affine(tape, x, tape.data(), params.norm_shift, params.norm_scale)

        def conv_act(name, a, av, act=True):
            a, av = ops.conv3x3(tape, a, av, *p(f"{name}.w"), *p(f"{name}.b"))
            if act:
                a, av = ops.leaky_relu(tape, a, av, arch.leak)
            return a, av

        skips = []
        for lvl in range(arch.depth):
            hcur, hv = conv_act(f"enc{lvl}", hcur, hv)
            skips.append((hcur, hv))
            hcur, hv = ops.maxpool2(tape, hcur, hv)
        hcur, hv = conv_act("mid", hcur, hv)
        for lvl in reversed(range(arch.depth)):
            hcur, hv = ops.upsample2(tape, hcur, hv)
            hcur, hv = ops.concat(tape, [hcur, skips[lvl][0]], [hv, skips[lvl][1]])
            hcur, hv = conv_act(f"dec{lvl}", hcur, hv)
        y, yv = conv_act("head", hcur, hv, act=False)

    tape.output = yv
    tape.output_shape = y.shape
    w_out = y[..., 0]
    return (w_out[0] if single else w_out), tape
