"""Stack containers, layouts, unitary 2-D DFT and the seeded RNG contract."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch


class Layout(enum.IntEnum):
    DATE_MAJOR = 0   # flat order: every pixel of date 1, then date 2, ...
    PIXEL_MAJOR = 1  # flat order: every date of pixel 1, then pixel 2, ...


@dataclass(frozen=True)
class ComplexStack:
    """T x H x W complex stack.

    ``data`` has shape (T, H, W) in date-major layout and (H, W, T) in
    pixel-major layout, so that ``data.ravel()`` is the flat vector in the
    declared order.
    """
    data: np.ndarray
    layout: Layout = Layout.DATE_MAJOR
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ShapeMismatch(f"stack data must be 3-D, got shape {self.data.shape}")
        if not np.iscomplexobj(self.data):
            raise TypeError("stack data must be complex")

    @property
    def T(self):
        return self.data.shape[0] if self.layout == Layout.DATE_MAJOR else self.data.shape[2]

    @property
    def H(self):
        return self.data.shape[1] if self.layout == Layout.DATE_MAJOR else self.data.shape[0]

    @property
    def W(self):
        return self.data.shape[2] if self.layout == Layout.DATE_MAJOR else self.data.shape[1]

    @property
    def dtype(self):
        return self.data.dtype

    def planes(self):
        """Date-major (T, H, W) view (a copy when the stack is pixel-major)."""
        if self.layout == Layout.DATE_MAJOR:
            return self.data
        return np.ascontiguousarray(np.moveaxis(self.data, 2, 0))

    @classmethod
    def from_planes(cls, planes, meta=None):
        return cls(np.ascontiguousarray(planes), Layout.DATE_MAJOR, dict(meta or {}))


def permute_layout(stack: ComplexStack, target: Layout) -> ComplexStack:
    target = Layout(target)
    if stack.layout == target:
        return stack
    if target == Layout.PIXEL_MAJOR:
        data = np.ascontiguousarray(np.moveaxis(stack.data, 0, 2))
    else:
        data = np.ascontiguousarray(np.moveaxis(stack.data, 2, 0))
    return ComplexStack(data, target, dict(stack.meta))


def dft2_forward(img):
    """Unitary 2-D DFT over the last two axes."""
    return np.fft.fft2(img, norm="ortho")


def dft2_inverse(spec):
    return np.fft.ifft2(spec, norm="ortho")


def split_reim(img):
    img = np.asarray(img)
    return img.real.copy(), img.imag.copy()


def merge_reim(re, im):
    re = np.asarray(re)
    im = np.asarray(im)
    if re.shape != im.shape:
        raise ShapeMismatch(f"real/imag shapes differ: {re.shape} vs {im.shape}")
    out = np.empty(re.shape, dtype=np.result_type(re.dtype, im.dtype, np.complex64))
    out.real = re
    out.imag = im
    return out


# ----------------------------------------------------------------------- RNG

_MASK64 = (1 << 64) - 1


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngHandle:
    """Counter-based random stream identified by (seed, stream_id).

    Backed by the Philox counter-based generator keyed with both 64-bit
    words, so a stream never depends on which other streams were drawn
    before it or in which thread.
    """
    seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *path) -> "RngHandle":
        """Derive an independent sub-stream from integer labels."""
        s = self.stream_id
        for p in path:
            s = _splitmix64(s ^ _splitmix64(int(p) & _MASK64))
        return RngHandle(self.seed, s)


def as_rng(rng) -> RngHandle:
    if isinstance(rng, RngHandle):
        return rng
    return RngHandle(int(rng), 0)
