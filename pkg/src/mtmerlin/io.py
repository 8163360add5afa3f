"""SLCS binary stack container.

Layout (little-endian)::

    53 4C 43 53 01 00        magic "SLCS" + version 1
    u32 T, u32 H, u32 W
    u8  dtype                0 = float32 pairs, 1 = float64 pairs
    u8  layout               0 = date-major, 1 = pixel-major
    6 zero bytes             reserved
    (re, im) pairs           in the flat order of the declared layout

Real-valued rasters (truth maps, coherence magnitudes, loss maps) are stored
in the same container with a zero imaginary part.
"""
import struct

import numpy as np

from .core import ComplexStack, Layout
from .errors import FormatError

SLCS_MAGIC = b"SLCS\x01\x00"
_HEADER = struct.Struct("<6sIIIBB6s")
HEADER_SIZE = _HEADER.size  # 26

_DTYPES = {0: (np.float32, np.complex64), 1: (np.float64, np.complex128)}


def encode_slcs(stack: ComplexStack) -> bytes:
    if stack.dtype == np.complex64:
        code = 0
    elif stack.dtype == np.complex128:
        code = 1
    else:
        raise FormatError(f"unsupported stack dtype {stack.dtype}")
    header = _HEADER.pack(SLCS_MAGIC, stack.T, stack.H, stack.W, code, int(stack.layout), bytes(6))
    real_t = _DTYPES[code][0]
    body = np.ascontiguousarray(stack.data).view(real_t).astype(np.dtype(real_t).newbyteorder("<"), copy=False)
    return header + body.tobytes()


def decode_slcs(buf: bytes) -> ComplexStack:
    if len(buf) < HEADER_SIZE:
        raise FormatError("truncated SLCS header")
    magic, T, H, W, code, layout, reserved = _HEADER.unpack_from(buf, 0)
    if magic != SLCS_MAGIC:
        raise FormatError(f"bad SLCS magic {magic!r}")
    if code not in _DTYPES:
        raise FormatError(f"unknown SLCS dtype code {code}")
    if layout not in (0, 1):
        raise FormatError(f"unknown SLCS layout code {layout}")
    if reserved != bytes(6):
        raise FormatError("SLCS reserved bytes must be zero")
    real_t, cplx_t = _DTYPES[code]
    n = T * H * W
    expected = HEADER_SIZE + 2 * n * np.dtype(real_t).itemsize
    if len(buf) != expected:
        raise FormatError(f"SLCS payload size {len(buf)} != expected {expected}")
    raw = np.frombuffer(buf, dtype=np.dtype(real_t).newbyteorder("<"), offset=HEADER_SIZE, count=2 * n)
    data = raw.astype(real_t).view(cplx_t)
    shape = (T, H, W) if layout == Layout.DATE_MAJOR else (H, W, T)
    return ComplexStack(data.reshape(shape).copy(), Layout(layout))


def write_slcs(path, stack: ComplexStack):
    with open(path, "wb") as fh:
        fh.write(encode_slcs(stack))


def read_slcs(path) -> ComplexStack:
    with open(path, "rb") as fh:
        return decode_slcs(fh.read())


def real_stack(maps, dtype=np.float64) -> ComplexStack:
    """Wrap real (T, H, W) or (H, W) maps as an SLCS-ready stack."""
    maps = np.asarray(maps, dtype=dtype)
    if maps.ndim == 2:
        maps = maps[None]
    cplx = np.complex64 if np.dtype(dtype) == np.float32 else np.complex128
    return ComplexStack.from_planes(maps.astype(cplx))


# ------------------------------------------------------------------ PGM previews

def encode_pgm16(img, comment=None, lo=None, hi=None) -> bytes:
    """Binary 16-bit PGM (P5, maxval 65535, big-endian samples).

    Values are mapped linearly from [lo, hi] (default: the image range) to
    0..65535; non-finite pixels become 0.
    """
    a = np.asarray(img, dtype=np.float64)
    if a.ndim != 2:
        raise FormatError("PGM previews are single 2-D rasters")
    finite = np.isfinite(a)
    if lo is None:
        lo = float(a[finite].min()) if finite.any() else 0.0
    if hi is None:
        hi = float(a[finite].max()) if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    q = np.clip(np.round((np.where(finite, a, lo) - lo) / span * 65535), 0, 65535).astype(">u2")
    head = "P5\n"
    if comment:
        head += "".join(f"# {line}\n" for line in str(comment).splitlines())
    head += f"{a.shape[1]} {a.shape[0]}\n65535\n"
    return head.encode("ascii") + q.tobytes()


def decode_pgm16(buf: bytes):
    """Inverse of :func:`encode_pgm16`; returns (uint16 image, comment lines)."""
    if not buf.startswith(b"P5"):
        raise FormatError("not a binary PGM")
    tokens, comments = [], []
    pos = 2
    while len(tokens) < 3:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            end = buf.index(b"\n", pos)
            comments.append(buf[pos + 1:end].decode("ascii").strip())
            pos = end + 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        tokens.append(int(buf[start:pos]))
    pos += 1
    w, h, maxval = tokens
    if maxval != 65535:
        raise FormatError("only 16-bit PGM is supported")
    if len(buf) - pos != 2 * w * h:
        raise FormatError("PGM payload size mismatch")
    return np.frombuffer(buf, dtype=">u2", offset=pos).reshape(h, w).astype(np.uint16), comments


def write_pgm16(path, img, comment=None, lo=None, hi=None):
    with open(path, "wb") as fh:
        fh.write(encode_pgm16(img, comment, lo, hi))
