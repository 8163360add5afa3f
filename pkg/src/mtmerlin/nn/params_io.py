"""MLP1 container for trained estimator parameters.

Layout (little-endian)::

    4D 4C 50 31                  magic "MLP1"
    arch block (28 bytes):
        u32 in_channels, u32 depth, u32 base_width, u32 kernel,
        f64 leak, u8 bias_only, u8 dtype (0 f32, 1 f64),
        u8 encoding (0 log-intensity, 1 reim), u8 reserved
    u32 n_tensors
    per tensor, in layer order (normalisation vectors last):
        u16 name length, name (ASCII), u8 ndim, u32 dims[ndim],
        raw values in the declared dtype
    u32 metadata length, metadata (UTF-8 JSON, sorted keys)
"""
import json
import struct

import numpy as np

from ..errors import FormatError
from .unet import ArchSpec, EstimatorParams

MAGIC = b"MLP1"
_ARCH = struct.Struct("<IIIIdBBBB")
_ENCODINGS = ("log-intensity", "reim")
_NORM_KEYS = ("norm.shift", "norm.scale")


def encode_params(params: EstimatorParams) -> bytes:
    a = params.arch
    dtype = params.dtype
    if dtype == np.float32:
        code = 0
    elif dtype == np.float64:
        code = 1
    else:
        raise FormatError(f"unsupported parameter dtype {dtype}")
    le = np.dtype(dtype).newbyteorder("<")
    tensors = list(params.tensors.items()) + [("norm.shift", params.norm_shift),
                                              ("norm.scale", params.norm_scale)]
    out = [MAGIC, _ARCH.pack(a.in_channels, a.depth, a.base_width, a.kernel, a.leak,
                             int(a.bias_only), code, _ENCODINGS.index(params.encoding), 0),
           struct.pack("<I", len(tensors))]
    for name, arr in tensors:
        raw = name.encode("ascii")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=le).tobytes())
    meta = json.dumps(params.meta, sort_keys=True).encode()
    out.append(struct.pack("<I", len(meta)) + meta)
    return b"".join(out)


def decode_params(buf: bytes) -> EstimatorParams:
    if buf[:4] != MAGIC:
        raise FormatError(f"bad MLP1 magic {buf[:4]!r}")
    try:
        off = 4
        cin, depth, width, kernel, leak, bias_only, code, enc, _ = _ARCH.unpack_from(buf, off)
        off += _ARCH.size
        if code not in (0, 1) or enc >= len(_ENCODINGS):
            raise FormatError("corrupt MLP1 architecture block")
        arch = ArchSpec(cin, depth, width, kernel, float(leak), bool(bias_only))
        dtype = np.float32 if code == 0 else np.float64
        le = np.dtype(dtype).newbyteorder("<")
        (n,) = struct.unpack_from("<I", buf, off)
        off += 4
        tensors = {}
        for _ in range(n):
            (ln,) = struct.unpack_from("<H", buf, off)
            off += 2
            name = buf[off:off + ln].decode("ascii")
            off += ln
            (ndim,) = struct.unpack_from("<B", buf, off)
            off += 1
            shape = struct.unpack_from(f"<{ndim}I", buf, off)
            off += 4 * ndim
            count = int(np.prod(shape)) if ndim else 1
            arr = np.frombuffer(buf, dtype=le, count=count, offset=off).astype(dtype).reshape(shape)
            off += count * le.itemsize
            tensors[name] = arr.copy()
        (ml,) = struct.unpack_from("<I", buf, off)
        off += 4
        meta = json.loads(buf[off:off + ml].decode()) if ml else {}
        off += ml
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FormatError(f"truncated or corrupt MLP1 container: {exc}") from exc
    if off != len(buf):
        raise FormatError("trailing bytes after MLP1 metadata")
    norm = [tensors.pop(k, None) for k in _NORM_KEYS]
    if any(v is None for v in norm):
        raise FormatError("MLP1 container lacks normalisation vectors")
    expected = arch.tensor_shapes()
    if {k: tuple(v.shape) for k, v in tensors.items()} != expected:
        raise FormatError("tensor shapes do not match the architecture block")
    ordered = {k: tensors[k] for k in expected}
    return EstimatorParams(arch, ordered, norm[0], norm[1], _ENCODINGS[enc], meta)


def save_params(path, params):
    with open(path, "wb") as fh:
        fh.write(encode_params(params))


def load_params(path):
    with open(path, "rb") as fh:
        return decode_params(fh.read())
