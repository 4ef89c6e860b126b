"""LPNW binary checkpoint format.

Layout, all integers little-endian::

    b"LPNW"  u16 version (=1)  u16 tensor count
    per tensor: u8 name length, name (ASCII), u8 rank, u32 dims[rank],
                float32 data (row-major)
    u32 CRC32 of every preceding byte
"""
import struct
import zlib

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    LayoutMismatchError,
    TruncatedCheckpointError,
    UnsupportedVersionError,
)
from .model import param_shapes

MAGIC = b"LPNW"
VERSION = 1
_F32 = np.dtype("<f4")


def encode(params):
    """Serialize an ordered name -> array mapping to LPNW bytes."""
    out = bytearray(MAGIC)
    out += struct.pack("<HH", VERSION, len(params))
    for name, arr in params.items():
        raw = name.encode("ascii")
        if not 0 < len(raw) < 256:
            raise ValueError(f"tensor name {name!r} must be 1-255 ASCII bytes")
        if not 1 <= arr.ndim < 256:
            raise ValueError(f"{name}: unsupported rank {arr.ndim}")
        out += struct.pack("<B", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += np.ascontiguousarray(arr, dtype=_F32).tobytes()
    out += struct.pack("<I", zlib.crc32(out) & 0xFFFFFFFF)
    return bytes(out)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: need {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode(data, spec=None):
    """Parse LPNW bytes into a name -> float32 array dict.

    With ``spec`` given, tensor names, order and shapes must match it.
    """
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:4])!r}, expected {MAGIC!r}")
    r = _Reader(data)
    r.take(4)
    version, count = r.unpack("<HH")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported LPNW version {version}")
    params = {}
    for _ in range(count):
        (name_len,) = r.unpack("<B")
        name = r.take(name_len).decode("ascii", errors="replace")
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}I")
        n = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(r.take(4 * n), dtype=_F32).astype(np.float32).reshape(dims)
        params[name] = arr
    body_end = r.pos
    (stored,) = r.unpack("<I")
    if r.pos != len(data):
        raise TruncatedCheckpointError(f"{len(data) - r.pos} unexpected trailing bytes")
    actual = zlib.crc32(data[:body_end]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumError(f"CRC32 mismatch: stored {stored:#010x}, computed {actual:#010x}")
    if spec is not None:
        check_layout(params, spec)
    return params


def check_layout(params, spec):
    expected = param_shapes(spec)
    got = [(k, tuple(v.shape)) for k, v in params.items()]
    if got != expected:
        exp_names = [k for k, _ in expected]
        got_names = [k for k, _ in got]
        if exp_names != got_names:
            raise LayoutMismatchError(f"tensor names {got_names} do not match {exp_names}")
        bad = [f"{k}: {g} != {e}" for (k, g), (_, e) in zip(got, expected) if g != e]
        raise LayoutMismatchError("shape mismatch: " + "; ".join(bad))


def save_weights(params, path):
    data = encode(params)
    with open(path, "wb") as fh:
        fh.write(data)
    return path


def load_weights(path, spec=None):
    with open(path, "rb") as fh:
        data = fh.read()
    return decode(data, spec)
