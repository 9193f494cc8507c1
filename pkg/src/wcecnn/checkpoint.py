"""Binary checkpoint container shared by CNNs and the colour baseline.

Layout, all little-endian::

    b"LNET"  u16 version  u16 len + utf-8 architecture id
    u32 tensor count, then per tensor:
        u16 len + utf-8 name, u8 ndim, u32 dims..., float32 values
    u8 has_stats [u16 bands, float32 means..., float32 stds...]
    u32 len + utf-8 JSON metadata
"""

from __future__ import annotations

import io
import json
import struct

import numpy as np

from .channels import ChannelStats

MAGIC = b"LNET"
VERSION = 1


class CheckpointError(Exception):
    """Unreadable, truncated or incompatible checkpoint file."""


def _put_str(buf, text, fmt="<H"):
    raw = text.encode("utf-8")
    buf.write(struct.pack(fmt, len(raw)))
    buf.write(raw)


def dumps(arch_id, tensors, stats=None, meta=None):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    _put_str(buf, arch_id)
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        _put_str(buf, name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    if stats is None:
        buf.write(struct.pack("<B", 0))
    else:
        buf.write(struct.pack("<BH", 1, len(stats.mean)))
        buf.write(stats.mean.astype("<f4").tobytes())
        buf.write(stats.std.astype("<f4").tobytes())
    _put_str(buf, json.dumps(meta or {}, sort_keys=True), fmt="<I")
    return buf.getvalue()


class _Reader:
    def __init__(self, data, source):
        self.data, self.pos, self.source = data, 0, source

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.source}: truncated at byte {self.pos} (wanted {n} more)")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self, fmt="<H"):
        (n,) = self.unpack(fmt)
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"{self.source}: corrupt string at byte {self.pos}") from None


def loads(data, source="<bytes>"):
    """Return ``(arch_id, tensors, stats, meta)``."""
    r = _Reader(data, source)
    magic = r.take(4)
    if magic != MAGIC:
        raise CheckpointError(f"{source}: bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"{source}: unsupported format version {version} (expected {VERSION})")
    arch_id = r.string()
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        name = r.string()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if ndim else 1
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    (has_stats,) = r.unpack("<B")
    stats = None
    if has_stats:
        (bands,) = r.unpack("<H")
        mean = np.frombuffer(r.take(4 * bands), dtype="<f4")
        std = np.frombuffer(r.take(4 * bands), dtype="<f4")
        try:
            stats = ChannelStats(mean, std)
        except ValueError as exc:
            raise CheckpointError(f"{source}: {exc}") from None
    try:
        meta = json.loads(r.string("<I"))
    except json.JSONDecodeError:
        raise CheckpointError(f"{source}: corrupt metadata record") from None
    if r.pos != len(data):
        raise CheckpointError(f"{source}: {len(data) - r.pos} trailing bytes")
    return arch_id, tensors, stats, meta


def save(path, arch_id, tensors, stats=None, meta=None):
    with open(path, "wb") as fh:
        fh.write(dumps(arch_id, tensors, stats, meta))


def load(path):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except FileNotFoundError:
        raise CheckpointError(f"no checkpoint at {path}") from None
    return loads(data, source=str(path))
