"""Versioned binary snapshots of a ParamStore.

Layout (little endian)::

    magic   8 bytes  b"MSTRPRM\\0"
    version u32      1
    count   u32
    count x entry:
        name   u32 length + utf-8 bytes
        group  u32 length + utf-8 bytes
        ndim   u32, then ndim x u64 extents
        data   product(extents) x f64, row-major
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"MSTRPRM\0"
VERSION = 1


class SnapshotError(ValueError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(store: ParamStore) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(store))]
    for name, t in store.items():
        parts += [_pack_str(name), _pack_str(store.group(name)), struct.pack("<I", t.ndim)]
        parts.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise SnapshotError("truncated snapshot")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def text(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def loads(buf: bytes) -> ParamStore:
    r = _Reader(buf)
    if r.take(8) != MAGIC:
        raise SnapshotError("not a parameter snapshot (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    store = ParamStore()
    for _ in range(r.u32()):
        name, group = r.text(), r.text()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}Q", r.take(8 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
        store.add(name, data, group)
    if r.pos != len(buf):
        raise SnapshotError("trailing bytes after snapshot")
    return store


def save(path, store: ParamStore) -> None:
    Path(path).write_bytes(dumps(store))


def load(path) -> ParamStore:
    return loads(Path(path).read_bytes())
