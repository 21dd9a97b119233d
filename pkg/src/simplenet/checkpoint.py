"""Self-describing binary checkpoints (format version 1).

Layout, all integers little-endian::

    b"SNCP"  u32 version=1
    u32 len  arch text (UTF-8)
    u32 tensor_count
    per tensor, parameters first then running statistics, in network order:
        u16 len  name (UTF-8)
        u8 rank  u32 dim * rank
        float32 values, little-endian, row-major
    u32 CRC32 of every byte before it
"""
from __future__ import annotations

import struct
import zlib

import numpy as np

from .archspec import ArchError, parse_arch
from .network import Network, build

MAGIC = b"SNCP"
VERSION = 1


class CheckpointError(ValueError):
    code = 10


class NotACheckpointError(CheckpointError):
    code = 11


class VersionMismatchError(CheckpointError):
    code = 12


class CrcMismatchError(CheckpointError):
    code = 13


class ArchMismatchError(CheckpointError):
    code = 14


def dumps(net: Network) -> bytes:
    arch = net.arch_text().encode("utf-8")
    state = net.state()
    parts = [MAGIC, struct.pack("<II", VERSION, len(arch)), arch, struct.pack("<I", len(state))]
    for name, value in state.items():
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)) + raw_name)
        parts.append(struct.pack(f"<B{value.ndim}I", value.ndim, *value.shape))
        parts.append(np.ascontiguousarray(value, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def save_ckpt(net: Network, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(net))


class _Reader:
    def __init__(self, raw: bytes):
        self.raw, self.pos = raw, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError("truncated checkpoint")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(raw: bytes) -> Network:
    if raw[:4] != MAGIC:
        raise NotACheckpointError("not a checkpoint (bad magic)")
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint")
    (version,) = struct.unpack("<I", raw[4:8])
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) != crc:
        raise CrcMismatchError("CRC mismatch: checkpoint is corrupted")
    reader = _Reader(body)
    reader.take(8)
    (arch_len,) = reader.unpack("<I")
    try:
        spec = parse_arch(reader.take(arch_len).decode("utf-8"))
    except (ArchError, UnicodeDecodeError) as exc:
        raise ArchMismatchError(f"embedded architecture unreadable: {exc}") from None
    net = build(spec, 0)
    state = net.state()
    (count,) = reader.unpack("<I")
    if count != len(state):
        raise ArchMismatchError(f"{count} tensors stored, architecture has {len(state)}")
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<B")
        dims = reader.unpack(f"<{rank}I")
        target = state.get(name)
        if target is None or tuple(target.shape) != dims:
            raise ArchMismatchError(f"tensor {name} {dims} does not fit the architecture")
        values = np.frombuffer(reader.take(4 * target.size), dtype="<f4").reshape(dims)
        target[...] = values
    if reader.pos != len(body):
        raise ArchMismatchError("trailing data after last tensor")
    return net


def load_ckpt(path: str) -> Network:
    with open(path, "rb") as fh:
        return loads(fh.read())
