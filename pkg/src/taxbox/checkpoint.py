"""Binary checkpoint container for named float32 arrays.

Layout: 4-byte magic, u32 version, u32 record count, then per record
(u32 name length, name bytes, u32 rank, u32*rank shape, little-endian
float32 payload in C order). Records are written in sorted name order so
identical contents always serialize to identical bytes.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"TXBC"
VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(arrays)))
        for name in sorted(arrays):
            # asarray keeps rank-0 arrays rank 0 (ascontiguousarray would not)
            arr = np.asarray(arrays[name], dtype="<f4", order="C")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            name = raw[offset:offset + name_len].decode("utf-8")
            offset += name_len
            (rank,) = struct.unpack_from("<I", raw, offset)
            offset += 4
            shape = struct.unpack_from(f"<{rank}I", raw, offset)
            offset += 4 * rank
            n = int(np.prod(shape, dtype=np.int64)) if rank else 1
            payload = raw[offset:offset + 4 * n]
            if len(payload) != 4 * n:
                raise DataError(f"{path}: truncated payload for {name!r}")
            offset += 4 * n
        except struct.error as exc:
            raise DataError(f"{path}: truncated checkpoint") from exc
        arrays[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).copy()
    if offset != len(raw):
        raise DataError(f"{path}: {len(raw) - offset} trailing bytes")
    return arrays
