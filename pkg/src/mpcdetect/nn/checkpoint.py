"""Binary parameter checkpoints.

Layout (version 1)::

    MPCDETECT-CHECKPOINT 1\n
    <count>\n
    then per parameter, in module registration order:
    <name> <ndim> <dim_0> ... <dim_{n-1}>\n
    <prod(dims) little-endian float64 values, row-major>

Header lines are ASCII. Writing is deterministic, so identical parameters
produce identical bytes.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from ..errors import DataError

MAGIC = b"MPCDETECT-CHECKPOINT"
VERSION = 1


def dumps(named_arrays) -> bytes:
    items = list(named_arrays.items() if hasattr(named_arrays, "items") else named_arrays)
    buf = io.BytesIO()
    buf.write(MAGIC + b" %d\n" % VERSION)
    buf.write(b"%d\n" % len(items))
    for name, arr in items:
        arr = np.ascontiguousarray(arr, dtype="<f8")
        if " " in name or "\n" in name:
            raise DataError(f"invalid parameter name {name!r}")
        dims = " ".join(str(d) for d in arr.shape)
        buf.write(f"{name} {arr.ndim} {dims}".rstrip().encode("ascii") + b"\n")
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict:
    buf = io.BytesIO(blob)

    def line():
        raw = buf.readline()
        if not raw.endswith(b"\n"):
            raise DataError("truncated checkpoint header")
        return raw[:-1].decode("ascii")

    head = line().split()
    if len(head) != 2 or head[0].encode() != MAGIC:
        raise DataError("not a checkpoint file")
    if int(head[1]) != VERSION:
        raise DataError(f"unsupported checkpoint version {head[1]}")
    out = {}
    for _ in range(int(line())):
        parts = line().split()
        name, ndim = parts[0], int(parts[1])
        shape = tuple(int(d) for d in parts[2:2 + ndim])
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        data = buf.read(8 * n)
        if len(data) != 8 * n:
            raise DataError(f"truncated values for {name}")
        out[name] = np.frombuffer(data, dtype="<f8").reshape(shape).astype(np.float64)
    return out


def save(named_arrays, path):
    Path(path).write_bytes(dumps(named_arrays))


def load(path) -> dict:
    return loads(Path(path).read_bytes())
