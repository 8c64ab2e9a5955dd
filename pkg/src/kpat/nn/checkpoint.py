"""Binary parameter checkpoints.

Layout (little-endian): magic ``PATW``, u32 version, u32 parameter count,
then per parameter: u16 name length, UTF-8 name, u8 rank, u32 dims, float32
data in row-major order.
"""
import hashlib
import struct

import numpy as np

MAGIC = b"PATW"
VERSION = 1


class CheckpointError(ValueError):
    pass


def serialize(named_arrays):
    out = [MAGIC, struct.pack("<II", VERSION, len(named_arrays))]
    for name, arr in named_arrays:
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out.append(struct.pack("<H", len(raw)))
        out.append(raw)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def deserialize(buf):
    if buf[:4] != MAGIC:
        raise CheckpointError("not a PATW checkpoint")
    version, count = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = 12
    out = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (rank,) = struct.unpack_from("<B", buf, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", buf, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
        pos += 4 * size
        out.append((name, arr))
    if pos != len(buf):
        raise CheckpointError("trailing bytes after last parameter")
    return out


def save(path, module):
    data = serialize([(n, p.data) for n, p in module.named_parameters()])
    with open(path, "wb") as f:
        f.write(data)
    return hashlib.sha256(data).digest()


def load_into(path, module):
    with open(path, "rb") as f:
        buf = f.read()
    params = dict(module.named_parameters())
    loaded = deserialize(buf)
    if set(n for n, _ in loaded) != set(params):
        raise CheckpointError("checkpoint parameter names do not match the model")
    for name, arr in loaded:
        p = params[name]
        if p.data.shape != arr.shape:
            raise CheckpointError(f"{name}: shape {arr.shape} != model {p.data.shape}")
        p.data = arr.astype(p.data.dtype)
    return hashlib.sha256(buf).digest()


def checksum(module):
    """SHA-256 of the module's serialized parameters (identifies key spaces)."""
    return hashlib.sha256(serialize([(n, p.data) for n, p in module.named_parameters()])).digest()
