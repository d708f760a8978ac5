"""
DFCK checkpoint files.

Layout (little endian): magic b"DFCK", version u32, tensor count u32, then
per tensor: name length u32, UTF-8 name, rank u32, dims (u32 each), f32 payload.
"""
import logging
import struct
from pathlib import Path

import numpy as np

from core.exceptions import CheckpointError

logger = logging.getLogger(__name__)

MAGIC = b"DFCK"
VERSION = 1


def save_checkpoint(path, state):
    """Write a name -> array mapping. Non-finite tensors are refused."""
    path = Path(path)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(state))]
    for name, array in state.items():
        array = np.asarray(array)
        if not np.isfinite(array).all():
            raise CheckpointError(f"refusing to checkpoint non-finite tensor {name!r}")
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}I", *array.shape))
        chunks.append(array.astype("<f4").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.debug("wrote %d tensors to %s", len(state), path)
    return path


class _Reader:
    def __init__(self, payload, path):
        self.payload = payload
        self.offset = 0
        self.path = path

    def take(self, size):
        if self.offset + size > len(self.payload):
            raise CheckpointError(f"{self.path}: truncated at byte {self.offset}")
        chunk = self.payload[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a DFCK checkpoint")
    version, count = reader.unpack("<II")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    state = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<I")
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.unpack("<I")
        dims = reader.unpack(f"<{rank}I")
        size = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(reader.take(4 * size), dtype="<f4").reshape(dims)
        state[name] = data.astype(np.float32)
    if reader.offset != len(reader.payload):
        raise CheckpointError(f"{path}: {len(reader.payload) - reader.offset} trailing bytes")
    return state
