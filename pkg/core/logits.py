"""
Teacher logit stores and logit-averaging ensembles.

File layout (little endian): magic b"DFLG", version u32, class count u32,
entry count u64, then per entry sorted by clip id: id length u16, UTF-8 id,
K float32 logits.
"""
import logging
import struct
from pathlib import Path

import numpy as np

from core.exceptions import CorruptLogitStoreError, EnsembleMismatchError, LogitStoreError

logger = logging.getLogger(__name__)

MAGIC = b"DFLG"
VERSION = 1
MAX_ID_BYTES = 0xFFFF


class LogitStore:
    def __init__(self, class_count, entries):
        if class_count < 1:
            raise LogitStoreError(f"class count must be positive, got {class_count}")
        self.class_count = int(class_count)
        self.entries = {}
        for clip_id, logits in entries.items():
            if not isinstance(clip_id, str) or not clip_id:
                raise LogitStoreError(f"clip ids must be non-empty strings, got {clip_id!r}")
            logits = np.asarray(logits, dtype=np.float32).reshape(-1)
            if logits.shape != (self.class_count,):
                raise LogitStoreError(f"{clip_id}: {logits.size} logits, store holds {self.class_count} classes")
            if not np.isfinite(logits).all():
                raise LogitStoreError(f"{clip_id}: non-finite logits")
            self.entries[clip_id] = logits

    @classmethod
    def from_arrays(cls, clip_ids, logits):
        logits = np.asarray(logits, dtype=np.float32)
        if logits.ndim != 2 or logits.shape[0] != len(clip_ids):
            raise LogitStoreError(f"{len(clip_ids)} ids for logits of shape {logits.shape}")
        if len(set(clip_ids)) != len(clip_ids):
            raise LogitStoreError("duplicate clip ids")
        return cls(logits.shape[1], dict(zip(clip_ids, logits)))

    def __len__(self):
        return len(self.entries)

    def __contains__(self, clip_id):
        return clip_id in self.entries

    def __getitem__(self, clip_id):
        try:
            return self.entries[clip_id]
        except KeyError:
            raise LogitStoreError(f"no logits stored for clip {clip_id!r}") from None

    def __eq__(self, other):
        if not isinstance(other, LogitStore):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.entries.keys() == other.entries.keys()
            and all(np.array_equal(v, other.entries[k]) for k, v in self.entries.items())
        )

    def __repr__(self):
        return f"LogitStore(classes={self.class_count}, entries={len(self)})"

    @property
    def clip_ids(self):
        return sorted(self.entries)

    def matrix(self, clip_ids=None):
        """[len(clip_ids), K] logits in the given (default: sorted) order."""
        clip_ids = self.clip_ids if clip_ids is None else clip_ids
        if not clip_ids:
            return np.zeros((0, self.class_count), dtype=np.float32)
        return np.stack([self[c] for c in clip_ids])


def save_logits(store, path):
    path = Path(path)
    chunks = [MAGIC, struct.pack("<IIQ", VERSION, store.class_count, len(store))]
    for clip_id in store.clip_ids:
        encoded = clip_id.encode("utf-8")
        if len(encoded) > MAX_ID_BYTES:
            raise LogitStoreError(f"clip id longer than {MAX_ID_BYTES} bytes: {clip_id[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(store.entries[clip_id].astype("<f4").tobytes())
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))
    logger.info("wrote %d logit entries (K=%d) to %s", len(store), store.class_count, path)
    return path


def import_logits(path):
    path = Path(path)
    if not path.exists():
        raise LogitStoreError(f"logit store {path} does not exist")
    payload = path.read_bytes()
    header = struct.calcsize("<IIQ")
    if len(payload) < 4 + header or payload[:4] != MAGIC:
        raise CorruptLogitStoreError(f"{path}: not a DFLG logit store")
    version, k, count = struct.unpack_from("<IIQ", payload, 4)
    if version != VERSION:
        raise CorruptLogitStoreError(f"{path}: unsupported version {version}")
    if k == 0:
        raise CorruptLogitStoreError(f"{path}: zero class count")
    offset = 4 + header
    entries = {}
    for _ in range(count):
        if offset + 2 > len(payload):
            raise CorruptLogitStoreError(f"{path}: truncated after {len(entries)} entries")
        (id_len,) = struct.unpack_from("<H", payload, offset)
        offset += 2
        end = offset + id_len + 4 * k
        if end > len(payload):
            raise CorruptLogitStoreError(f"{path}: truncated after {len(entries)} entries")
        try:
            clip_id = payload[offset:offset + id_len].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptLogitStoreError(f"{path}: clip id is not valid UTF-8") from exc
        if clip_id in entries:
            raise CorruptLogitStoreError(f"{path}: duplicate clip id {clip_id!r}")
        entries[clip_id] = np.frombuffer(payload, dtype="<f4", count=k, offset=offset + id_len)
        offset = end
    if offset != len(payload):
        raise CorruptLogitStoreError(f"{path}: {len(payload) - offset} trailing bytes")
    try:
        return LogitStore(k, entries)
    except LogitStoreError as exc:
        raise CorruptLogitStoreError(f"{path}: {exc}") from exc


def ensemble_logits(stores):
    """Per-clip arithmetic mean of the members' logits.

    Values are sorted across members before a float64 sum, so the result
    does not depend on member order.
    """
    stores = list(stores)
    if not stores:
        raise EnsembleMismatchError("cannot ensemble an empty list of stores")
    first = stores[0]
    for k, store in enumerate(stores[1:], start=1):
        if store.class_count != first.class_count:
            raise EnsembleMismatchError(
                f"store {k} has {store.class_count} classes, store 0 has {first.class_count}"
            )
        if store.entries.keys() != first.entries.keys():
            missing = sorted(first.entries.keys() - store.entries.keys())
            extra = sorted(store.entries.keys() - first.entries.keys())
            raise EnsembleMismatchError(f"store {k} clip ids differ: missing {missing[:10]}, extra {extra[:10]}")
    clip_ids = first.clip_ids
    stacked = np.stack([s.matrix(clip_ids) for s in stores]).astype(np.float64)
    mean = np.sort(stacked, axis=0).sum(axis=0) / len(stores)
    return LogitStore.from_arrays(clip_ids, mean.astype(np.float32))
