"""Binary persistence of a MemoryStore.

File layout, little-endian, fixed width:

    offset  size  field
    0       4     magic b"CUEB"
    4       2     format version (1)
    6       1     bytes per weight: 4 (f32) or 8 (f64)
    7       1     reserved, 0
    8       4     recall_size R
    12      4     cue capacity
    16      4     learned count N (records in the body)
    20      4     CRC-32 of the body
    24      8     theta
    32      8     threshold H
    40      8     epsilon_W
    48      8     epsilon_V
    56      8     init_weight
    64            body: N records

    record (48 + 2*R*width bytes):
    0       4     cue_id
    4       1     learned flag (always 1)
    5       3     padding
    8       8     pattern_id (signed)
    16      8     recall error before the step
    24      8     recall error after the step
    32      8     cue error before the step
    40      8     cue error after the step
    48      R*width  w row
    ...     R*width  v row

Only learned cues are written; the rest of the capacity is rebuilt from
init_weight. Records are only ever appended, so bytes already written for a
cue never change.
"""

import os
import zlib
import struct
import logging
from dataclasses import dataclass

import numpy as np

from core.errors import (
    BadChecksum, DuplicateCue, InvalidParams, IoFailure, SizeMismatch, StoreError, StoreMissing,
    StoreTruncated, VersionMismatch
)
from core.memory_core import CueRecord, Hyperparams, LearnReport, MemoryStore
from utils.idx_ingest import Precision

logger = logging.getLogger(__name__)

STORE_MAGIC = b"CUEB"
FORMAT_VERSION = 1

HEADER = struct.Struct("<4sHBBIIIIddddd")
RECORD_HEAD = struct.Struct("<IBxxxqdddd")

WEIGHT_WIDTH = {Precision.F32: 4, Precision.F64: 8}
WIDTH_PRECISION = {width: precision for precision, width in WEIGHT_WIDTH.items()}


@dataclass(frozen=True)
class StoreFileInfo:
    path: str
    version: int
    recall_size: int
    capacity: int
    learned_count: int
    precision: Precision
    params: Hyperparams
    checksum: int
    size_bytes: int

    @property
    def record_size(self):
        return record_size(self.recall_size, self.precision)


def record_size(recall_size, precision):
    return RECORD_HEAD.size + 2 * recall_size * WEIGHT_WIDTH[Precision(precision)]


def _row_dtype(precision):
    return np.dtype("<f4") if Precision(precision) is Precision.F32 else np.dtype("<f8")


def _pack_header(recall_size, capacity, learned_count, checksum, precision, params):
    return HEADER.pack(
        STORE_MAGIC, FORMAT_VERSION, WEIGHT_WIDTH[Precision(precision)], 0,
        recall_size, capacity, learned_count, checksum,
        params.theta, params.threshold_h, params.epsilon_w, params.epsilon_v, params.init_weight,
    )


def _pack_record(record, precision):
    report = record.learn_report or LearnReport(cue_id=record.cue_id, pattern_id=record.pattern_id)
    pattern_id = record.cue_id if record.pattern_id is None else record.pattern_id
    head = RECORD_HEAD.pack(
        record.cue_id, int(record.learned), pattern_id,
        report.recall_error_before, report.recall_error, report.cue_error_before, report.cue_error,
    )
    dtype = _row_dtype(precision)
    return head + np.asarray(record.w).astype(dtype).tobytes() + np.asarray(record.v).astype(dtype).tobytes()


def _unpack_record(data, offset, recall_size, precision):
    cue_id, learned, pattern_id, e_w0, e_w, e_v0, e_v = RECORD_HEAD.unpack_from(data, offset)
    dtype = _row_dtype(precision)
    row_start = offset + RECORD_HEAD.size
    w = np.frombuffer(data, dtype=dtype, count=recall_size, offset=row_start)
    v = np.frombuffer(data, dtype=dtype, count=recall_size, offset=row_start + recall_size * dtype.itemsize)
    report = LearnReport(
        cue_id=cue_id, pattern_id=pattern_id,
        recall_error_before=e_w0, recall_error=e_w, cue_error_before=e_v0, cue_error=e_v,
    )
    return CueRecord(cue_id=cue_id, w=w, v=v, learned=bool(learned), pattern_id=pattern_id, learn_report=report)


def _parse_header(data, path, size_bytes):
    if len(data) < HEADER.size:
        raise StoreTruncated(f"{path}: header needs {HEADER.size} bytes, file has {len(data)}")

    (magic, version, width, _reserved, recall_size, capacity, learned_count, checksum,
     theta, threshold_h, epsilon_w, epsilon_v, init_weight) = HEADER.unpack_from(data, 0)

    if magic != STORE_MAGIC:
        raise StoreError(f"{path} is not a cue ball store")
    if version != FORMAT_VERSION:
        raise VersionMismatch(version, FORMAT_VERSION)
    if width not in WIDTH_PRECISION:
        raise StoreError(f"{path}: unknown weight width {width}")

    try:
        params = Hyperparams(theta=theta, threshold_h=threshold_h, epsilon_w=epsilon_w,
                             epsilon_v=epsilon_v, init_weight=init_weight)
    except InvalidParams as e:
        raise StoreError(f"{path}: header carries invalid hyperparameters: {e}") from e
    return StoreFileInfo(
        path=str(path), version=version, recall_size=recall_size, capacity=capacity,
        learned_count=learned_count, precision=WIDTH_PRECISION[width], params=params,
        checksum=checksum, size_bytes=size_bytes,
    )


def read_header(path):
    if not os.path.exists(path):
        raise StoreMissing(path)
    try:
        with open(path, "rb") as f:
            data = f.read(HEADER.size)
        size_bytes = os.path.getsize(path)
    except OSError as e:
        raise IoFailure(f"cannot read {path}: {e}") from e
    return _parse_header(data, path, size_bytes)


def _stored_cue_ids(f, info):
    ids = []
    for index in range(info.learned_count):
        f.seek(HEADER.size + index * info.record_size)
        head = f.read(RECORD_HEAD.size)
        if len(head) < RECORD_HEAD.size:
            raise StoreTruncated(f"{info.path}: record {index} is cut short")
        ids.append(RECORD_HEAD.unpack(head)[0])
    return ids


def save(store, destination):
    destination = str(destination)
    precision = store.precision
    checksum = 0
    size = HEADER.size

    try:
        with open(destination, "wb") as f:
            f.write(_pack_header(store.recall_size, store.capacity, 0, 0, precision, store.params))
            learned = store.learned_ids()
            for cue_id in learned:
                chunk = _pack_record(store.cue(int(cue_id)), precision)
                checksum = zlib.crc32(chunk, checksum)
                f.write(chunk)
                size += len(chunk)
            f.seek(0)
            f.write(_pack_header(store.recall_size, store.capacity, len(learned), checksum, precision, store.params))
    except OSError as e:
        raise IoFailure(f"cannot write {destination}: {e}") from e

    logger.info("Saved %d learned cues (capacity %d) to %s", len(learned), store.capacity, destination)
    return StoreFileInfo(
        path=destination, version=FORMAT_VERSION, recall_size=store.recall_size, capacity=store.capacity,
        learned_count=len(learned), precision=precision, params=store.params,
        checksum=checksum, size_bytes=size,
    )


def load(source):
    source = str(source)
    if not os.path.exists(source):
        raise StoreMissing(source)
    try:
        with open(source, "rb") as f:
            data = f.read()
    except OSError as e:
        raise IoFailure(f"cannot read {source}: {e}") from e

    info = _parse_header(data, source, len(data))
    body_size = info.learned_count * info.record_size
    available = len(data) - HEADER.size
    if available < body_size:
        raise StoreTruncated(f"{source}: body needs {body_size} bytes, file has {available}")
    if available > body_size:
        raise StoreError(f"{source}: {available - body_size} unexpected bytes after the last record")

    body = memoryview(data)[HEADER.size:]
    computed = zlib.crc32(body)
    if computed != info.checksum:
        raise BadChecksum(info.checksum, computed)

    store = MemoryStore(info.recall_size, info.capacity, info.params, info.precision)
    for index in range(info.learned_count):
        record = _unpack_record(data, HEADER.size + index * info.record_size, info.recall_size, info.precision)
        if record.cue_id >= store.capacity:
            raise StoreError(f"{source}: cue {record.cue_id} lies beyond capacity {store.capacity}")
        if store.learned[record.cue_id]:
            raise DuplicateCue(record.cue_id)
        store.put_record(record)

    logger.info("Loaded %d learned cues (capacity %d, %s) from %s",
                store.learned_count, store.capacity, info.precision.value, source)
    return store


def _check_record(record, info):
    if not record.learned:
        raise StoreError(f"cue {record.cue_id} holds no memory and cannot be stored")
    for row in (record.w, record.v):
        row = np.asarray(row)
        if len(row) != info.recall_size:
            raise SizeMismatch(info.recall_size, len(row))
        if row.dtype != info.precision.dtype:
            raise StoreError(f"cue {record.cue_id} has {row.dtype} weights, "
                             f"{info.path} stores {info.precision.value}")


def append_learned(file, new_records):
    """Append learned cue records to an existing store file.

    Bytes already in the file stay as they are; only the header (counts and
    checksum) is rewritten. The checksum is extended over the new records.
    """
    path = str(file)
    info = read_header(path)
    new_records = list(new_records)

    try:
        with open(path, "r+b") as f:
            existing = set(_stored_cue_ids(f, info))
            seen = set()
            for record in new_records:
                if record.cue_id in existing or record.cue_id in seen:
                    raise DuplicateCue(record.cue_id)
                _check_record(record, info)
                seen.add(record.cue_id)

            f.seek(0)
            old_header = f.read(HEADER.size)
            body_end = HEADER.size + info.learned_count * info.record_size
            try:
                checksum = info.checksum
                f.seek(body_end)
                for record in new_records:
                    chunk = _pack_record(record, info.precision)
                    checksum = zlib.crc32(chunk, checksum)
                    f.write(chunk)

                capacity = max([info.capacity] + [record.cue_id + 1 for record in new_records])
                learned_count = info.learned_count + len(new_records)
                f.seek(0)
                f.write(_pack_header(info.recall_size, capacity, learned_count, checksum,
                                     info.precision, info.params))
            except OSError:
                # roll back to the last complete store
                f.truncate(body_end)
                f.seek(0)
                f.write(old_header)
                raise
    except OSError as e:
        raise IoFailure(f"cannot append to {path}: {e}") from e

    logger.info("Appended %d cues to %s (%d stored)", len(new_records), path, learned_count)
    return read_header(path)


def append_store(path, store):
    """Write every learned cue of `store` that the file does not hold yet"""
    path = str(path)
    if not os.path.exists(path):
        return save(store, path)

    info = read_header(path)
    if info.recall_size != store.recall_size:
        raise SizeMismatch(info.recall_size, store.recall_size)
    if info.precision is not store.precision or info.params != store.params:
        raise StoreError(f"{path} was trained with different settings ({info.precision.value}, {info.params})")

    with open(path, "rb") as f:
        stored = set(_stored_cue_ids(f, info))
    fresh = [store.cue(int(cue_id)) for cue_id in store.learned_ids() if int(cue_id) not in stored]
    return append_learned(path, fresh)
