import os
import gzip
import struct
import logging
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

import numpy as np

from core.errors import (
    BadMagic, Truncated, TrailingGarbage, ZeroImage, DatasetMissing, IndexOutOfRange, SizeMismatch
)

logger = logging.getLogger(__name__)

# 0x00000803: IDX, unsigned byte elements, 3 dimensions
IDX_IMAGE_MAGIC = 0x00000803

# [offset] [type]          [value]      [description]
# 0000     32 bit integer  0x00000803   magic number (MSB first)
# 0004     32 bit integer  count        number of images
# 0008     32 bit integer  rows         number of rows
# 0012     32 bit integer  cols         number of columns
# 0016     unsigned byte   ??           pixels, image-major then row-major
IDX_HEADER = struct.Struct(">IIII")

NORMALIZED_TOLERANCE = {"f64": 1e-9, "f32": 1e-5}


class Precision(str, Enum):
    F32 = "f32"
    F64 = "f64"

    @property
    def dtype(self):
        return np.dtype(np.float32) if self is Precision.F32 else np.dtype(np.float64)

    @property
    def tolerance(self):
        return NORMALIZED_TOLERANCE[self.value]


class Region(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True, eq=False)
class RawImageSet:
    magic: int
    count: int
    rows: int
    cols: int
    pixels: np.ndarray
    trailing_bytes: int = 0

    @property
    def image_size(self):
        return self.rows * self.cols

    def image(self, index):
        if not 0 <= index < self.count:
            raise IndexOutOfRange(index, self.count, what="image")
        size = self.image_size
        return self.pixels[index * size:(index + 1) * size]


@dataclass(frozen=True, eq=False)
class Pattern:
    """A grayscale image vector as presented to the recall net.

    Normalized patterns satisfy sum(values**2) == 1 and serve as learning
    targets. Probe-only patterns (partial cues, unlearned reconstructions)
    carry probe_only=True and are exempt.
    """

    values: np.ndarray
    raw: Optional[np.ndarray] = None
    rows: int = 0
    cols: int = 0
    probe_only: bool = False
    pattern_id: Optional[int] = None
    sum: float = field(init=False)
    norm_sq: float = field(init=False)

    def __post_init__(self):
        values = np.ascontiguousarray(self.values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "sum", float(values.sum()))
        object.__setattr__(self, "norm_sq", float(np.dot(values, values)))
        if self.rows * self.cols != values.size:
            # flat vector with no known image geometry
            object.__setattr__(self, "rows", 1)
            object.__setattr__(self, "cols", values.size)

    def __len__(self):
        return self.values.size

    @property
    def raw_norm(self):
        """Euclidean norm of the source pixels, the de-normalization scale"""
        if self.raw is None:
            return None
        return float(np.sqrt(np.dot(self.raw.astype(np.float64), self.raw.astype(np.float64))))

    def is_normalized(self, tolerance=1e-9):
        return abs(self.norm_sq - 1.0) <= tolerance


def parse_idx(data):
    if len(data) < IDX_HEADER.size:
        raise Truncated(IDX_HEADER.size, len(data))

    magic, count, rows, cols = IDX_HEADER.unpack_from(data, 0)
    if magic != IDX_IMAGE_MAGIC:
        raise BadMagic(magic, IDX_IMAGE_MAGIC)

    payload_size = count * rows * cols
    available = len(data) - IDX_HEADER.size
    if available < payload_size:
        raise Truncated(IDX_HEADER.size + payload_size, len(data))

    trailing = available - payload_size
    if trailing:
        warnings.warn(f"{trailing} bytes after the last image are ignored", TrailingGarbage, stacklevel=2)
        logger.warning("IDX payload carries %d trailing bytes", trailing)

    pixels = np.frombuffer(data, dtype=np.uint8, count=payload_size, offset=IDX_HEADER.size).copy()
    pixels.setflags(write=False)

    return RawImageSet(magic=magic, count=count, rows=rows, cols=cols, pixels=pixels, trailing_bytes=trailing)


def serialize_idx(raw):
    header = IDX_HEADER.pack(raw.magic, raw.count, raw.rows, raw.cols)
    return header + raw.pixels.astype(np.uint8).tobytes()


def load_idx(path):
    if not os.path.exists(path):
        raise DatasetMissing(path)

    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rb") as f:
        data = f.read()

    raw = parse_idx(data)
    logger.info("Loaded %d images of %dx%d from %s", raw.count, raw.rows, raw.cols, path)
    return raw


def normalize(image, precision=Precision.F64, rows=0, cols=0, pattern_id=None):
    pixels = np.asarray(image, dtype=np.uint8).ravel()
    if not pixels.any():
        raise ZeroImage()

    dtype = Precision(precision).dtype
    grey = pixels.astype(dtype)
    norm = np.sqrt(np.dot(grey, grey))
    values = grey / norm

    return Pattern(values=values, raw=pixels.copy(), rows=rows, cols=cols, pattern_id=pattern_id)


def pattern_at(raw, index, precision=Precision.F64):
    return normalize(raw.image(index), precision, rows=raw.rows, cols=raw.cols, pattern_id=index)


def patterns(raw, start=0, count=None, precision=Precision.F64) -> Iterator[Pattern]:
    stop = raw.count if count is None else start + count
    if start < 0 or stop > raw.count:
        raise IndexOutOfRange(stop - 1, raw.count, what="image")

    for index in range(start, stop):
        yield pattern_at(raw, index, precision)


def partial_probe(pattern, region):
    region = Region(region)
    rows, cols = pattern.rows, pattern.cols
    half = rows // 2

    mask = np.zeros((rows, cols), dtype=bool)
    if region is Region.UPPER:
        mask[:half] = True
    else:
        mask[half:] = True
    mask = mask.ravel()

    values = np.where(mask, pattern.values, 0).astype(pattern.values.dtype)
    raw = None if pattern.raw is None else np.where(mask, pattern.raw, 0).astype(np.uint8)

    return Pattern(values=values, raw=raw, rows=rows, cols=cols, probe_only=True, pattern_id=pattern.pattern_id)


def binarize(pattern, cutoff=0):
    """Shape bits of a pattern: 1 where the grayscale pixel exceeds cutoff.

    Patterns without an 8-bit source (reconstructions) are judged on their
    real values; any positive value is ink.
    """
    if pattern.raw is not None:
        return (pattern.raw > cutoff).astype(np.uint8)
    return (pattern.values > 0).astype(np.uint8)


def check_length(pattern, size):
    if len(pattern) != size:
        raise SizeMismatch(size, len(pattern))
