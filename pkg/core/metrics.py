import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from core.errors import SizeMismatch
from core.memory_core import reconstruct
from utils.idx_ingest import binarize, pattern_at

logger = logging.getLogger(__name__)

# values reported for the full 60,000-image training set
REFERENCE_SHADING_MEAN = 2.19
REFERENCE_TOTAL_INTENSITY = 26210.05
REFERENCE_MEMORY_RATE = 0.987


class ShadingNorm(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class EvalReport:
    pattern_count: int
    hamming_mean: float
    hamming_max: int
    shading_mean: float
    mean_total_intensity: float
    memory_rate: float

    @property
    def shading_deviation(self):
        return self.shading_mean - REFERENCE_SHADING_MEAN


@dataclass(frozen=True)
class SpectrumSummary:
    peak_cue_id: Optional[int]
    peak_q: Optional[float]
    candidate_count: int
    candidates: List[Tuple[int, float]] = field(default_factory=list)


def _check_sizes(a, b):
    if len(a) != len(b):
        raise SizeMismatch(len(a), len(b))


def to_grayscale(pattern, scale=None):
    """8-bit pixels of a pattern: its raw source, or values*scale re-quantized to [0, 255]"""
    if pattern.raw is not None and scale is None:
        return pattern.raw.astype(np.int64)
    if scale is None:
        peak = float(np.max(pattern.values)) if len(pattern) else 0.0
        scale = 255.0 / peak if peak > 0 else 0.0
    pixels = np.rint(np.asarray(pattern.values, dtype=np.float64) * scale)
    return np.clip(pixels, 0, 255).astype(np.int64)


def _shape_bits(pattern, cutoff, scale):
    if pattern.raw is None and scale is not None:
        return (to_grayscale(pattern, scale) > cutoff).astype(np.uint8)
    return binarize(pattern, cutoff)


def hamming_distance(a, b, cutoff=0, scale=None):
    _check_sizes(a, b)
    return int(np.count_nonzero(_shape_bits(a, cutoff, scale) != _shape_bits(b, cutoff, scale)))


def shading_distance(a, b, scale=None, norm=ShadingNorm.L1):
    """Grayscale distance between two patterns in 8-bit units.

    Patterns without a raw source are de-normalized with `scale`, which
    defaults to the raw pixel norm of whichever side has one.
    """
    _check_sizes(a, b)
    if scale is None:
        scale = a.raw_norm if a.raw is not None else b.raw_norm

    diff = to_grayscale(a, scale if a.raw is None else None) - to_grayscale(b, scale if b.raw is None else None)
    if ShadingNorm(norm) is ShadingNorm.L2:
        return float(np.sqrt(np.dot(diff, diff)))
    return float(np.abs(diff).sum())


def memory_rate(patterns, cue_count, recall_count):
    """Memorized patterns per neuron in the system (cue ball plus recall net)"""
    return patterns / (cue_count + recall_count)


def spectrum_summary(spectrum, h):
    if len(spectrum) == 0:
        return SpectrumSummary(peak_cue_id=None, peak_q=None, candidate_count=0)

    # argmax keeps the lowest cue_id among equal peaks
    peak = int(np.argmax(spectrum.q))
    mask = spectrum.q >= h
    candidates = sorted(
        ((int(cue_id), float(q)) for cue_id, q in zip(spectrum.cue_ids[mask], spectrum.q[mask])),
        key=lambda hit: (-hit[1], hit[0]),
    )
    return SpectrumSummary(
        peak_cue_id=int(spectrum.cue_ids[peak]),
        peak_q=float(spectrum.q[peak]),
        candidate_count=len(candidates),
        candidates=candidates,
    )


def evaluate(store, raw, cutoff=0, shading_norm=ShadingNorm.L1):
    """Shape and shading fidelity of every learned cue against its source image"""
    hamming = []
    shading = []
    intensity = []

    for cue_id in store.learned_ids():
        pattern_id = int(store.pattern_ids[cue_id])
        stored = pattern_at(raw, pattern_id, store.precision)
        recalled = reconstruct(store, int(cue_id), raw.rows, raw.cols)

        hamming.append(hamming_distance(stored, recalled, cutoff, stored.raw_norm))
        shading.append(shading_distance(stored, recalled, stored.raw_norm, shading_norm))
        intensity.append(int(stored.raw.astype(np.int64).sum()))

    count = len(hamming)
    report = EvalReport(
        pattern_count=count,
        hamming_mean=float(np.mean(hamming)) if count else 0.0,
        hamming_max=int(max(hamming)) if count else 0,
        shading_mean=float(np.mean(shading)) if count else 0.0,
        mean_total_intensity=float(np.mean(intensity)) if count else 0.0,
        memory_rate=memory_rate(store.learned_count, store.capacity, store.recall_size),
    )
    logger.info("Evaluated %d patterns: hamming max %d, shading mean %.4f",
                count, report.hamming_max, report.shading_mean)
    return report
