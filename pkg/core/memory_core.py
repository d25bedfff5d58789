"""Cue ball and recall net.

Every cue neuron i owns two weight rows over the R recall neurons: w (cue to
recall net, the stored image) and v (recall net to cue, the recognizer).
A pattern is memorized by one gradient-descent step on each row of a fresh
cue; nothing else in the store is touched, so memories only ever accumulate.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional

import numpy as np

from core.errors import AlreadyLearned, IndexOutOfRange, InvalidParams, NotNormalized, SizeMismatch
from utils.idx_ingest import Pattern, Precision, check_length

logger = logging.getLogger(__name__)

# rows per block handed to a worker by respond(); a row's sum never depends on it
RESPOND_BLOCK_ROWS = 4096

_thread_pool = ThreadPoolExecutor(max_workers=4)


def configure_workers(count):
    global _thread_pool
    if count < 1:
        raise InvalidParams(f"worker count must be positive, got {count}")
    _thread_pool.shutdown(wait=True)
    _thread_pool = ThreadPoolExecutor(max_workers=count)


@dataclass(frozen=True)
class Hyperparams:
    theta: float = 100.0
    threshold_h: float = 90.0
    epsilon_w: float = 1.0
    epsilon_v: float = 1.0
    init_weight: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidParams(f"theta must be positive, got {self.theta}")
        if not 0 < self.threshold_h <= self.theta:
            raise InvalidParams(f"threshold H must lie in (0, theta={self.theta}], got {self.threshold_h}")
        if not self.epsilon_w > 0:
            raise InvalidParams(f"epsilon_w must be positive, got {self.epsilon_w}")
        if not self.epsilon_v > 0:
            raise InvalidParams(f"epsilon_v must be positive, got {self.epsilon_v}")


@dataclass(frozen=True)
class LearnReport:
    cue_id: int
    pattern_id: int
    steps_w: int = 1
    steps_v: int = 1
    recall_error_before: float = 0.0
    recall_error: float = 0.0
    cue_error_before: float = 0.0
    cue_error: float = 0.0


@dataclass(frozen=True, eq=False)
class CueRecord:
    cue_id: int
    w: np.ndarray
    v: np.ndarray
    learned: bool
    pattern_id: Optional[int] = None
    learn_report: Optional[LearnReport] = None


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Pre-threshold responses q of the learned cues to one probe, by cue_id"""

    cue_ids: np.ndarray
    q: np.ndarray
    probe_id: Optional[int] = None

    def __len__(self):
        return self.cue_ids.size

    def entries(self):
        return [(int(cue_id), float(q)) for cue_id, q in zip(self.cue_ids, self.q)]


@dataclass(frozen=True)
class Candidate:
    cue_id: int
    q: float
    pattern: Pattern


@dataclass(frozen=True)
class RecallResult:
    fired: List[Candidate]
    threshold_used: float
    spectrum: Optional[Spectrum] = None

    def __len__(self):
        return len(self.fired)

    @property
    def cue_ids(self):
        return [candidate.cue_id for candidate in self.fired]


class MemoryStore:
    """All cue neurons with their weight rows, plus the hyperparameters.

    Rows live in two (capacity, recall_size) arrays so a probe can be
    answered with one pass over V. Learning writes a single row of each.
    """

    def __init__(self, recall_size, capacity=0, params=None, precision=Precision.F64):
        if recall_size < 1:
            raise InvalidParams(f"recall_size must be at least 1, got {recall_size}")
        if capacity < 0:
            raise InvalidParams(f"cue capacity must be nonnegative, got {capacity}")

        self.recall_size = recall_size
        self.params = params or Hyperparams()
        self.precision = Precision(precision)

        self.W = np.full((capacity, recall_size), self.params.init_weight, dtype=self.dtype)
        self.V = np.full((capacity, recall_size), self.params.init_weight, dtype=self.dtype)
        self.learned = np.zeros(capacity, dtype=bool)
        self.pattern_ids = np.full(capacity, -1, dtype=np.int64)
        self.reports = {}

    @property
    def dtype(self):
        return self.precision.dtype

    @property
    def capacity(self):
        return self.learned.size

    @property
    def learned_count(self):
        return int(self.learned.sum())

    def learned_ids(self):
        return np.flatnonzero(self.learned)

    def check_cue(self, cue_id):
        if not 0 <= cue_id < self.capacity:
            raise IndexOutOfRange(cue_id, self.capacity)

    def cue(self, cue_id):
        self.check_cue(cue_id)
        learned = bool(self.learned[cue_id])
        return CueRecord(
            cue_id=cue_id,
            w=self.W[cue_id].copy(),
            v=self.V[cue_id].copy(),
            learned=learned,
            pattern_id=int(self.pattern_ids[cue_id]) if learned else None,
            learn_report=self.reports.get(cue_id),
        )

    @property
    def cues(self):
        return [self.cue(cue_id) for cue_id in range(self.capacity)]

    def add_cues(self, count):
        """Grow the cue ball by count fresh cue neurons; returns their ids"""
        if count < 0:
            raise InvalidParams(f"cannot add {count} cues")
        first = self.capacity
        fresh = np.full((count, self.recall_size), self.params.init_weight, dtype=self.dtype)
        self.W = np.concatenate([self.W, fresh])
        self.V = np.concatenate([self.V, fresh.copy()])
        self.learned = np.concatenate([self.learned, np.zeros(count, dtype=bool)])
        self.pattern_ids = np.concatenate([self.pattern_ids, np.full(count, -1, dtype=np.int64)])
        return range(first, first + count)

    def put_record(self, record):
        """Install a learned record as-is (used when restoring from disk)"""
        self.check_cue(record.cue_id)
        for row in (record.w, record.v):
            if len(row) != self.recall_size:
                raise SizeMismatch(self.recall_size, len(row))
        self.W[record.cue_id] = record.w
        self.V[record.cue_id] = record.v
        self.learned[record.cue_id] = record.learned
        self.pattern_ids[record.cue_id] = -1 if record.pattern_id is None else record.pattern_id
        if record.learn_report is not None:
            self.reports[record.cue_id] = record.learn_report


def new_store(recall_size, cue_capacity, params=None, precision=Precision.F64):
    return MemoryStore(recall_size, cue_capacity, params, precision)


def add_cues(store, count):
    return store.add_cues(count)


def learn_pattern(store, pattern, cue_id):
    """Memorize a normalized pattern on one unlearned cue neuron.

    Runs the learning algorithm literally: with the cue output x = 1, one
    gradient step moves w onto the target pattern d, then one gradient step
    moves v so that the cue's response to d lands on theta.
    """
    check_length(pattern, store.recall_size)
    store.check_cue(cue_id)
    if store.learned[cue_id]:
        raise AlreadyLearned(cue_id)
    tolerance = store.precision.tolerance
    if not pattern.is_normalized(tolerance):
        raise NotNormalized(pattern.norm_sq, tolerance)

    real = store.dtype.type
    eps_w = real(store.params.epsilon_w)
    eps_v = real(store.params.epsilon_v)
    theta = real(store.params.theta)
    half = real(0.5)

    d = np.asarray(pattern.values, dtype=store.dtype)

    x = real(1.0)
    w = store.W[cue_id].copy()
    y = w * x
    residual = d - y
    recall_error_before = half * np.dot(residual, residual)

    # dw = eps_W (d - y) x
    w = w + eps_w * (d - y) * x
    y = w * x
    residual = d - y
    recall_error = half * np.dot(residual, residual)

    v = store.V[cue_id].copy()
    q = np.multiply(v, y).sum()
    cue_error_before = half * (theta - q) ** 2

    # dv = eps_V (theta - q) y
    v = v + eps_v * (theta - q) * y
    q = np.multiply(v, y).sum()
    cue_error = half * (theta - q) ** 2

    pattern_id = cue_id if pattern.pattern_id is None else pattern.pattern_id
    report = LearnReport(
        cue_id=cue_id,
        pattern_id=pattern_id,
        recall_error_before=float(recall_error_before),
        recall_error=float(recall_error),
        cue_error_before=float(cue_error_before),
        cue_error=float(cue_error),
    )

    store.W[cue_id] = w
    store.V[cue_id] = v
    store.pattern_ids[cue_id] = pattern_id
    store.reports[cue_id] = report
    store.learned[cue_id] = True

    logger.debug("cue %d learned pattern %d: E=%g e=%g", cue_id, pattern_id, report.recall_error, report.cue_error)
    return report


def learn_range(store, patterns: Iterable[Pattern], chunk_size=1000, on_chunk: Optional[Callable] = None):
    """Sequential addition: pattern p onto cue p, reported every chunk_size patterns"""
    if chunk_size < 1:
        raise InvalidParams(f"chunk size must be positive, got {chunk_size}")

    reports = []
    chunk = []
    for position, pattern in enumerate(patterns):
        cue_id = position if pattern.pattern_id is None else pattern.pattern_id
        chunk.append(learn_pattern(store, pattern, cue_id))
        if len(chunk) == chunk_size:
            _finish_chunk(store, chunk, on_chunk)
            reports.extend(chunk)
            chunk = []

    if chunk:
        _finish_chunk(store, chunk, on_chunk)
        reports.extend(chunk)

    return reports


def _finish_chunk(store, chunk, on_chunk):
    worst = max(max(report.recall_error, report.cue_error) for report in chunk)
    logger.info(
        "Learned cues %d..%d (%d learned in total, worst residual %.3g)",
        chunk[0].cue_id, chunk[-1].cue_id, store.learned_count, worst,
    )
    if on_chunk is not None:
        on_chunk(chunk)


def _block_response(V, g, start, stop):
    # row-wise reduction: each q_i is summed in the same order whatever the block bounds
    return np.multiply(V[start:stop], g).sum(axis=1)


def respond(store, probe, include_unlearned=False, parallel=True):
    check_length(probe, store.recall_size)
    g = np.asarray(probe.values, dtype=store.dtype)
    V = store.V

    bounds = [(start, min(start + RESPOND_BLOCK_ROWS, store.capacity))
              for start in range(0, store.capacity, RESPOND_BLOCK_ROWS)]

    if parallel and len(bounds) > 1:
        futures = [_thread_pool.submit(_block_response, V, g, start, stop) for start, stop in bounds]
        blocks = [future.result() for future in futures]
    else:
        blocks = [_block_response(V, g, start, stop) for start, stop in bounds]

    q = np.concatenate(blocks) if blocks else np.empty(0, dtype=store.dtype)
    cue_ids = np.arange(store.capacity)
    if not include_unlearned:
        cue_ids = cue_ids[store.learned]
        q = q[store.learned]

    return Spectrum(cue_ids=cue_ids, q=q, probe_id=probe.pattern_id)


def fire(spectrum, h):
    """Cue ids whose response reaches the threshold (q >= h fires)"""
    return {int(cue_id) for cue_id in spectrum.cue_ids[spectrum.q >= h]}


def sweep(spectrum, thresholds):
    return [(float(h), int(np.count_nonzero(spectrum.q >= h))) for h in thresholds]


def reconstruct(store, cue_id, rows=0, cols=0):
    store.check_cue(cue_id)
    x = store.dtype.type(1.0)
    y = store.W[cue_id] * x

    learned = bool(store.learned[cue_id])
    return Pattern(
        values=y,
        rows=rows,
        cols=cols,
        probe_only=not learned,
        pattern_id=int(store.pattern_ids[cue_id]) if learned else None,
    )


def recall(store, probe, h=None, include_unlearned=False):
    h = store.params.threshold_h if h is None else h
    spectrum = respond(store, probe, include_unlearned=include_unlearned)

    mask = spectrum.q >= h
    hits = sorted(zip(spectrum.cue_ids[mask], spectrum.q[mask]), key=lambda hit: (-hit[1], hit[0]))

    fired = [
        Candidate(cue_id=int(cue_id), q=float(q), pattern=reconstruct(store, int(cue_id), probe.rows, probe.cols))
        for cue_id, q in hits
    ]
    logger.debug("probe %s: %d candidates at H=%g", probe.pattern_id, len(fired), h)
    return RecallResult(fired=fired, threshold_used=float(h), spectrum=spectrum)


def closed_form_response(stored, probe, params=None):
    """Response of the cue that learned `stored` to `probe`, computed analytically.

    With a = init_weight the learned rows are y = a + eps_W (d - a) and
    v = a + eps_V (theta - a S_y) y, so q = a S_g + eps_V (theta - a S_y) <y, g>.
    """
    params = params or Hyperparams()
    a = params.init_weight
    d = np.asarray(stored.values, dtype=np.float64)
    g = np.asarray(probe.values, dtype=np.float64)

    y = a + params.epsilon_w * (d - a)
    return float(a * g.sum() + params.epsilon_v * (params.theta - a * y.sum()) * np.dot(y, g))
