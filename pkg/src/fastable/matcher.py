"""Sequence-to-sequence matching.

``match_baseline`` evaluates every window pair from scratch (c_l descriptor
comparisons per matrix cell).  ``match_fast`` walks the matrix column by
column and derives each cell from its upper-left neighbour::

    d[i+1, j+1] = d[i, j] + h(train[i + c_l], query[j + c_l]) - h(train[i], query[j])

so that the per-cell cost no longer depends on the window length.  Because
all distances are integers the two paths agree exactly.

Hamming evaluations are counted through :class:`HammingCounter`; counts are
exact, one per descriptor pair compared.  For an ``rows x cols`` matrix
(``rows = n - c_l + 1``, ``cols = m - c_l + 1``)::

    baseline = rows * cols * c_l
    fast     = rows * c_l + (cols - 1) * (c_l + 2 * (rows - 1))

The first column and the first row of every later column are computed
directly; every other cell costs exactly two evaluations.
"""

from __future__ import annotations

import csv
import io
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .descriptor import GlobalDescriptor, to_words
from .errors import LengthMismatch, NoThreshold, WidthMismatch, WindowTooLong
from .sequence_store import SequenceDatabase, TrainSegment

RECOGNITION_FIELDS = ("query_index", "segment_name", "train_index", "raw_distance", "normalized_distance")


@dataclass
class HammingCounter:
    """Exact tally of descriptor-pair Hamming evaluations."""

    calls: int = 0

    def add(self, k: int) -> None:
        self.calls += k

    def reset(self) -> None:
        self.calls = 0


@dataclass(frozen=True)
class MatchParams:
    c_l: int
    threshold_override: float | None = None

    def __post_init__(self):
        if int(self.c_l) != self.c_l or self.c_l < 1:
            raise ValueError(f"c_l must be a positive integer, got {self.c_l}")
        t = self.threshold_override
        if t is not None and not 0.0 <= t <= 1.0:
            raise ValueError(f"threshold_override {t} outside [0, 1]")


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Raw window distances; ``raw[i, j]`` pairs train window i with query window j (0-based)."""

    segment_name: str
    raw: np.ndarray
    c_l: int
    descriptor_bits: int

    @property
    def shape(self) -> tuple[int, int]:
        return self.raw.shape

    @property
    def max_distance(self) -> int:
        return self.c_l * self.descriptor_bits

    @property
    def normalized(self) -> np.ndarray:
        return self.raw / float(self.max_distance)

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return (
            self.segment_name == other.segment_name
            and self.c_l == other.c_l
            and self.descriptor_bits == other.descriptor_bits
            and np.array_equal(self.raw, other.raw)
        )


@dataclass(frozen=True)
class Recognition:
    segment_name: str
    train_index: int  # 1-based window start
    query_index: int  # 1-based window start
    raw_distance: int
    normalized_distance: float


# -- kernel -------------------------------------------------------------------


def _sum_words(counts: np.ndarray) -> np.ndarray:
    # float32 matmul reduces the short word axis faster than sum(); values stay exact (< 2**24)
    return (counts.astype(np.float32) @ np.ones(counts.shape[-1], np.float32)).astype(np.int64)


def _counts(train: np.ndarray, q: np.ndarray, counter: HammingCounter | None) -> np.ndarray:
    """Per-word popcounts of ``train ^ q``; row sums are the Hamming distances to ``q``."""
    if counter is not None:
        counter.add(train.shape[0])
    return np.bitwise_count(np.bitwise_xor(train, q))


def pairwise(train: np.ndarray, q: np.ndarray, counter: HammingCounter | None = None) -> np.ndarray:
    """Hamming distance of each row of ``train`` to the single descriptor ``q``."""
    return _sum_words(_counts(train, q, counter))


def _window_distance(train: np.ndarray, query: np.ndarray, counter: HammingCounter | None) -> int:
    """Distance between two equally long windows (rows aligned)."""
    if counter is not None:
        counter.add(train.shape[0])
    return int(np.bitwise_count(np.bitwise_xor(train, query)).sum())


def _direct_column(train: np.ndarray, window: np.ndarray, rows: int, counter: HammingCounter | None) -> np.ndarray:
    """All ``rows`` window distances against one query window, c_l comparisons per cell."""
    c_l = window.shape[0]
    acc_dtype = np.uint16 if 64 * c_l <= np.iinfo(np.uint16).max else np.uint32
    acc = np.zeros((rows, train.shape[1]), dtype=acc_dtype)
    xbuf = np.empty((rows, train.shape[1]), dtype=np.uint64)
    cbuf = np.empty((rows, train.shape[1]), dtype=np.uint8)
    for k in range(c_l):
        np.bitwise_xor(train[k : k + rows], window[k], out=xbuf)
        np.bitwise_count(xbuf, out=cbuf)
        np.add(acc, cbuf, out=acc)
        if counter is not None:
            counter.add(rows)
    return acc.sum(axis=1, dtype=np.int64)


def _advance_column(
    train: np.ndarray,
    prev: np.ndarray,
    leaving: np.ndarray,
    window: np.ndarray,
    counter: HammingCounter | None,
) -> np.ndarray:
    """Next column from the previous one.

    ``leaving`` is the query descriptor that dropped out of the window and
    ``window`` is the new query window (its last row just arrived).
    """
    c_l = window.shape[0]
    rows = prev.shape[0]
    col = np.empty_like(prev)
    col[0] = _window_distance(train[:c_l], window, counter)
    if rows > 1:
        entering = _counts(train[c_l : c_l + rows - 1], window[-1], counter)
        dropped = _counts(train[: rows - 1], leaving, counter)
        # per-word differences lie in [-64, 64]; the uint8 wraparound maps back exactly in int8
        delta = np.subtract(entering, dropped, dtype=np.uint8).view(np.int8)
        np.add(prev[:-1], _sum_words(delta), out=col[1:])
    return col


# -- batch matchers -------------------------------------------------------------


def _as_words(descriptors, nbits: int) -> np.ndarray:
    if isinstance(descriptors, np.ndarray):
        if descriptors.dtype != np.uint64 or descriptors.ndim != 2:
            raise TypeError("word arrays must be 2-D uint64")
        return descriptors
    try:
        return to_words(descriptors, nbits)
    except LengthMismatch as exc:
        raise WidthMismatch(str(exc)) from exc


def _prepare(segment: TrainSegment, query, params: MatchParams):
    nbits = segment.descriptor_bits
    train = segment.words
    test = _as_words(query, nbits)
    if test.shape[1] != train.shape[1]:
        raise WidthMismatch(f"query words {test.shape[1]} vs train words {train.shape[1]}")
    n, m, c_l = train.shape[0], test.shape[0], params.c_l
    if c_l > n or c_l > m:
        raise WindowTooLong(f"c_l={c_l} exceeds sequence lengths (train {n}, query {m})")
    return train, test, n - c_l + 1, m - c_l + 1


def match_baseline(
    segment: TrainSegment,
    query: Sequence[GlobalDescriptor] | np.ndarray,
    params: MatchParams,
    counter: HammingCounter | None = None,
) -> DistanceMatrix:
    """Exhaustive O(n m c_l) matcher, the reference the fast path is checked against."""
    train, test, rows, cols = _prepare(segment, query, params)
    c_l = params.c_l
    raw = np.empty((rows, cols), dtype=np.int64)
    for j in range(cols):
        raw[:, j] = _direct_column(train, test[j : j + c_l], rows, counter)
    return DistanceMatrix(segment.name, raw, c_l, segment.descriptor_bits)


def match_fast(
    segment: TrainSegment,
    query: Sequence[GlobalDescriptor] | np.ndarray,
    params: MatchParams,
    counter: HammingCounter | None = None,
) -> DistanceMatrix:
    """Incremental O(n m) matcher; output identical to :func:`match_baseline`."""
    train, test, rows, cols = _prepare(segment, query, params)
    c_l = params.c_l
    raw = np.empty((rows, cols), dtype=np.int64)
    prev = _direct_column(train, test[:c_l], rows, counter)
    raw[:, 0] = prev
    for j in range(1, cols):
        prev = _advance_column(train, prev, test[j - 1], test[j : j + c_l], counter)
        raw[:, j] = prev
    return DistanceMatrix(segment.name, raw, c_l, segment.descriptor_bits)


MATCHERS = {"fast": match_fast, "baseline": match_baseline}


def expected_calls(n: int, m: int, c_l: int, matcher: str) -> int:
    """Closed-form Hamming evaluation count for one segment/query pair."""
    rows, cols = n - c_l + 1, m - c_l + 1
    if matcher == "baseline":
        return rows * cols * c_l
    if matcher == "fast":
        return rows * c_l + (cols - 1) * (c_l + 2 * (rows - 1))
    raise ValueError(f"unknown matcher {matcher!r}")


# -- thresholds and recognitions ---------------------------------------------


def resolve_threshold(segment: TrainSegment, params: MatchParams) -> float:
    """The segment's own threshold, falling back to the global override."""
    if segment.threshold is not None:
        return segment.threshold
    if params.threshold_override is not None:
        return params.threshold_override
    raise NoThreshold(f"segment {segment.name!r} has no threshold and no override was given")


def below_threshold(raw: np.ndarray, c_l: int, descriptor_bits: int, threshold: float) -> np.ndarray:
    """Mask of raw distances whose normalized value is strictly below ``threshold``."""
    return np.asarray(raw) / float(c_l * descriptor_bits) < threshold


def _column_recognitions(name: str, col: np.ndarray, j: int, c_l: int, nbits: int, threshold: float):
    scale = float(c_l * nbits)
    hits = np.flatnonzero(below_threshold(col, c_l, nbits, threshold))
    return [
        Recognition(name, int(i) + 1, j + 1, int(col[i]), float(col[i]) / scale) for i in hits
    ]


def recognitions_from_matrices(
    matrices: Sequence[DistanceMatrix], thresholds: Sequence[float]
) -> list[Recognition]:
    """Threshold batch matrices, ordered by query index, then segment, then train index."""
    if not matrices:
        return []
    cols = {mat.shape[1] for mat in matrices}
    if len(cols) != 1:
        raise ValueError("matrices disagree on the number of query windows")
    out: list[Recognition] = []
    for j in range(cols.pop()):
        for mat, t in zip(matrices, thresholds):
            out.extend(
                _column_recognitions(mat.segment_name, mat.raw[:, j], j, mat.c_l, mat.descriptor_bits, t)
            )
    return out


def match_database(
    db: SequenceDatabase,
    query: Sequence[GlobalDescriptor] | np.ndarray,
    params: MatchParams,
    matcher: str = "fast",
    counter: HammingCounter | None = None,
) -> list[Recognition]:
    """Batch-match a query against every segment and threshold the result."""
    fn = MATCHERS[matcher]
    test = _as_words(query, db.descriptor_bits)
    thresholds = [resolve_threshold(s, params) for s in db.segments]
    matrices = [fn(s, test, params, counter) for s in db.segments]
    return recognitions_from_matrices(matrices, thresholds)


# -- streaming -----------------------------------------------------------------


@dataclass
class MatchState:
    """Rolling per-segment columns for online matching; single owner, sequential pushes."""

    db: SequenceDatabase
    params: MatchParams
    thresholds: list[float]
    window: deque = field(default_factory=deque)
    prev: list[np.ndarray | None] = field(default_factory=list)
    frames_seen: int = 0
    counter: HammingCounter | None = None


def stream_open(
    db: SequenceDatabase, params: MatchParams, counter: HammingCounter | None = None
) -> MatchState:
    thresholds = [resolve_threshold(s, params) for s in db.segments]
    for s in db.segments:
        if params.c_l > len(s):
            raise WindowTooLong(f"c_l={params.c_l} exceeds segment {s.name!r} length {len(s)}")
    return MatchState(
        db=db,
        params=params,
        thresholds=thresholds,
        window=deque(maxlen=params.c_l + 1),
        prev=[None] * len(db.segments),
        counter=counter,
    )


def stream_push(state: MatchState, descriptor: GlobalDescriptor) -> list[Recognition]:
    """Consume one query frame; return recognitions for the newest query window."""
    if descriptor.nbits != state.db.descriptor_bits:
        raise WidthMismatch(f"descriptor has {descriptor.nbits} bits, database uses {state.db.descriptor_bits}")
    c_l = state.params.c_l
    state.window.append(to_words([descriptor], descriptor.nbits)[0])
    state.frames_seen += 1
    if state.frames_seen < c_l:
        return []

    buf = np.stack(state.window)
    window = buf[-c_l:]
    j = state.frames_seen - c_l  # 0-based query window start
    out: list[Recognition] = []
    for k, (seg, t) in enumerate(zip(state.db.segments, state.thresholds)):
        train = seg.words
        if state.prev[k] is None:
            col = _direct_column(train, window, len(seg) - c_l + 1, state.counter)
        else:
            col = _advance_column(train, state.prev[k], buf[0], window, state.counter)
        state.prev[k] = col
        out.extend(_column_recognitions(seg.name, col, j, c_l, seg.descriptor_bits, t))
    return out


# -- CSV -------------------------------------------------------------------------


def format_normalized(raw: int, max_distance: int) -> str:
    """``raw / max_distance`` to 6 decimals, rounding half to even, computed exactly."""
    q = round(Fraction(raw * 10**6, max_distance))
    return f"{q // 10**6}.{q % 10**6:06d}"


def write_recognitions(recs: Iterable[Recognition], fh: TextIO, c_l: int, descriptor_bits: int) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECOGNITION_FIELDS)
    maxd = c_l * descriptor_bits
    for r in recs:
        w.writerow([r.query_index, r.segment_name, r.train_index, r.raw_distance, format_normalized(r.raw_distance, maxd)])


def recognitions_csv(recs: Iterable[Recognition], c_l: int, descriptor_bits: int) -> str:
    buf = io.StringIO()
    write_recognitions(recs, buf, c_l, descriptor_bits)
    return buf.getvalue()


def read_recognitions(path: str | Path) -> list[Recognition]:
    """Parse a recognition CSV; raises ``ValueError`` naming the offending line."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != RECOGNITION_FIELDS:
            raise ValueError(f"{path}: line 1: expected header {','.join(RECOGNITION_FIELDS)}")
        for row in reader:
            if not row:
                continue
            try:
                q, name, i, raw, norm = row
                out.append(Recognition(name, int(i), int(q), int(raw), float(norm)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {reader.line_num}: {exc}") from None
    return out
