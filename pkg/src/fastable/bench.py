"""Synthetic sequences and the baseline-vs-fast timing harness.

Timing covers the full match call plus thresholding of the resulting matrix
(against a threshold of 0, so no recognitions are built).  Every timed run is
single-threaded; the fast matcher's output is compared elementwise with the
baseline's before anything is recorded.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, TextIO

import numpy as np

from .descriptor import DESCRIPTOR_BITS, GlobalDescriptor, descriptor_bytes
from .errors import OutputMismatch
from .matcher import (
    DistanceMatrix,
    HammingCounter,
    MatchParams,
    below_threshold,
    match_baseline,
    match_fast,
)
from .sequence_store import TrainSegment

REPORT_FIELDS = (
    "n",
    "m",
    "c_l",
    "baseline_time",
    "fast_time",
    "speedup",
    "hamming_calls_baseline",
    "hamming_calls_fast",
)


@dataclass(frozen=True)
class SyntheticSpec:
    n: int
    m: int
    c_l: int
    flip_prob: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.c_l < 1 or self.c_l > min(self.n, self.m):
            raise ValueError(f"need 1 <= c_l <= min(n, m), got c_l={self.c_l}, n={self.n}, m={self.m}")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError(f"flip_prob {self.flip_prob} outside [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def _walk(rng: np.random.Generator, length: int, nbits: int, flips: int) -> np.ndarray:
    bits = np.empty((length, nbits), dtype=bool)
    bits[0] = rng.integers(0, 2, nbits, dtype=np.uint8).astype(bool)
    for k in range(1, length):
        bits[k] = bits[k - 1]
        if flips:
            idx = rng.choice(nbits, size=flips, replace=False)
            bits[k, idx] = ~bits[k, idx]
    return bits


def _pack(bits: np.ndarray) -> list[GlobalDescriptor]:
    nbits = bits.shape[1]
    packed = np.packbits(bits, axis=1, bitorder="little")
    assert packed.shape[1] == descriptor_bytes(nbits)
    return [GlobalDescriptor(row.tobytes(), nbits) for row in packed]


def generate(
    spec: SyntheticSpec, nbits: int = DESCRIPTOR_BITS
) -> tuple[TrainSegment, list[GlobalDescriptor]]:
    """Database segment of ``n`` frames and an independent query walk of ``m`` frames.

    Each walk starts from uniform random bits and flips
    ``round_half_up(flip_prob * nbits)`` distinct bits per step.
    """
    rng = np.random.default_rng(spec.seed)
    flips = int(spec.flip_prob * nbits + 0.5)
    train = _walk(rng, spec.n, nbits, flips)
    query = _walk(rng, spec.m, nbits, flips)
    return TrainSegment(f"synthetic-{spec.seed}", _pack(train)), _pack(query)


@dataclass(frozen=True)
class BenchRow:
    n: int
    m: int
    c_l: int
    baseline_time: float
    fast_time: float
    speedup: float
    hamming_calls_baseline: int
    hamming_calls_fast: int


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    repetitions: int = 5
    aggregation: str = "median"
    warmup: bool = True

    def write_csv(self, fh: TextIO) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        for r in self.rows:
            w.writerow(
                [r.n, r.m, r.c_l, f"{r.baseline_time:.6f}", f"{r.fast_time:.6f}", f"{r.speedup:.3f}",
                 r.hamming_calls_baseline, r.hamming_calls_fast]
            )

    def table(self) -> str:
        head = f"{'n':>7} {'m':>6} {'c_l':>5} {'baseline [s]':>13} {'fast [s]':>10} {'speedup':>8} {'calls base':>13} {'calls fast':>12}"
        lines = [head, "-" * len(head)]
        for r in self.rows:
            lines.append(
                f"{r.n:>7} {r.m:>6} {r.c_l:>5} {r.baseline_time:>13.4f} {r.fast_time:>10.4f} "
                f"{r.speedup:>8.1f} {r.hamming_calls_baseline:>13} {r.hamming_calls_fast:>12}"
            )
        lines.append(
            f"({self.aggregation} of {self.repetitions} repetitions"
            f"{', after one discarded warm-up run' if self.warmup else ''})"
        )
        return "\n".join(lines)


def _timed(fn: Callable, segment: TrainSegment, query: np.ndarray, params: MatchParams):
    counter = HammingCounter()
    start = time.perf_counter()
    matrix = fn(segment, query, params, counter)
    below_threshold(matrix.raw, matrix.c_l, matrix.descriptor_bits, 0.0)
    elapsed = time.perf_counter() - start
    return elapsed, matrix, counter.calls


def run_spec(spec: SyntheticSpec, repetitions: int = 5, warmup: bool = True) -> BenchRow:
    if repetitions < 3:
        raise ValueError("repetitions must be >= 3")
    segment, query = generate(spec)
    test = TrainSegment("query", query).words
    segment.words  # pack outside the timed region
    params = MatchParams(spec.c_l)

    timings = {"baseline": [], "fast": []}
    calls = {}
    reference: DistanceMatrix | None = None
    for rep in range(repetitions + int(warmup)):
        t_base, base, calls["baseline"] = _timed(match_baseline, segment, test, params)
        t_fast, fast, calls["fast"] = _timed(match_fast, segment, test, params)
        if not np.array_equal(base.raw, fast.raw):
            bad = np.argwhere(base.raw != fast.raw)[0]
            raise OutputMismatch(f"{spec}: matrices differ first at window pair {tuple(bad + 1)}")
        if reference is None:
            reference = base
        elif not np.array_equal(reference.raw, base.raw):
            raise OutputMismatch(f"{spec}: baseline output changed between repetitions")
        if warmup and rep == 0:
            continue
        timings["baseline"].append(t_base)
        timings["fast"].append(t_fast)

    tb = statistics.median(timings["baseline"])
    tf = statistics.median(timings["fast"])
    return BenchRow(spec.n, spec.m, spec.c_l, tb, tf, tb / tf, calls["baseline"], calls["fast"])


def run_grid(
    specs: Iterable[SyntheticSpec],
    repetitions: int = 5,
    warmup: bool = True,
    progress: Callable[[BenchRow], None] | None = None,
) -> BenchReport:
    report = BenchReport(repetitions=repetitions, warmup=warmup)
    for spec in specs:
        row = run_spec(spec, repetitions, warmup)
        report.rows.append(row)
        if progress is not None:
            progress(row)
    return report


def grid(ns: Sequence[int], c_ls: Sequence[int], m: int = 1000, flip_prob: float = 0.05, seed: int = 0) -> list[SyntheticSpec]:
    return [SyntheticSpec(n, m, c_l, flip_prob, seed) for n in ns for c_l in c_ls]
