"""Post-processing of raw recognitions.

* :func:`cluster` groups recognitions of one segment with DBScan on their
  (train, query) window indices.
* :func:`consistency_filter` accepts a score only after it stayed above a
  level for a number of consecutive frames.
* :func:`auto_tune` derives one threshold per training segment from the
  closest match between that segment and every other one.
* :func:`score_against_ground_truth` counts correct, incorrect and distinct
  clusters against a table of annotated index ranges.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np
from scipy.spatial import cKDTree

from .errors import MalformedTruth, SinglePartition, WindowTooLong
from .matcher import MatchParams, Recognition, match_fast
from .sequence_store import SequenceDatabase

CLUSTER_FIELDS = ("segment_name", "mean_train_index", "mean_query_index", "member_count")
TRUTH_FIELDS = ("query_start", "query_end", "segment_name", "train_start", "train_end")

_NOISE = -2
_UNSEEN = -1


@dataclass(frozen=True)
class ClusterParams:
    db_eps: float = 2.0
    db_min_pts: int = 1

    def __post_init__(self):
        if not self.db_eps > 0:
            raise ValueError(f"db_eps must be positive, got {self.db_eps}")
        if self.db_min_pts < 1:
            raise ValueError(f"db_min_pts must be >= 1, got {self.db_min_pts}")


@dataclass(frozen=True)
class RecognitionCluster:
    segment_name: str
    mean_train_index: float
    mean_query_index: float
    member_count: int
    members: tuple[Recognition, ...] = ()

    @classmethod
    def from_members(cls, members: Sequence[Recognition]) -> "RecognitionCluster":
        members = tuple(sorted(members, key=lambda r: (r.query_index, r.train_index)))
        k = len(members)
        return cls(
            segment_name=members[0].segment_name,
            mean_train_index=math.fsum(r.train_index for r in members) / k,
            mean_query_index=math.fsum(r.query_index for r in members) / k,
            member_count=k,
            members=members,
        )


@dataclass(frozen=True)
class ConsistencyParams:
    c_w: int
    t_p: float

    def __post_init__(self):
        if self.c_w < 1:
            raise ValueError(f"c_w must be >= 1, got {self.c_w}")


# -- clustering ----------------------------------------------------------------


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """DBScan over 2-D points; returns a label per point, -2 for noise.

    A point's neighbourhood is every point within Euclidean distance ``eps``
    (inclusive), itself included.  Points are visited in the given order, so
    callers wanting order-independent results must sort first.
    """
    npts = len(points)
    labels = np.full(npts, _UNSEEN, dtype=np.int64)
    if npts == 0:
        return labels
    tree = cKDTree(points)
    neighbours = tree.query_ball_point(points, r=eps)
    cid = -1
    for p in range(npts):
        if labels[p] != _UNSEEN:
            continue
        if len(neighbours[p]) < min_pts:
            labels[p] = _NOISE
            continue
        cid += 1
        labels[p] = cid
        seeds = list(neighbours[p])
        while seeds:
            q = seeds.pop()
            if labels[q] == _NOISE:
                labels[q] = cid  # border point
            if labels[q] != _UNSEEN:
                continue
            labels[q] = cid
            if len(neighbours[q]) >= min_pts:
                seeds.extend(neighbours[q])
    return labels


def cluster(
    recognitions: Iterable[Recognition], params: ClusterParams = ClusterParams()
) -> list[RecognitionCluster]:
    """Cluster recognitions per segment on their (train_index, query_index) coordinates.

    Clusters never span segments.  With ``db_min_pts == 1`` every recognition
    lands in exactly one cluster.  Output is sorted by segment name and then by
    each cluster's earliest member, and does not depend on input order.
    """
    by_segment: dict[str, list[Recognition]] = defaultdict(list)
    for r in recognitions:
        by_segment[r.segment_name].append(r)

    clusters: list[RecognitionCluster] = []
    for name in sorted(by_segment):
        recs = sorted(by_segment[name], key=lambda r: (r.query_index, r.train_index, r.raw_distance))
        pts = np.array([(r.train_index, r.query_index) for r in recs], dtype=np.float64)
        labels = dbscan_labels(pts, params.db_eps, params.db_min_pts)
        groups: dict[int, list[Recognition]] = defaultdict(list)
        for r, lab in zip(recs, labels):
            if lab >= 0:
                groups[int(lab)].append(r)
        clusters.extend(RecognitionCluster.from_members(groups[k]) for k in sorted(groups))
    return clusters


def write_clusters(clusters: Iterable[RecognitionCluster], fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CLUSTER_FIELDS)
    for c in clusters:
        w.writerow([c.segment_name, repr(c.mean_train_index), repr(c.mean_query_index), c.member_count])


def read_clusters(path: str | Path) -> list[RecognitionCluster]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CLUSTER_FIELDS:
            raise ValueError(f"{path}: line 1: expected header {','.join(CLUSTER_FIELDS)}")
        for row in reader:
            if not row:
                continue
            try:
                name, ti, qi, count = row
                out.append(RecognitionCluster(name, float(ti), float(qi), int(count)))
            except ValueError as exc:
                raise ValueError(f"{path}: line {reader.line_num}: {exc}") from None
    return out


# -- consistency window ----------------------------------------------------------


def consistency_filter(scores: Iterable[float], params: ConsistencyParams) -> list[bool]:
    """True at frame k iff the last ``c_w`` scores up to k all strictly exceed ``t_p``."""
    out = []
    run = 0
    for s in scores:
        run = run + 1 if s > params.t_p else 0
        out.append(run >= params.c_w)
    return out


# -- threshold tuning --------------------------------------------------------------


def cross_minima(db: SequenceDatabase, c_l: int) -> dict[str, int]:
    """For each segment, the smallest raw window distance to any other segment."""
    if len(db.segments) < 2:
        raise SinglePartition(f"auto-tuning needs at least 2 segments, database has {len(db.segments)}")
    for s in db.segments:
        if c_l > len(s):
            raise WindowTooLong(f"c_l={c_l} exceeds segment {s.name!r} length {len(s)}")
    params = MatchParams(c_l)
    best = {s.name: None for s in db.segments}
    segs = db.segments
    # distances are symmetric, so each unordered pair is matched once
    for a in range(len(segs)):
        for b in range(a + 1, len(segs)):
            low = int(match_fast(segs[b], segs[a].words, params).raw.min())
            for name in (segs[a].name, segs[b].name):
                if best[name] is None or low < best[name]:
                    best[name] = low
    return best


def auto_tune(db: SequenceDatabase, c_l: int) -> SequenceDatabase:
    """Copy of ``db`` with each segment's threshold set to its normalized cross minimum."""
    scale = float(c_l * db.descriptor_bits)
    minima = cross_minima(db, c_l)
    return db.with_thresholds({name: low / scale for name, low in minima.items()})


# -- ground truth ----------------------------------------------------------------


@dataclass(frozen=True)
class TruthEntry:
    query_start: int
    query_end: int
    segment_name: str
    train_start: int
    train_end: int

    def contains(self, c: RecognitionCluster) -> bool:
        return (
            c.segment_name == self.segment_name
            and self.query_start <= c.mean_query_index <= self.query_end
            and self.train_start <= c.mean_train_index <= self.train_end
        )


def validate_truth(entries: Sequence[TruthEntry]) -> None:
    for e in entries:
        if e.query_start > e.query_end or e.train_start > e.train_end:
            raise MalformedTruth(f"inverted range in {e}")
    for k, a in enumerate(entries):
        for b in entries[k + 1 :]:
            if (
                a.segment_name == b.segment_name
                and a.query_start <= b.query_end
                and b.query_start <= a.query_end
                and a.train_start <= b.train_end
                and b.train_start <= a.train_end
            ):
                raise MalformedTruth(f"overlapping entries {a} and {b}")


def read_truth(path: str | Path) -> list[TruthEntry]:
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRUTH_FIELDS:
            raise MalformedTruth(f"{path}: line 1: expected header {','.join(TRUTH_FIELDS)}")
        for row in reader:
            if not row:
                continue
            try:
                qs, qe, name, ts, te = row
                entries.append(TruthEntry(int(qs), int(qe), name, int(ts), int(te)))
            except ValueError as exc:
                raise MalformedTruth(f"{path}: line {reader.line_num}: {exc}") from None
    validate_truth(entries)
    return entries


def score_against_ground_truth(
    clusters: Iterable[RecognitionCluster], truth: Sequence[TruthEntry]
) -> tuple[int, int, int]:
    """Return ``(correct, incorrect, distinct)``.

    A cluster is correct if its mean indices fall inside any truth entry;
    ``distinct`` counts truth entries hit by at least one cluster.
    """
    validate_truth(truth)
    correct = incorrect = 0
    hit: set[int] = set()
    for c in clusters:
        matched = [k for k, e in enumerate(truth) if e.contains(c)]
        if matched:
            correct += 1
            hit.update(matched)
        else:
            incorrect += 1
    return correct, incorrect, len(hit)
