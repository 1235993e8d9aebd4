"""Exit criteria for the package, one test per criterion.

Each test records a PASS/FAIL line that is printed in the pytest terminal
summary.  Timing criteria (3 and 4) run real benchmarks and take minutes.
"""

import itertools
import math
import struct
import time
from fractions import Fraction

import numpy as np
import pytest

from fastable import sequence_store as store
from fastable.analysis import (
    ClusterParams,
    ConsistencyParams,
    auto_tune,
    cluster,
    consistency_filter,
    cross_minima,
)
from fastable.bench import SyntheticSpec, run_grid
from fastable.descriptor import DESCRIPTOR_BITS, GlobalDescriptor, hamming
from fastable.errors import BadMagic, CorruptLength, UnsupportedVersion, WidthMismatch
from fastable.matcher import (
    HammingCounter,
    MatchParams,
    Recognition,
    expected_calls,
    match_baseline,
    match_database,
    match_fast,
    recognitions_csv,
    stream_open,
    stream_push,
)
from fastable.sequence_store import SequenceDatabase, TrainSegment

from conftest import correlated_descriptors, random_descriptors, record_criterion

WINDOWS = (1, 2, 5, 20, 40)


def test_c1_oracle_equivalence():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    instances = mismatches = 0
    for k in range(200):
        c_l = WINDOWS[k % len(WINDOWS)]
        n = int(rng.integers(c_l, 501))
        m = int(rng.integers(c_l, 201))
        if k % 2:
            train, test = correlated_descriptors(rng, n, flips=int(rng.integers(1, 300))), \
                correlated_descriptors(rng, m, flips=int(rng.integers(1, 300)))
        else:
            train, test = random_descriptors(rng, n), random_descriptors(rng, m)
        seg = TrainSegment("s", train)
        params = MatchParams(c_l)
        fast = match_fast(seg, test, params)
        base = match_baseline(seg, test, params)
        instances += 1
        if not (fast.raw.dtype.kind == base.raw.dtype.kind == "i" and np.array_equal(fast.raw, base.raw)):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = instances >= 200 and mismatches == 0 and elapsed < 60
    record_criterion(1, "oracle equivalence", ok,
                     f"{instances} instances, {mismatches} mismatching, {elapsed:.1f}s (limit 60s)")
    assert mismatches == 0
    assert elapsed < 60


def test_c2_complexity_independence():
    rng = np.random.default_rng(7)
    n, m = 4000, 1000
    seg = TrainSegment("s", random_descriptors(rng, n))
    query = TrainSegment("q", random_descriptors(rng, m)).words
    fast_calls, base_calls, interior_cost = {}, {}, {}
    for c_l in (20, 40, 60, 80):
        cf, cb = HammingCounter(), HammingCounter()
        match_fast(seg, query, MatchParams(c_l), cf)
        match_baseline(seg, query, MatchParams(c_l), cb)
        rows, cols = n - c_l + 1, m - c_l + 1
        fast_calls[c_l], base_calls[c_l] = cf.calls, cb.calls
        direct = rows * c_l + (cols - 1) * c_l  # first column + first row of each later column
        interior_cost[c_l] = Fraction(cf.calls - direct, (rows - 1) * (cols - 1))
    base_exact = all(base_calls[c] == (n - c + 1) * (m - c + 1) * c for c in base_calls)
    fast_exact = all(fast_calls[c] == expected_calls(n, m, c, "fast") for c in fast_calls)
    per_cell_constant = set(interior_cost.values()) == {2}
    ok = base_exact and fast_exact and per_cell_constant
    record_criterion(
        2, "complexity independence", ok,
        f"fast calls {fast_calls} (2 per interior cell for every c_l: {per_cell_constant}); "
        f"baseline calls exact: {base_exact}; baseline c_l=80/c_l=20 ratio "
        f"{base_calls[80] / base_calls[20]:.2f} vs fast {fast_calls[80] / fast_calls[20]:.3f}",
    )
    assert base_exact and fast_exact and per_cell_constant


@pytest.mark.slow
def test_c3_speedup_reproduction():
    start = time.perf_counter()
    specs = [SyntheticSpec(1000, 1000, c_l, flip_prob=0.05, seed=c_l) for c_l in (20, 40, 60, 80)]
    report = run_grid(specs, repetitions=5)
    elapsed = time.perf_counter() - start
    passed = {r.c_l: r.speedup >= r.c_l / 4 for r in report.rows}
    ok = all(passed.values()) and elapsed < 600
    detail = ", ".join(f"c_l={r.c_l}: {r.speedup:.1f}x (need {r.c_l / 4:g}x)" for r in report.rows)
    record_criterion(3, "speedup >= c_l/4 at n=m=1000", ok, f"{detail}; {elapsed:.0f}s (limit 600s)")
    print("\n" + report.table())
    assert all(passed.values()), detail
    assert elapsed < 600


@pytest.mark.slow
def test_c4_nordland_shape():
    report = run_grid([SyntheticSpec(10_000, 1000, 300, flip_prob=0.05, seed=300)], repetitions=3)
    (row,) = report.rows
    ok = row.speedup >= 50
    record_criterion(4, "n=10000, m=1000, c_l=300 speedup >= 50x", ok,
                     f"{row.speedup:.1f}x (baseline {row.baseline_time:.2f}s, fast {row.fast_time:.3f}s)")
    print("\n" + report.table())
    assert row.speedup >= 50


def _replay_query(rng, db, c_l, pieces=3):
    """Splice windows of training segments, plus unrelated frames, into a query."""
    frames = []
    for _ in range(pieces):
        seg = db.segments[int(rng.integers(len(db.segments)))]
        length = int(rng.integers(c_l, len(seg) + 1))
        start = int(rng.integers(0, len(seg) - length + 1))
        frames.extend(seg.descriptors[start : start + length])
        frames.extend(random_descriptors(rng, int(rng.integers(0, 4))))
    return frames


def test_c5_batch_stream_equivalence():
    rng = np.random.default_rng(55)
    checked = identical = total_hits = 0
    for k in range(50):
        c_l = int(rng.integers(1, 6))
        segs = tuple(
            TrainSegment(f"seg{s}", correlated_descriptors(rng, int(rng.integers(c_l + 2, 40)), flips=int(rng.integers(20, 200))))
            for s in range(int(rng.integers(2, 5)))
        )
        db = auto_tune(SequenceDatabase(segs), c_l)
        query = _replay_query(rng, db, c_l)
        params = MatchParams(c_l)
        state = stream_open(db, params)
        streamed = [r for d in query for r in stream_push(state, d)]
        stream_csv = recognitions_csv(streamed, c_l, DESCRIPTOR_BITS)
        fast_csv = recognitions_csv(match_database(db, query, params, "fast"), c_l, DESCRIPTOR_BITS)
        base_csv = recognitions_csv(match_database(db, query, params, "baseline"), c_l, DESCRIPTOR_BITS)
        checked += 1
        identical += stream_csv == fast_csv == base_csv
        total_hits += len(streamed)
    ok = checked >= 50 and identical == checked and total_hits > 0
    record_criterion(5, "batch/stream equivalence", ok,
                     f"{identical}/{checked} databases byte-identical CSV, {total_hits} recognitions total")
    assert identical == checked and total_hits > 0


def _union_find(points, eps):
    parent = list(range(len(points)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in itertools.combinations(range(len(points)), 2):
        if (points[a][0] - points[b][0]) ** 2 + (points[a][1] - points[b][1]) ** 2 <= eps ** 2:
            parent[find(a)] = find(b)
    comps = {}
    for p, pt in enumerate(points):
        comps.setdefault(find(p), []).append(pt)
    return sorted(sorted(c) for c in comps.values())


def test_c6_clustering_oracle():
    rng = np.random.default_rng(66)
    sets = partition_ok = 0
    worst_rel = 0.0
    for _ in range(100):
        count = int(rng.integers(1, 80))
        span = int(rng.integers(5, 60))
        pts = sorted({(int(rng.integers(1, span)), int(rng.integers(1, span))) for _ in range(count)})
        recs = [Recognition("s", i, j, 0, 0.0) for i, j in pts]
        clusters = cluster(recs, ClusterParams(2, 1))
        got = sorted(sorted((r.train_index, r.query_index) for r in c.members) for c in clusters)
        sets += 1
        partition_ok += got == _union_find(pts, 2)
        for c in clusters:
            for attr, key in (("mean_train_index", 0), ("mean_query_index", 1)):
                exact = Fraction(sum(p[key] for p in [(r.train_index, r.query_index) for r in c.members]), c.member_count)
                worst_rel = max(worst_rel, abs(Fraction(getattr(c, attr)) - exact) / exact)
    ok = sets >= 100 and partition_ok == sets and worst_rel <= 1e-12
    record_criterion(6, "DBScan == union-find (eps=2, min_pts=1)", ok,
                     f"{partition_ok}/{sets} sets identical, worst mean rel. error {float(worst_rel):.1e} (limit 1e-12)")
    assert partition_ok == sets and worst_rel <= 1e-12


def _brute_minima(db, c_l):
    out = {}
    for a in db.segments:
        best = math.inf
        for b in db.segments:
            if b is a:
                continue
            pair = [[hamming(x, y) for y in b.descriptors] for x in a.descriptors]
            for i in range(len(a) - c_l + 1):
                for j in range(len(b) - c_l + 1):
                    best = min(best, sum(pair[i + k][j + k] for k in range(c_l)))
        out[a.name] = best
    return out


def test_c7_auto_tune_oracle():
    rng = np.random.default_rng(77)
    dbs = exact = silent = 0
    for _ in range(50):
        c_l = int(rng.integers(1, 5))
        segs = tuple(
            TrainSegment(f"s{k}", correlated_descriptors(rng, int(rng.integers(c_l, 14)), flips=int(rng.integers(5, 150))))
            for k in range(int(rng.integers(2, 5)))
        )
        db = SequenceDatabase(segs)
        minima = cross_minima(db, c_l)
        exact += minima == _brute_minima(db, c_l)
        tuned = auto_tune(db, c_l)
        quiet = True
        for seg in tuned.segments:
            assert seg.threshold == minima[seg.name] / (c_l * DESCRIPTOR_BITS)
            rest = SequenceDatabase(tuple(s.with_threshold(None) for s in tuned.segments if s is not seg))
            if match_database(rest, list(seg.descriptors), MatchParams(c_l, seg.threshold)):
                quiet = False
        silent += quiet
        dbs += 1
    ok = dbs >= 50 and exact == dbs and silent == dbs
    record_criterion(7, "auto-tune == brute force, no self-recognitions", ok,
                     f"{exact}/{dbs} exact raw minima, {silent}/{dbs} databases silent at own thresholds")
    assert exact == dbs and silent == dbs


def test_c8_consistency_filter():
    rng = np.random.default_rng(88)
    streams = defs = monotone = 0
    for _ in range(1000):
        length = int(rng.integers(1, 60))
        scores = rng.random(length)
        if rng.random() < 0.3:
            scores = np.round(scores, 1)  # exercise ties with t_p
        t_p = float(np.round(rng.random(), 1))
        outputs = {}
        ok_def = True
        for c_w in range(1, 9):
            out = consistency_filter(scores.tolist(), ConsistencyParams(c_w, t_p))
            expected = [k + 1 >= c_w and all(scores[k - c_w + 1 : k + 1] > t_p) for k in range(length)]
            ok_def &= out == expected
            outputs[c_w] = out
        ok_mono = all(
            not outputs[c + 1][k] or outputs[c][k] for c in range(1, 8) for k in range(length)
        )
        streams += 1
        defs += ok_def
        monotone += ok_mono
    ok = streams >= 1000 and defs == streams and monotone == streams
    record_criterion(8, "consistency filter", ok,
                     f"{defs}/{streams} streams match windowed AND, {monotone}/{streams} monotone in c_w")
    assert defs == streams and monotone == streams


def _corruptions(buf: bytes):
    name_len = struct.unpack_from("<H", buf, 14)[0]
    bad_magic = b"FABX" + buf[4:]
    bad_version = bytearray(buf)
    struct.pack_into("<H", bad_version, 4, 99)
    short = buf[:-1]
    overlong = bytearray(buf)
    frames = struct.unpack_from("<I", buf, 16 + name_len)[0]
    struct.pack_into("<I", overlong, 16 + name_len, frames + 1)
    zero_width = bytearray(buf)
    struct.pack_into("<I", zero_width, 6, 0)
    narrower = bytearray(buf)  # same byte count per frame, but bit 1385 is set in the payload
    struct.pack_into("<I", narrower, 6, DESCRIPTOR_BITS - 1)
    return [
        (BadMagic, bad_magic),
        (UnsupportedVersion, bytes(bad_version)),
        (CorruptLength, short),
        (CorruptLength, bytes(overlong)),
        (CorruptLength, buf + b"\x00\x00"),
        (WidthMismatch, bytes(zero_width)),
        (WidthMismatch, bytes(narrower)),
    ]


def test_c9_persistence_roundtrip(tmp_path):
    rng = np.random.default_rng(99)
    roundtrips = unset_seen = 0
    for k in range(100):
        segs = []
        for s in range(int(rng.integers(1, 5))):
            t = None if rng.random() < 0.4 else float(rng.random())
            unset_seen += t is None
            segs.append(TrainSegment(f"seg-{k}-{s}-ü", random_descriptors(rng, int(rng.integers(1, 12))), t))
        db = SequenceDatabase(tuple(segs))
        path = tmp_path / f"db{k}.fabl"
        store.save(db, path)
        roundtrips += store.load(path) == db

    bits = np.zeros(DESCRIPTOR_BITS, bool)
    bits[DESCRIPTOR_BITS - 1] = True
    fixture_db = SequenceDatabase((TrainSegment("a", [GlobalDescriptor.from_bits(bits)] * 3, 0.5),))
    raised = []
    for err, blob in _corruptions(store.dumps(fixture_db)):
        try:
            store.loads(blob)
            raised.append(False)
        except err:
            raised.append(True)
        except Exception:
            raised.append(False)
    ok = roundtrips == 100 and unset_seen > 0 and all(raised)
    record_criterion(9, "persistence round-trip", ok,
                     f"{roundtrips}/100 round-trips ({unset_seen} unset thresholds), "
                     f"{sum(raised)}/{len(raised)} corrupted fixtures raised the declared error")
    assert roundtrips == 100 and unset_seen > 0 and all(raised)
