from __future__ import annotations

import numpy as np
import pytest

from fastable.descriptor import DESCRIPTOR_BITS, GlobalDescriptor
from fastable.sequence_store import SequenceDatabase, TrainSegment


def random_descriptor(rng: np.random.Generator, nbits: int = DESCRIPTOR_BITS) -> GlobalDescriptor:
    return GlobalDescriptor.from_bits(rng.integers(0, 2, nbits))


def random_descriptors(rng: np.random.Generator, count: int, nbits: int = DESCRIPTOR_BITS) -> list[GlobalDescriptor]:
    bits = rng.integers(0, 2, (count, nbits)).astype(bool)
    return [GlobalDescriptor.from_bits(row) for row in bits]


def correlated_descriptors(rng: np.random.Generator, count: int, flips: int = 40,
                           nbits: int = DESCRIPTOR_BITS) -> list[GlobalDescriptor]:
    """Random walk in descriptor space, so neighbouring frames look alike."""
    bits = rng.integers(0, 2, nbits).astype(bool)
    out = []
    for _ in range(count):
        out.append(GlobalDescriptor.from_bits(bits))
        idx = rng.choice(nbits, flips, replace=False)
        bits = bits.copy()
        bits[idx] = ~bits[idx]
    return out


def random_database(rng: np.random.Generator, segments: int, min_len: int, max_len: int,
                    nbits: int = DESCRIPTOR_BITS) -> SequenceDatabase:
    segs = []
    for k in range(segments):
        n = int(rng.integers(min_len, max_len + 1))
        segs.append(TrainSegment(f"seg{k}", random_descriptors(rng, n, nbits)))
    return SequenceDatabase(tuple(segs), nbits)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(f"[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
