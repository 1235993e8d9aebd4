"""Training database model, directory ingestion and the ``.fabl`` file format.

File layout (little-endian)::

    magic        4s   b"FABL"
    version      u16  1
    bits         u32  descriptor width B
    segments     u32
    per segment:
        name_len u16, name (UTF-8)
        frames   u32
        thresh   f64  (NaN = unset)
        frames * ceil(B / 8) descriptor bytes
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .descriptor import (
    DESCRIPTOR_BITS,
    GlobalDescriptor,
    describe,
    descriptor_bytes,
    load_frame,
    preprocess,
    to_words,
)
from .errors import (
    BadMagic,
    CorruptLength,
    DuplicateSegment,
    EmptyDirectory,
    UnsupportedVersion,
    WidthMismatch,
)

MAGIC = b"FABL"
VERSION = 1
IMAGE_SUFFIXES = {".pgm", ".pnm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm"}

_HEADER = struct.Struct("<4sHII")
_NAME_LEN = struct.Struct("<H")
_SEGMENT_META = struct.Struct("<Id")


@dataclass(frozen=True)
class TrainSegment:
    name: str
    descriptors: tuple[GlobalDescriptor, ...]
    threshold: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "descriptors", tuple(self.descriptors))
        if not self.name:
            raise ValueError("segment name must be nonempty")
        if not self.descriptors:
            raise ValueError(f"segment {self.name!r} has no descriptors")
        widths = {d.nbits for d in self.descriptors}
        if len(widths) != 1:
            raise WidthMismatch(f"segment {self.name!r} mixes descriptor widths {sorted(widths)}")
        if self.threshold is not None:
            if math.isnan(self.threshold):
                object.__setattr__(self, "threshold", None)
            elif not 0.0 <= self.threshold <= 1.0:
                raise ValueError(f"threshold {self.threshold} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.descriptors)

    @property
    def descriptor_bits(self) -> int:
        return self.descriptors[0].nbits

    @cached_property
    def words(self) -> np.ndarray:
        """Descriptors packed as a read-only ``(n, words)`` uint64 array."""
        w = to_words(self.descriptors, self.descriptor_bits)
        w.setflags(write=False)
        return w

    def with_threshold(self, threshold: float | None) -> "TrainSegment":
        return replace(self, threshold=threshold)


@dataclass(frozen=True)
class SequenceDatabase:
    segments: tuple[TrainSegment, ...]
    descriptor_bits: int = DESCRIPTOR_BITS

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        names = [s.name for s in self.segments]
        if len(set(names)) != len(names):
            raise DuplicateSegment(f"segment names must be unique: {names}")
        for s in self.segments:
            if s.descriptor_bits != self.descriptor_bits:
                raise WidthMismatch(
                    f"segment {s.name!r} has {s.descriptor_bits}-bit descriptors, "
                    f"database expects {self.descriptor_bits}"
                )

    def __len__(self) -> int:
        return len(self.segments)

    def __getitem__(self, name: str) -> TrainSegment:
        for s in self.segments:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [s.name for s in self.segments]

    def with_segment(self, segment: TrainSegment) -> "SequenceDatabase":
        return SequenceDatabase(self.segments + (segment,), self.descriptor_bits)

    def with_thresholds(self, thresholds: dict[str, float | None]) -> "SequenceDatabase":
        segs = tuple(s.with_threshold(thresholds.get(s.name, s.threshold)) for s in self.segments)
        return SequenceDatabase(segs, self.descriptor_bits)


def list_images(path: str | Path) -> list[Path]:
    """Image files in ``path`` sorted by filename (code-point order)."""
    path = Path(path)
    if not path.is_dir():
        raise EmptyDirectory(f"{path} is not a directory")
    files = [p for p in path.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    return sorted(files, key=lambda p: p.name)


def ingest_directory(path: str | Path, segment_name: str) -> TrainSegment:
    files = list_images(path)
    if not files:
        raise EmptyDirectory(f"no image files in {path}")
    descriptors = [describe(preprocess(load_frame(f))) for f in files]
    return TrainSegment(segment_name, tuple(descriptors))


def dumps(db: SequenceDatabase) -> bytes:
    nbytes = descriptor_bytes(db.descriptor_bits)
    out = [_HEADER.pack(MAGIC, VERSION, db.descriptor_bits, len(db.segments))]
    for seg in db.segments:
        name = seg.name.encode("utf-8")
        if len(name) > 0xFFFF:
            raise ValueError(f"segment name too long ({len(name)} bytes)")
        out.append(_NAME_LEN.pack(len(name)))
        out.append(name)
        thresh = math.nan if seg.threshold is None else float(seg.threshold)
        out.append(_SEGMENT_META.pack(len(seg), thresh))
        blob = b"".join(d.data for d in seg.descriptors)
        assert len(blob) == nbytes * len(seg)
        out.append(blob)
    return b"".join(out)


def loads(buf: bytes) -> SequenceDatabase:
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, found {bytes(buf[:4])!r}")
    if len(buf) < _HEADER.size:
        raise CorruptLength("file ends inside the header")
    _, version, nbits, nseg = _HEADER.unpack_from(buf, 0)
    if version != VERSION:
        raise UnsupportedVersion(f"file version {version}, this reader supports {VERSION}")
    if nbits == 0:
        raise WidthMismatch("descriptor width of 0 bits")
    nbytes = descriptor_bytes(nbits)
    pos = _HEADER.size
    segments = []
    for k in range(nseg):
        if pos + _NAME_LEN.size > len(buf):
            raise CorruptLength(f"file ends before segment {k} header")
        (name_len,) = _NAME_LEN.unpack_from(buf, pos)
        pos += _NAME_LEN.size
        if pos + name_len + _SEGMENT_META.size > len(buf):
            raise CorruptLength(f"file ends inside segment {k} header")
        name = bytes(buf[pos : pos + name_len]).decode("utf-8")
        pos += name_len
        frames, thresh = _SEGMENT_META.unpack_from(buf, pos)
        pos += _SEGMENT_META.size
        end = pos + frames * nbytes
        if end > len(buf):
            raise CorruptLength(
                f"segment {name!r} declares {frames} frames but only "
                f"{(len(buf) - pos) // nbytes} fit in the file"
            )
        try:
            descriptors = tuple(
                GlobalDescriptor(bytes(buf[p : p + nbytes]), nbits) for p in range(pos, end, nbytes)
            )
        except ValueError as exc:
            raise WidthMismatch(f"segment {name!r}: {exc} (set bits beyond the declared {nbits})") from None
        pos = end
        segments.append(TrainSegment(name, descriptors, None if math.isnan(thresh) else thresh))
    if pos != len(buf):
        raise CorruptLength(f"{len(buf) - pos} trailing bytes after the last segment")
    return SequenceDatabase(tuple(segments), nbits)


def save(db: SequenceDatabase, path: str | Path) -> None:
    Path(path).write_bytes(dumps(db))


def load(path: str | Path) -> SequenceDatabase:
    return loads(Path(path).read_bytes())


def file_size(descriptor_bits: int, segments: Sequence[tuple[str, int]]) -> int:
    """Expected on-disk size for segments given as ``(name, frame_count)`` pairs."""
    per_frame = descriptor_bytes(descriptor_bits)
    return _HEADER.size + sum(
        _NAME_LEN.size + len(name.encode("utf-8")) + _SEGMENT_META.size + frames * per_frame
        for name, frames in segments
    )
