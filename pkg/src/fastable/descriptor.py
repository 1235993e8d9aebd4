"""Frames, global binary descriptors and the Hamming kernel.

A frame is reduced to 64x64 by box averaging and then summarised by an
LDB-style global descriptor: the image is split into 2x2, 3x3, 4x4 and 5x5
grids, and every pair of cells in a grid contributes three comparison bits
(mean intensity, mean horizontal gradient, mean vertical gradient).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import InputTooSmall, LengthMismatch, UnreadableImage, WrongSize

FRAME_SIZE = 64
GRID_LEVELS = (2, 3, 4, 5)
BITS_PER_PAIR = 3


def _pair_count(g: int) -> int:
    cells = g * g
    return cells * (cells - 1) // 2


DESCRIPTOR_BITS = BITS_PER_PAIR * sum(_pair_count(g) for g in GRID_LEVELS)  # 1386


def descriptor_bytes(nbits: int) -> int:
    return (nbits + 7) // 8


DESCRIPTOR_BYTES = descriptor_bytes(DESCRIPTOR_BITS)  # 174


@dataclass(frozen=True, eq=False)
class Frame:
    """8-bit grayscale image, row-major ``(height, width)``."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2:
            raise ValueError(f"expected a 2-D grayscale array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if px.size and (px.min() < 0 or px.max() > 255):
                raise ValueError("pixel intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self):
        return hash((self.pixels.shape, self.pixels.tobytes()))


@dataclass(frozen=True)
class GlobalDescriptor:
    """Packed descriptor bits; bit k lives in byte k // 8 at position k % 8 (LSB first).

    Pad bits past ``nbits`` are always zero.
    """

    data: bytes
    nbits: int = DESCRIPTOR_BITS

    def __post_init__(self):
        if len(self.data) != descriptor_bytes(self.nbits):
            raise LengthMismatch(
                f"{self.nbits}-bit descriptor needs {descriptor_bytes(self.nbits)} bytes, "
                f"got {len(self.data)}"
            )
        spare = len(self.data) * 8 - self.nbits
        if spare and self.data[-1] >> (8 - spare):
            raise ValueError("descriptor pad bits must be zero")

    @classmethod
    def from_bits(cls, bits: Sequence[int] | np.ndarray) -> "GlobalDescriptor":
        arr = np.asarray(bits, dtype=bool)
        return cls(np.packbits(arr, bitorder="little").tobytes(), nbits=arr.size)

    def bits(self) -> np.ndarray:
        raw = np.frombuffer(self.data, dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little")[: self.nbits].astype(bool)


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma, rounded half-up: (299 R + 587 G + 114 B + 500) // 1000."""
    rgb = np.asarray(rgb, dtype=np.int64)
    y = (299 * rgb[..., 0] + 587 * rgb[..., 1] + 114 * rgb[..., 2] + 500) // 1000
    return y.astype(np.uint8)


def load_frame(path: str | Path) -> Frame:
    """Read an image file (PGM/PNG/JPEG, anything Pillow opens) as a grayscale Frame."""
    from PIL import Image

    path = Path(path)
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode == "L":
                pixels = np.asarray(img, dtype=np.uint8)
            elif img.mode in ("RGB", "RGBA", "P", "LA", "1", "CMYK", "YCbCr"):
                pixels = to_gray(np.asarray(img.convert("RGB")))
            else:
                raise UnreadableImage(path.name, f"unsupported pixel mode {img.mode}")
    except UnreadableImage:
        raise
    except Exception as exc:  # Pillow decoders raise assorted types on corrupt input
        raise UnreadableImage(path.name, str(exc)) from exc
    return Frame(pixels)


def save_pgm(frame: Frame, path: str | Path) -> None:
    """Write a binary (P5) PGM."""
    path = Path(path)
    header = f"P5\n{frame.width} {frame.height}\n255\n".encode("ascii")
    path.write_bytes(header + frame.pixels.tobytes())


def _box_starts(size: int, cells: int) -> np.ndarray:
    # first pixel x with floor(x * cells / size) == c
    return np.array([(c * size + cells - 1) // cells for c in range(cells)])


def _box_sums(a: np.ndarray, row_starts: np.ndarray, col_starts: np.ndarray) -> np.ndarray:
    return np.add.reduceat(np.add.reduceat(a, row_starts, axis=0), col_starts, axis=1)


def _box_counts(size_r: int, size_c: int, row_starts, col_starts) -> np.ndarray:
    rows = np.diff(np.append(row_starts, size_r))
    cols = np.diff(np.append(col_starts, size_c))
    return np.outer(rows, cols)


def preprocess(frame: Frame) -> Frame:
    """Downscale to 64x64 by area averaging, each output pixel rounded half-up."""
    h, w = frame.height, frame.width
    if h < FRAME_SIZE or w < FRAME_SIZE:
        raise InputTooSmall(f"frame is {w}x{h}, need at least {FRAME_SIZE}x{FRAME_SIZE}")
    if h == FRAME_SIZE and w == FRAME_SIZE:
        return frame
    rs = _box_starts(h, FRAME_SIZE)
    cs = _box_starts(w, FRAME_SIZE)
    sums = _box_sums(frame.pixels.astype(np.int64), rs, cs)
    counts = _box_counts(h, w, rs, cs)
    return Frame(((2 * sums + counts) // (2 * counts)).astype(np.uint8))


def _greater_bits(sums: np.ndarray, counts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # mean_a > mean_b compared exactly in integers
    return sums[a] * counts[b] > sums[b] * counts[a]


def describe(frame: Frame) -> GlobalDescriptor:
    if frame.height != FRAME_SIZE or frame.width != FRAME_SIZE:
        raise WrongSize(f"describe needs a {FRAME_SIZE}x{FRAME_SIZE} frame, got {frame.width}x{frame.height}")
    img = frame.pixels.astype(np.int64)
    gx = np.zeros_like(img)
    gx[:, :-1] = img[:, 1:] - img[:, :-1]
    gy = np.zeros_like(img)
    gy[:-1, :] = img[1:, :] - img[:-1, :]

    chunks = []
    for g in GRID_LEVELS:
        starts = _box_starts(FRAME_SIZE, g)
        counts = _box_counts(FRAME_SIZE, FRAME_SIZE, starts, starts).ravel()
        a, b = np.triu_indices(g * g, k=1)
        per_pair = [
            _greater_bits(_box_sums(channel, starts, starts).ravel(), counts, a, b)
            for channel in (img, gx, gy)
        ]
        chunks.append(np.stack(per_pair, axis=1).ravel())
    return GlobalDescriptor.from_bits(np.concatenate(chunks))


def hamming(a: GlobalDescriptor, b: GlobalDescriptor) -> int:
    if a.nbits != b.nbits:
        raise LengthMismatch(f"descriptor widths differ: {a.nbits} vs {b.nbits}")
    x = np.bitwise_xor(np.frombuffer(a.data, np.uint8), np.frombuffer(b.data, np.uint8))
    return int(np.bitwise_count(x).sum())


def to_words(descriptors: Iterable[GlobalDescriptor], nbits: int = DESCRIPTOR_BITS) -> np.ndarray:
    """Pack descriptors into a ``(count, words)`` uint64 array, zero padded to 8-byte rows."""
    nbytes = descriptor_bytes(nbits)
    width = -(-nbytes // 8) * 8
    blobs = []
    for d in descriptors:
        if d.nbits != nbits:
            raise LengthMismatch(f"descriptor widths differ: {d.nbits} vs {nbits}")
        blobs.append(d.data)
    raw = np.frombuffer(b"".join(blobs), dtype=np.uint8).reshape(len(blobs), nbytes)
    padded = np.zeros((len(blobs), width), dtype=np.uint8)
    padded[:, :nbytes] = raw
    return padded.view(np.uint64)
