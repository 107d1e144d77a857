"""Codec token grids: vertical flattening, system concatenation, frame arithmetic.

Grids hold codebook-local indices. Two sentinels live above any codebook
index: ``PAD_SENTINEL`` fills unused codebook slots and ``SEP_SENTINEL``
marks the boundary between score systems.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .vocab import ModalityTag

COMPRESSION = 16
SAMPLE_RATE = 44100
HOP_SIZE = 512
IMAGE_SHIFTS_X = 8
IMAGE_SHIFTS_Y = 4
AUDIO_SHIFTS = 9

PAD_SENTINEL = 0xFFFF
SEP_SENTINEL = 0xFFFE

TGR_MAGIC = b"TGR1"
_TGR_HEADER = struct.Struct("<4sBBI")


@dataclass
class SystemGrid:
    """Token bundles of one score system, indexed ``entries[row, column, codebook]``."""

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries)
        if self.entries.ndim != 3:
            raise ValueError("SystemGrid entries must have shape (rows, columns, d)")

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    @property
    def columns(self) -> int:
        return self.entries.shape[1]

    @property
    def d(self) -> int:
        return self.entries.shape[2]

    @classmethod
    def from_row_major(cls, bundles: Sequence[Sequence[int]], rows: int, columns: int) -> "SystemGrid":
        arr = np.asarray(bundles)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.shape[0] != rows * columns:
            raise ValueError(f"expected {rows * columns} bundles, got {arr.shape[0]}")
        return cls(arr.reshape(rows, columns, arr.shape[1]))

    def __eq__(self, other):
        return isinstance(other, SystemGrid) and np.array_equal(self.entries, other.entries)


@dataclass
class TokenGrid:
    """An ``L x d`` array of token indices tagged with its modality.

    ``is_global`` marks grids whose entries are already ids in the unified
    vocabulary (the output of sequence wrapping) rather than codebook-local
    indices.
    """

    modality: ModalityTag
    entries: np.ndarray
    is_global: bool = False

    def __post_init__(self):
        self.modality = ModalityTag(self.modality)
        arr = np.asarray(self.entries, dtype=np.int64)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2:
            raise ValueError("TokenGrid entries must be 2-D (L, d)")
        if arr.size and (arr.min() < 0 or arr.max() > 0xFFFF):
            raise ValueError("token indices must fit in 16 bits")
        self.entries = arr

    @property
    def d(self) -> int:
        return self.entries.shape[1]

    def __len__(self) -> int:
        return self.entries.shape[0]

    def __eq__(self, other):
        return (
            isinstance(other, TokenGrid)
            and self.modality == other.modality
            and self.is_global == other.is_global
            and np.array_equal(self.entries, other.entries)
        )

    def validate(self, codebook_size: int) -> None:
        """Check every non-sentinel index is below ``codebook_size``."""
        body = self.entries[(self.entries != PAD_SENTINEL) & (self.entries != SEP_SENTINEL)]
        if body.size and body.max() >= codebook_size:
            raise ValueError(f"index {int(body.max())} >= codebook size {codebook_size}")


def grid_shape(width: int, height: int) -> tuple[int, int]:
    """(rows, columns) of the token grid for a ``width x height`` pixel system."""
    if width % COMPRESSION or height % COMPRESSION or width <= 0 or height <= 0:
        raise ValueError(f"system size {width}x{height} is not a positive multiple of {COMPRESSION}")
    return height // COMPRESSION, width // COMPRESSION


def flatten_system(grid: SystemGrid) -> TokenGrid:
    # column-major read-out: top-to-bottom inside a column, then left-to-right
    flat = grid.entries.transpose(1, 0, 2).reshape(-1, grid.d)
    return TokenGrid(ModalityTag.IMAGE, flat)


def unflatten_system(tokens: TokenGrid, rows: int, columns: int) -> SystemGrid:
    if len(tokens) != rows * columns:
        raise ValueError(f"length {len(tokens)} does not match {rows}x{columns}")
    return SystemGrid(tokens.entries.reshape(columns, rows, tokens.d).transpose(1, 0, 2))


def assemble_systems(systems: Sequence[TokenGrid], sep_id: int = SEP_SENTINEL) -> TokenGrid:
    """Concatenate flattened systems with one separator bundle between neighbours."""
    if not systems:
        raise ValueError("cannot assemble an empty list of systems")
    d = systems[0].d
    for s in systems:
        if s.modality != ModalityTag.IMAGE:
            raise ValueError(f"expected image grids, got {s.modality.name}")
        if s.d != d:
            raise ValueError("all systems must share the same codebook count")
    sep = np.full((1, d), PAD_SENTINEL, dtype=np.int64)
    sep[0, 0] = sep_id
    parts = []
    for i, s in enumerate(systems):
        if i:
            parts.append(sep)
        parts.append(s.entries)
    return TokenGrid(ModalityTag.IMAGE, np.concatenate(parts, axis=0))


def split_systems(tokens: TokenGrid, sep_id: int = SEP_SENTINEL) -> list[TokenGrid]:
    cuts = np.flatnonzero(tokens.entries[:, 0] == sep_id)
    bounds = [-1, *cuts.tolist(), len(tokens)]
    return [
        TokenGrid(tokens.modality, tokens.entries[lo + 1 : hi]) for lo, hi in zip(bounds, bounds[1:])
    ]


def image_token_count(sizes: Sequence[tuple[int, int]]) -> int:
    """Bundle count of an image made of systems with the given (width, height)."""
    total = 0
    for w, h in sizes:
        rows, cols = grid_shape(w, h)
        total += rows * cols
    return total + max(len(sizes) - 1, 0)


def audio_frame_count(duration: float) -> int:
    """Number of codec frames covering ``duration`` seconds."""
    if not duration > 0:
        raise ValueError(f"duration must be positive, got {duration}")
    # exact rational arithmetic so 20 s -> 1723 is not at the mercy of float rounding
    return math.ceil(Fraction(duration) * SAMPLE_RATE / HOP_SIZE)


@dataclass
class GrayImage:
    pixels: np.ndarray

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels)
        if self.pixels.ndim != 2:
            raise ValueError("GrayImage pixels must be 2-D (height, width)")
        if self.pixels.size and (self.pixels.min() < 0 or self.pixels.max() > 255):
            raise ValueError("pixel values must lie in [0, 255]")
        self.pixels = self.pixels.astype(np.uint8)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, GrayImage) and np.array_equal(self.pixels, other.pixels)


def lower_median(values: np.ndarray) -> int:
    flat = np.sort(np.asarray(values).ravel())
    return int(flat[(flat.size - 1) // 2])


def threshold_image(img: GrayImage, offset: int = 20) -> GrayImage:
    """Whiten every pixel strictly above ``median - offset``."""
    if img.pixels.size == 0:
        return GrayImage(img.pixels.copy())
    cut = lower_median(img.pixels) - offset
    out = img.pixels.copy()
    out[img.pixels.astype(np.int32) > cut] = 255
    return GrayImage(out)


def enumerate_shift_variants(kind: ModalityTag) -> list:
    """Augmentation offsets: (dx, dy) pixel shifts for images, sample offsets for audio."""
    kind = ModalityTag(kind)
    if kind == ModalityTag.IMAGE:
        return [(dx, dy) for dy in range(IMAGE_SHIFTS_Y) for dx in range(IMAGE_SHIFTS_X)]
    if kind == ModalityTag.AUDIO:
        step = round(HOP_SIZE / AUDIO_SHIFTS)
        return [i * step for i in range(AUDIO_SHIFTS) if i * step < HOP_SIZE]
    raise ValueError(f"no shift augmentation for symbolic modality {kind.name}")


def symbolic_grid(modality: ModalityTag, tokens: Sequence[str], vocabulary: Sequence[str]) -> TokenGrid:
    index = {name: i for i, name in enumerate(vocabulary)}
    try:
        ids = [index[t] for t in tokens]
    except KeyError as exc:
        raise ValueError(f"token {exc.args[0]!r} is not in the {ModalityTag(modality).name} vocabulary") from None
    return TokenGrid(modality, np.asarray(ids, dtype=np.int64).reshape(-1, 1))


def symbolic_tokens(grid: TokenGrid, vocabulary: Sequence[str]) -> list[str]:
    if grid.d != 1:
        raise ValueError("symbolic grids have a single codebook")
    return [vocabulary[i] for i in grid.entries[:, 0].tolist()]


# -- TGR1 binary format --------------------------------------------------------


def dumps_tgr(grid: TokenGrid) -> bytes:
    header = _TGR_HEADER.pack(TGR_MAGIC, int(grid.modality), grid.d, len(grid))
    return header + grid.entries.astype("<u2").tobytes()


def loads_tgr(data: bytes) -> TokenGrid:
    if len(data) < _TGR_HEADER.size:
        raise ValueError("truncated TGR1 header")
    magic, modality, d, length = _TGR_HEADER.unpack_from(data)
    if magic != TGR_MAGIC:
        raise ValueError(f"bad magic {magic!r}, expected {TGR_MAGIC!r}")
    body = data[_TGR_HEADER.size :]
    if len(body) != 2 * length * d:
        raise ValueError(f"TGR1 body has {len(body)} bytes, expected {2 * length * d}")
    arr = np.frombuffer(body, dtype="<u2").astype(np.int64).reshape(length, d)
    return TokenGrid(ModalityTag(modality), arr)


def read_tgr_header(path: str | Path) -> tuple[ModalityTag, int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_TGR_HEADER.size)
    if len(head) < _TGR_HEADER.size:
        raise ValueError(f"{path}: truncated TGR1 header")
    magic, modality, d, length = _TGR_HEADER.unpack(head)
    if magic != TGR_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    return ModalityTag(modality), d, length


def write_tgr(path: str | Path, grid: TokenGrid) -> None:
    Path(path).write_bytes(dumps_tgr(grid))


def read_tgr(path: str | Path) -> TokenGrid:
    return loads_tgr(Path(path).read_bytes())


# -- PGM (P5) -------------------------------------------------------------------


def _pgm_tokens(data: bytes):
    pos = 0
    n = len(data)
    while True:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        yield data[start:pos], pos


def loads_pgm(data: bytes) -> GrayImage:
    tokens = _pgm_tokens(data)
    magic, _ = next(tokens)
    if magic != b"P5":
        raise ValueError(f"not a binary PGM (magic {magic!r})")
    width = int(next(tokens)[0])
    height = int(next(tokens)[0])
    maxval_tok, pos = next(tokens)
    if int(maxval_tok) > 255:
        raise ValueError("only 8-bit PGM is supported")
    raster = data[pos + 1 : pos + 1 + width * height]
    if len(raster) != width * height:
        raise ValueError("truncated PGM raster")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def dumps_pgm(img: GrayImage) -> bytes:
    return f"P5\n{img.width} {img.height}\n255\n".encode("ascii") + img.pixels.tobytes()


def read_pgm(path: str | Path) -> GrayImage:
    return loads_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, img: GrayImage) -> None:
    Path(path).write_bytes(dumps_pgm(img))
