"""Binary object masks, uniform illumination sampling and plain-text
PBM/PGM image I/O."""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from matplotlib.path import Path as _Polygon

BUILTIN_SIZE = 64

# Right halves (x >= 32) in continuous 64x64 image coordinates, y pointing down.
# Each outline is closed by mirroring about x = 32.
_AIRCRAFT_RIGHT = [
    (32.0, 12.0),
    (61.0, 37.0),
    (58.0, 42.0),
    (50.0, 38.0),
    (44.0, 45.0),
    (38.0, 39.0),
    (32.0, 44.0),
]
_BIRD_RIGHT = [
    (32.0, 20.0),
    (35.0, 24.0),
    (46.0, 14.0),
    (61.0, 21.0),
    (50.0, 22.0),
    (39.0, 31.0),
    (36.0, 40.0),
    (40.0, 50.0),
    (32.0, 46.0),
]


class MaskFormatError(ValueError):
    """Malformed PBM input; the message carries the line and column."""


class PixelCoord(NamedTuple):
    x: int
    y: int


class Reflection(enum.Enum):
    REFLECTED = "reflected"
    ABSORBED = "absorbed"


@dataclass(frozen=True, eq=False)
class ObjectMask:
    """Binary reflectance map, indexed ``pixels[y, x]`` (1 reflects, 0 absorbs)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.array(self.pixels, dtype=np.uint8)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got shape {px.shape}")
        if not np.isin(px, (0, 1)).all():
            raise ValueError("mask pixels must be 0 or 1")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def reflective_count(self) -> int:
        return int(self.pixels.sum())

    def reflective_pixels(self) -> np.ndarray:
        """Flat row-major indices of reflective pixels."""
        return np.flatnonzero(self.pixels.ravel())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ObjectMask):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)

    def __hash__(self) -> int:
        return hash((self.pixels.shape, self.pixels.tobytes()))


def _mirror(right: list[tuple[float, float]]) -> list[tuple[float, float]]:
    left = [(2 * 32.0 - x, y) for x, y in reversed(right[1:-1])]
    return right + left


def polygon_mask(vertices, width: int, height: int) -> ObjectMask:
    """Rasterize a closed polygon by testing pixel centres."""
    ys, xs = np.mgrid[0:height, 0:width]
    centres = np.column_stack([xs.ravel() + 0.5, ys.ravel() + 0.5])
    inside = _Polygon(vertices).contains_points(centres)
    return ObjectMask(inside.reshape(height, width).astype(np.uint8))


def builtin_mask(name: str) -> ObjectMask:
    outlines = {"aircraft": _AIRCRAFT_RIGHT, "bird": _BIRD_RIGHT}
    if name not in outlines:
        raise KeyError(f"unknown built-in mask {name!r}; choose from {sorted(outlines)}")
    return polygon_mask(_mirror(outlines[name]), BUILTIN_SIZE, BUILTIN_SIZE)


def resolve_mask(ref: str | os.PathLike) -> ObjectMask:
    """Built-in mask name or path to a PBM file."""
    if str(ref) in ("aircraft", "bird"):
        return builtin_mask(str(ref))
    return load_mask(ref)


def _tokens(text: str):
    """Yield (token, line, column) with ``#`` comments removed; 1-based positions."""
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        col = 0
        for tok in line.split():
            col = line.index(tok, col)
            yield tok, lineno, col + 1
            col += len(tok)


def parse_pbm(text: str) -> ObjectMask:
    toks = _tokens(text)
    try:
        magic, line, col = next(toks)
    except StopIteration:
        raise MaskFormatError("empty file: expected 'P1' header") from None
    if magic != "P1":
        raise MaskFormatError(f"line {line}, col {col}: expected 'P1', got {magic!r}")

    dims = []
    for label in ("width", "height"):
        try:
            tok, line, col = next(toks)
        except StopIteration:
            raise MaskFormatError(f"unexpected end of file reading {label}") from None
        if not tok.isdigit() or int(tok) < 1:
            raise MaskFormatError(
                f"line {line}, col {col}: {label} must be a positive integer, got {tok!r}"
            )
        dims.append(int(tok))
    width, height = dims

    bits: list[int] = []
    for tok, line, col in toks:
        # plain PBM allows pixels without separating whitespace
        for k, ch in enumerate(tok):
            if ch not in "01":
                raise MaskFormatError(
                    f"line {line}, col {col + k}: pixel value must be 0 or 1, got {ch!r}"
                )
            bits.append(ord(ch) - 48)
    if len(bits) != width * height:
        raise MaskFormatError(
            f"dimension mismatch: header says {width}x{height} = {width * height} "
            f"pixels, found {len(bits)}"
        )
    return ObjectMask(np.array(bits, dtype=np.uint8).reshape(height, width))


def load_mask(path: str | os.PathLike) -> ObjectMask:
    """Read a plain PBM ("P1") file; black (1) pixels are reflective."""
    with open(path, encoding="ascii") as f:
        return parse_pbm(f.read())


def format_pbm(mask: ObjectMask) -> str:
    rows = [" ".join(str(int(b)) for b in row) for row in mask.pixels]
    return f"P1\n{mask.width} {mask.height}\n" + "\n".join(rows) + "\n"


def write_mask(mask: ObjectMask, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(format_pbm(mask))


def sample_positions(mask: ObjectMask, u1, u2) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized uniform pixel choice: ``x = floor(u1 * width)``, ``y = floor(u2 * height)``."""
    x = np.minimum((np.asarray(u1) * mask.width).astype(np.int64), mask.width - 1)
    y = np.minimum((np.asarray(u2) * mask.height).astype(np.int64), mask.height - 1)
    return x, y


def sample_position(mask: ObjectMask, u1: float, u2: float) -> PixelCoord:
    x, y = sample_positions(mask, u1, u2)
    return PixelCoord(int(x), int(y))


def reflect(mask: ObjectMask, p: PixelCoord) -> Reflection:
    if not (0 <= p.x < mask.width and 0 <= p.y < mask.height):
        raise IndexError(f"pixel {tuple(p)} outside {mask.width}x{mask.height} mask")
    return Reflection.REFLECTED if mask.pixels[p.y, p.x] else Reflection.ABSORBED


def format_pgm(counts) -> str:
    counts = np.asarray(counts)
    if counts.ndim != 2:
        raise ValueError(f"expected a 2-D count grid, got shape {counts.shape}")
    if counts.size and counts.min() < 0:
        raise ValueError("counts must be non-negative")
    maxval = int(counts.max()) if counts.size else 0
    if maxval > 65535:
        raise ValueError(f"count {maxval} exceeds the PGM maxval limit 65535")
    height, width = counts.shape
    rows = [" ".join(str(int(c)) for c in row) for row in counts]
    return f"P2\n{width} {height}\n{max(maxval, 1)}\n" + "\n".join(rows) + "\n"


def write_image_pgm(counts, path: str | os.PathLike) -> None:
    """Write a count grid as plain PGM; maxval is the largest count (1 if all zero)."""
    text = format_pgm(counts)
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(text)


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    with open(path, encoding="ascii") as f:
        toks = [t for t, _, _ in _tokens(f.read())]
    if not toks or toks[0] != "P2":
        raise ValueError(f"{path}: not a plain PGM file")
    width, height, _maxval = (int(t) for t in toks[1:4])
    values = np.array([int(t) for t in toks[4:]], dtype=np.int64)
    if values.size != width * height:
        raise ValueError(f"{path}: expected {width * height} values, found {values.size}")
    return values.reshape(height, width)
