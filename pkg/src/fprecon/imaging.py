"""Grayscale raster container, binary PGM I/O, block segmentation and
histogram equalization."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import IoFailure, MalformedPgm

BLOCK_SIZE = 8

PathLike = Union[str, "os.PathLike[str]"]


@dataclass(frozen=True, eq=False)
class GrayImage:
    """8-bit grayscale image; ``pixels`` is a (height, width) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("intensities must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        object.__setattr__(self, "pixels", arr)

    @classmethod
    def from_values(cls, width: int, height: int, values) -> "GrayImage":
        values = np.asarray(values)
        if values.size != width * height:
            raise ValueError("pixel count must equal width * height")
        return cls(values.reshape(height, width))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(
            np.array_equal(self.pixels, other.pixels)
        )

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class BlockGrid:
    width: int
    height: int
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if self.block_size != BLOCK_SIZE:
            raise ValueError("block size is fixed at 8")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid needs a non-empty image")

    @classmethod
    def for_image(cls, image: GrayImage) -> "BlockGrid":
        return cls(image.width, image.height)

    @property
    def cols(self) -> int:
        return -(-self.width // self.block_size)

    @property
    def rows(self) -> int:
        return -(-self.height // self.block_size)

    def bounds(self, row: int, col: int) -> tuple[int, int, int, int]:
        """Pixel bounds ``(y0, y1, x0, x1)`` of a block, clipped to the image."""
        b = self.block_size
        return (row * b, min((row + 1) * b, self.height), col * b, min((col + 1) * b, self.width))

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """(x, y) arrays of block-cell centres, shape (rows, cols)."""
        b = self.block_size
        cx = np.arange(self.cols) * b + b / 2.0
        cy = np.arange(self.rows) * b + b / 2.0
        return np.meshgrid(cx, cy)


@dataclass(frozen=True, eq=False)
class ForegroundMask:
    grid: BlockGrid
    flags: np.ndarray  # (rows, cols) bool

    def __post_init__(self):
        flags = np.asarray(self.flags, dtype=bool)
        if flags.shape != (self.grid.rows, self.grid.cols):
            raise ValueError(
                f"mask shape {flags.shape} does not match grid {(self.grid.rows, self.grid.cols)}"
            )
        object.__setattr__(self, "flags", flags)

    @classmethod
    def full(cls, width: int, height: int) -> "ForegroundMask":
        grid = BlockGrid(width, height)
        return cls(grid, np.ones((grid.rows, grid.cols), dtype=bool))

    def __eq__(self, other):
        if not isinstance(other, ForegroundMask):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.flags, other.flags))

    def matches(self, image: GrayImage) -> bool:
        return self.grid.width == image.width and self.grid.height == image.height

    def pixel_mask(self) -> np.ndarray:
        """Expand block flags to a (height, width) boolean array."""
        b = self.grid.block_size
        full = np.repeat(np.repeat(self.flags, b, axis=0), b, axis=1)
        return full[: self.grid.height, : self.grid.width]


def read_pgm(path: PathLike) -> GrayImage:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    if data[:2] != b"P5":
        raise MalformedPgm(f"{path}: not a binary PGM (magic {data[:2]!r})")

    # header: magic, width, height, maxval; '#' comments run to end of line
    fields: list[int] = []
    pos = 2
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedPgm(f"{path}: truncated header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise MalformedPgm(f"{path}: non-numeric header field {data[start:pos]!r}") from None
    if pos >= n or not data[pos : pos + 1].isspace():
        raise MalformedPgm(f"{path}: truncated header")
    pos += 1

    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedPgm(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise MalformedPgm(f"{path}: maxval must be 255, got {maxval}")
    payload = data[pos : pos + width * height]
    if len(payload) < width * height:
        raise MalformedPgm(
            f"{path}: expected {width * height} data bytes, found {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return GrayImage(pixels)


def write_pgm(image: GrayImage, path: PathLike) -> None:
    header = f"P5\n{image.width} {image.height}\n255\n".encode("ascii")
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(image.pixels, dtype=np.uint8).tobytes())
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def block_variances(image: GrayImage) -> np.ndarray:
    """Population intensity variance of each 8x8 block (edge blocks use
    in-bounds pixels only)."""
    grid = BlockGrid.for_image(image)
    px = image.pixels.astype(np.float64)
    out = np.empty((grid.rows, grid.cols))
    for r in range(grid.rows):
        for c in range(grid.cols):
            y0, y1, x0, x1 = grid.bounds(r, c)
            out[r, c] = px[y0:y1, x0:x1].var()
    return out


def block_gradient_moments(image: GrayImage) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-block sums Gxx, Gyy, Gxy of central-difference gradients."""
    grid = BlockGrid.for_image(image)
    px = image.pixels.astype(np.float64)
    gy, gx = np.gradient(px)
    out = [np.zeros((grid.rows, grid.cols)) for _ in range(3)]
    for r in range(grid.rows):
        for c in range(grid.cols):
            y0, y1, x0, x1 = grid.bounds(r, c)
            bx, by = gx[y0:y1, x0:x1], gy[y0:y1, x0:x1]
            out[0][r, c] = np.sum(bx * bx)
            out[1][r, c] = np.sum(by * by)
            out[2][r, c] = np.sum(bx * by)
    return out[0], out[1], out[2]


def segment(image: GrayImage, variance_threshold: float = 100.0) -> ForegroundMask:
    """Mark blocks whose intensity variance reaches ``variance_threshold`` as
    foreground."""
    grid = BlockGrid.for_image(image)
    return ForegroundMask(grid, block_variances(image) >= variance_threshold)


def round_half_up(values) -> np.ndarray:
    return np.floor(np.asarray(values, dtype=np.float64) + 0.5)


def equalize_histogram(image: GrayImage) -> GrayImage:
    """Classic CDF remapping; single-intensity images are returned as-is."""
    hist = np.bincount(image.pixels.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    total = int(cdf[-1])
    cdf_min = int(cdf[np.flatnonzero(cdf)[0]])
    if cdf_min == total:
        return GrayImage(image.pixels.copy())
    lut = round_half_up((cdf - cdf_min) / (total - cdf_min) * 255.0)
    lut = np.clip(lut, 0, 255).astype(np.uint8)
    return GrayImage(lut[image.pixels])
