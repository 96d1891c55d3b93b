"""Minutiae data model, text template format and forward extraction
(binarize -> thin -> crossing number -> spurious filtering)."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage
from skimage.morphology import skeletonize

from .errors import (
    DimensionMismatch,
    IoFailure,
    MalformedTemplate,
    NotBinary,
    OutOfBounds,
)
from .imaging import ForegroundMask, GrayImage, block_gradient_moments

TWO_PI = 2.0 * math.pi

# 8-neighbour ring in cyclic order starting north, clockwise: (dy, dx)
RING = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))

TRACE_LENGTH = 5


class Kind(enum.Enum):
    ENDING = "E"
    BIFURCATION = "B"


def wrap_2pi(angle: float) -> float:
    a = math.fmod(angle, TWO_PI)
    if a < 0:
        a += TWO_PI
    if a >= TWO_PI:
        a = 0.0
    return a


@dataclass(frozen=True)
class Minutia:
    x: float
    y: float
    direction: float
    kind: Kind = Kind.ENDING

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "direction", wrap_2pi(float(self.direction)))
        if not isinstance(self.kind, Kind):
            object.__setattr__(self, "kind", Kind(self.kind))


@dataclass(frozen=True)
class Template:
    width: int
    height: int
    minutiae: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "minutiae", tuple(self.minutiae))

    def __len__(self):
        return len(self.minutiae)

    def __iter__(self):
        return iter(self.minutiae)

    def in_bounds(self, m: Minutia) -> bool:
        return 0.0 <= m.x < self.width and 0.0 <= m.y < self.height

    def out_of_bounds(self) -> list:
        return [m for m in self.minutiae if not self.in_bounds(m)]

    def as_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(x, y, direction) float arrays."""
        if not self.minutiae:
            empty = np.zeros(0)
            return empty, empty.copy(), empty.copy()
        arr = np.array([(m.x, m.y, m.direction) for m in self.minutiae], dtype=np.float64)
        return arr[:, 0], arr[:, 1], arr[:, 2]


# ---------------------------------------------------------------------------
# template file format


def format_template(t: Template) -> str:
    lines = [f"{t.width} {t.height}"]
    for m in t.minutiae:
        lines.append(f"{m.x:.6f} {m.y:.6f} {m.direction:.6f} {m.kind.value}")
    return "\n".join(lines) + "\n"


def parse_template(text: str, source: str = "<string>") -> Template:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise MalformedTemplate(f"{source}: empty template file")
    head = rows[0]
    if len(head) != 2:
        raise MalformedTemplate(f"{source}: header must be 'width height'")
    try:
        width, height = int(head[0]), int(head[1])
    except ValueError:
        raise MalformedTemplate(f"{source}: non-numeric header {head}") from None
    if width < 1 or height < 1:
        raise MalformedTemplate(f"{source}: bad dimensions {width}x{height}")

    minutiae = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != 4:
            raise MalformedTemplate(f"{source}:{lineno}: expected 'x y direction kind'")
        try:
            x, y, d = float(row[0]), float(row[1]), float(row[2])
        except ValueError:
            raise MalformedTemplate(f"{source}:{lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in (x, y, d)):
            raise MalformedTemplate(f"{source}:{lineno}: non-finite field")
        try:
            kind = Kind(row[3])
        except ValueError:
            raise MalformedTemplate(f"{source}:{lineno}: bad kind token {row[3]!r}") from None
        if not (0.0 <= x < width and 0.0 <= y < height):
            raise MalformedTemplate(f"{source}:{lineno}: ({x}, {y}) outside {width}x{height}")
        if (x, y) in seen:
            raise MalformedTemplate(f"{source}:{lineno}: duplicate position ({x}, {y})")
        seen.add((x, y))
        minutiae.append(Minutia(x, y, d, kind))
    return Template(width, height, minutiae)


def write_template(t: Template, path) -> None:
    try:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(format_template(t))
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_template(path) -> Template:
    try:
        with open(path, encoding="ascii") as fh:
            text = fh.read()
    except UnicodeDecodeError:
        raise MalformedTemplate(f"{path}: not an ASCII template") from None
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return parse_template(text, str(path))


# ---------------------------------------------------------------------------
# extraction


def _check_dims(image: GrayImage, mask: ForegroundMask) -> None:
    if not mask.matches(image):
        raise DimensionMismatch(
            f"mask grid is {mask.grid.width}x{mask.grid.height}, "
            f"image is {image.width}x{image.height}"
        )


def binarize(image: GrayImage, mask: ForegroundMask) -> GrayImage:
    """Ridge pixels (0) are foreground pixels darker than their block mean."""
    _check_dims(image, mask)
    grid = mask.grid
    px = image.pixels.astype(np.float64)
    out = np.full(px.shape, 255, dtype=np.uint8)
    for r, c in zip(*np.nonzero(mask.flags)):
        y0, y1, x0, x1 = grid.bounds(r, c)
        block = px[y0:y1, x0:x1]
        out[y0:y1, x0:x1] = np.where(block < block.mean(), 0, 255)
    return GrayImage(out)


def _ridge(binary: GrayImage) -> np.ndarray:
    px = binary.pixels
    if not np.all((px == 0) | (px == 255)):
        raise NotBinary("expected only the values 0 and 255")
    return px == 0


def thin(binary: GrayImage) -> GrayImage:
    """Reduce ridges (value 0) to a one-pixel-wide 8-connected skeleton."""
    ridge = _ridge(binary)
    skel = skeletonize(ridge)
    return GrayImage(np.where(skel, 0, 255).astype(np.uint8))


def crossing_number(skeleton: GrayImage, x: int, y: int) -> int:
    ridge = _ridge(skeleton)
    h, w = ridge.shape
    if not (1 <= x <= w - 2 and 1 <= y <= h - 2):
        raise OutOfBounds(f"({x}, {y}) is not an interior pixel of a {w}x{h} image")
    p = [int(ridge[y + dy, x + dx]) for dy, dx in RING]
    return sum(abs(p[i] - p[(i + 1) % 8]) for i in range(8)) // 2


def crossing_number_map(ridge: np.ndarray) -> np.ndarray:
    """Crossing number of every interior pixel of a boolean skeleton; border
    pixels get 0."""
    h, w = ridge.shape
    cn = np.zeros((h, w), dtype=np.int64)
    if h < 3 or w < 3:
        return cn
    r = ridge.astype(np.int64)
    ring = [r[1 + dy : h - 1 + dy, 1 + dx : w - 1 + dx] for dy, dx in RING]
    total = sum(np.abs(ring[i] - ring[(i + 1) % 8]) for i in range(8))
    cn[1:-1, 1:-1] = total // 2
    return cn


def _neighbours(ridge, y, x):
    h, w = ridge.shape
    for dy, dx in RING:
        yy, xx = y + dy, x + dx
        if 0 <= yy < h and 0 <= xx < w and ridge[yy, xx]:
            yield yy, xx


def _trace(ridge, start, visited, steps):
    """Walk ``steps`` pixels along the skeleton from ``start`` (already the
    first step); prefers 4-neighbours at each step."""
    cy, cx = start
    visited.add(start)
    for _ in range(steps - 1):
        cands = [p for p in _neighbours(ridge, cy, cx) if p not in visited]
        if not cands:
            break
        cands.sort(key=lambda p: abs(p[0] - cy) + abs(p[1] - cx))
        cy, cx = cands[0]
        visited.add((cy, cx))
    return cy, cx


def _ring_runs(ridge, y, x):
    """Contiguous runs of ridge pixels around the 8-ring of (y, x)."""
    on = [bool(ridge[y + dy, x + dx]) for dy, dx in RING]
    if all(on):
        return [list(range(8))]
    first_off = on.index(False)
    runs, cur = [], []
    for k in range(8):
        i = (first_off + k) % 8
        if on[i]:
            cur.append(i)
        elif cur:
            runs.append(cur)
            cur = []
    if cur:
        runs.append(cur)
    return runs


def _run_start(run, y, x):
    # orthogonal neighbours sit at even ring indices
    for i in run:
        if i % 2 == 0:
            return y + RING[i][0], x + RING[i][1]
    i = run[0]
    return y + RING[i][0], x + RING[i][1]


def ending_direction(ridge: np.ndarray, x: int, y: int, length: int = TRACE_LENGTH) -> float:
    """Angle of the displacement obtained by following the ridge away from
    its termination."""
    runs = _ring_runs(ridge, y, x)
    start = _run_start(runs[0], y, x)
    ey, ex = _trace(ridge, start, {(y, x)}, length)
    return wrap_2pi(math.atan2(ey - y, ex - x))


def bifurcation_direction(ridge: np.ndarray, x: int, y: int, length: int = TRACE_LENGTH) -> float:
    """Valley bisector: mean direction of the two branches closest in angle.

    This points into the opening of the fork, i.e. opposite to the stem.
    """
    runs = _ring_runs(ridge, y, x)
    visited = {(y, x)}
    for run in runs:
        for i in run:
            visited.add((y + RING[i][0], x + RING[i][1]))
    angles = []
    for run in runs:
        start = _run_start(run, y, x)
        ey, ex = _trace(ridge, start, set(visited), length)
        angles.append(math.atan2(ey - y, ex - x))
    if len(angles) < 3:
        return wrap_2pi(angles[0] + math.pi) if angles else 0.0

    best = None
    for i in range(len(angles)):
        for j in range(i + 1, len(angles)):
            sep = abs(math.remainder(angles[i] - angles[j], TWO_PI))
            if best is None or sep < best[0]:
                best = (sep, i, j)
    _, i, j = best
    vx = math.cos(angles[i]) + math.cos(angles[j])
    vy = math.sin(angles[i]) + math.sin(angles[j])
    if math.hypot(vx, vy) < 1e-9:
        stem = next(k for k in range(len(angles)) if k not in (i, j))
        return wrap_2pi(angles[stem] + math.pi)
    return wrap_2pi(math.atan2(vy, vx))


def border_distance(mask: ForegroundMask) -> np.ndarray:
    """Per-pixel Euclidean distance to the nearest background pixel, the
    area outside the frame counting as background."""
    padded = np.pad(mask.pixel_mask(), 1, constant_values=False)
    return ndimage.distance_transform_edt(padded)[1:-1, 1:-1]


def remove_close_pairs(points: np.ndarray, min_separation: float) -> list[int]:
    """Indices surviving repeated closest-pair removal.

    The closest pair under ``min_separation`` is dropped as a whole (a short
    spur or bridge yields exactly such an ending/bifurcation pair), then the
    next closest; equal distances are taken lowest (i, j) first.
    """
    alive = list(range(len(points)))
    if len(alive) < 2 or min_separation <= 0:
        return alive
    pts = np.asarray(points, dtype=np.float64)
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    dist[np.tril_indices(len(pts))] = np.inf  # keep i < j only
    while True:
        flat = int(np.argmin(dist))  # row-major argmin: lowest (i, j) on ties
        i, j = divmod(flat, dist.shape[1])
        if not dist[i, j] < min_separation:
            break
        for k in (i, j):
            dist[k, :] = np.inf
            dist[:, k] = np.inf
            alive.remove(k)
    return alive


def local_orientation(gxx, gyy, gxy, row: int, col: int, reach: int = 1) -> float:
    """Ridge orientation in [0, pi) from gradient moments pooled over the
    (2*reach+1)^2 blocks around (row, col); NaN when the window is flat."""
    sl = (slice(max(row - reach, 0), row + reach + 1), slice(max(col - reach, 0), col + reach + 1))
    sxx, syy, sxy = gxx[sl].sum(), gyy[sl].sum(), gxy[sl].sum()
    if sxx + syy <= 0.0:
        return math.nan
    return (0.5 * math.atan2(2.0 * sxy, sxx - syy) + math.pi / 2) % math.pi


def snap_direction(traced: float, orientation: float) -> float:
    """Whichever of ``orientation`` and ``orientation + pi`` is closer to the
    traced direction."""
    if math.isnan(orientation):
        return traced
    fwd = abs(math.remainder(orientation - traced, TWO_PI))
    return wrap_2pi(orientation if fwd <= math.pi / 2 else orientation + math.pi)


def extract_minutiae(
    image: GrayImage,
    mask: ForegroundMask,
    border_margin: float = 10,
    min_separation: float = 5,
) -> Template:
    """Minutiae of a grayscale print.

    Candidates are skeleton pixels with crossing number 1 (ending) or 3
    (bifurcation). The skeleton trace near a minutia is bent by the
    singularity itself, so the trace only fixes the sense of the direction;
    its axis is the squared-gradient ridge orientation pooled over the 3x3
    blocks around the minutia.
    """
    _check_dims(image, mask)
    skeleton = thin(binarize(image, mask))
    ridge = skeleton.pixels == 0
    cn = crossing_number_map(ridge)
    ys, xs = np.nonzero(ridge & ((cn == 1) | (cn == 3)))  # row-major scan order

    dist = border_distance(mask)
    gxx, gyy, gxy = block_gradient_moments(image)
    b = mask.grid.block_size
    found = []
    for y, x in zip(ys.tolist(), xs.tolist()):
        if dist[y, x] <= border_margin:
            continue
        if cn[y, x] == 1:
            kind, traced = Kind.ENDING, ending_direction(ridge, x, y)
        else:
            kind, traced = Kind.BIFURCATION, bifurcation_direction(ridge, x, y)
        axis = local_orientation(gxx, gyy, gxy, y // b, x // b)
        found.append(Minutia(x, y, snap_direction(traced, axis), kind))

    if found:
        keep = remove_close_pairs(np.array([(m.x, m.y) for m in found]), min_separation)
        found = [found[i] for i in keep]
    return Template(image.width, image.height, found)


def minutiae_from(items: Iterable, width: int, height: int) -> Template:
    """Convenience constructor from ``(x, y, direction, kind)`` tuples."""
    return Template(width, height, [m if isinstance(m, Minutia) else Minutia(*m) for m in items])
