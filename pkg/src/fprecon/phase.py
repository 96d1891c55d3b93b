"""Composite phase reconstruction.

The fingerprint is modelled as ``cos(psi_c + psi_s)``: ``psi_c`` is a smooth
phase made of one plane per 8x8 block whose gradient is normal to the local
ridge flow, ``psi_s`` is a sum of ``atan2`` spirals, one per minutia. A
spiral of polarity ``q`` inserts one extra ridge period on the side obtained
by rotating the local phase gradient ``G`` to ``q * (G_y, -G_x)``; that side is
where the minutia points.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyForeground,
    EmptyTemplate,
    OutOfBoundsMinutia,
)
from .imaging import BlockGrid, ForegroundMask, GrayImage, round_half_up, segment
from .minutiae import Kind, Template, extract_minutiae
from .orientation import OrientationField, field_from_minutiae

DEFAULT_FREQUENCY = 1.0 / 9.0
HULL_DILATION_BLOCKS = 2

_NEIGHBOURS = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class FrequencyMap:
    """Ridge frequency in cycles/pixel, constant over the foreground."""

    value: float = DEFAULT_FREQUENCY

    def __post_init__(self):
        if not (1.0 / 20.0 <= self.value <= 1.0 / 3.0):
            raise ValueError(f"ridge frequency {self.value} outside [1/20, 1/3]")


@dataclass(frozen=True, eq=False)
class PhaseImage:
    width: int
    height: int
    mask: ForegroundMask
    psi: np.ndarray  # (height, width); 0 outside the foreground
    planes: Optional[np.ndarray] = None  # (rows, cols, 3): gx, gy, offset per block

    def dump(self) -> str:
        return "\n".join(" ".join(f"{v:.4f}" for v in row) for row in self.psi) + "\n"


# ---------------------------------------------------------------------------
# spiral phase


def _check_in_bounds(t: Template, width: int, height: int) -> None:
    for m in t.minutiae:
        if not (0.0 <= m.x < width and 0.0 <= m.y < height):
            raise OutOfBoundsMinutia(f"minutia at ({m.x}, {m.y}) outside {width}x{height}")


def kind_polarity(kind: Kind) -> int:
    return 1 if kind is Kind.ENDING else -1


def spiral_phase(
    t: Template,
    width: int,
    height: int,
    polarities: Optional[Sequence[int]] = None,
) -> PhaseImage:
    """Sum of per-minutia spirals sampled at pixel centres ``(x+0.5, y+0.5)``.

    Polarity defaults to +1 for endings and -1 for bifurcations.
    """
    _check_in_bounds(t, width, height)
    if polarities is None:
        polarities = [kind_polarity(m.kind) for m in t.minutiae]
    elif len(polarities) != len(t):
        raise ValueError("one polarity per minutia required")

    xs = np.arange(width, dtype=np.float64) + 0.5
    ys = np.arange(height, dtype=np.float64)[:, None] + 0.5
    psi = np.zeros((height, width))
    for m, q in zip(t.minutiae, polarities):
        psi += q * np.arctan2(ys - m.y, xs - m.x)
    return PhaseImage(width, height, ForegroundMask.full(width, height), psi)


# ---------------------------------------------------------------------------
# continuous phase


def block_gradient(theta: float, freq: float) -> np.ndarray:
    """Phase gradient normal to ridges flowing along ``theta``."""
    k = 2.0 * math.pi * freq
    return np.array([-k * math.sin(theta), k * math.cos(theta)])


def edge_points(grid: BlockGrid, a: tuple[int, int], b: tuple[int, int]) -> np.ndarray:
    """Pixel coordinates (x, y) of the two pixel lines straddling the edge
    shared by 4-adjacent blocks ``a`` and ``b``."""
    (ra, ca), (rb, cb) = a, b
    if ra == rb and abs(ca - cb) == 1:
        y0, y1, _, _ = grid.bounds(ra, min(ca, cb))
        xe = max(ca, cb) * grid.block_size
        ys = np.arange(y0, y1, dtype=np.float64)
        xs = np.array([xe - 1.0, float(xe)])
        X, Y = np.meshgrid(xs, ys)
    elif ca == cb and abs(ra - rb) == 1:
        _, _, x0, x1 = grid.bounds(min(ra, rb), ca)
        ye = max(ra, rb) * grid.block_size
        xs = np.arange(x0, x1, dtype=np.float64)
        ys = np.array([ye - 1.0, float(ye)])
        X, Y = np.meshgrid(xs, ys)
    else:
        raise ValueError(f"blocks {a} and {b} are not 4-adjacent")
    return np.column_stack([X.ravel(), Y.ravel()])


def plane_value(plane: np.ndarray, pts: np.ndarray) -> np.ndarray:
    return pts @ plane[:2] + plane[2]


def wrap_phase(values):
    """Wrap phase differences into [-pi, pi)."""
    return np.mod(np.asarray(values) + np.pi, 2.0 * np.pi) - np.pi


def edge_mismatch(planes: np.ndarray, grid: BlockGrid, a, b) -> float:
    """Summed squared wrapped phase difference of two block planes on their
    shared edge."""
    pts = edge_points(grid, a, b)
    diff = wrap_phase(plane_value(planes[a], pts) - plane_value(planes[b], pts))
    return float(np.sum(diff * diff))


def _best_offset(resid: np.ndarray) -> tuple[float, float]:
    """Offset minimising the summed squared wrapped residual, and that sum.

    Starts from the circular mean and refines with least-squares steps on
    the residuals re-wrapped about the current estimate.
    """
    offset = float(np.angle(np.sum(np.exp(1j * resid))))
    for _ in range(4):
        step = float(np.mean(wrap_phase(resid - offset)))
        offset += step
        if abs(step) < 1e-12:
            break
    offset = float(wrap_phase(offset))
    r = wrap_phase(resid - offset)
    return offset, float(np.sum(r * r))


def _fit_block(g: np.ndarray, pts: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Sign and offset of plane ``±g`` best matching ``target`` at ``pts``
    modulo 2*pi; the positive sign wins ties."""
    best = None
    for sign in (1.0, -1.0):
        offset, ss = _best_offset(target - pts @ (sign * g))
        if best is None or ss < best[0]:
            best = (ss, sign, offset)
    _, sign, offset = best
    return np.array([sign * g[0], sign * g[1], offset])


def propagate_planes(field: OrientationField, freq: FrequencyMap) -> np.ndarray:
    """Breadth-first assignment of per-block planes.

    The seed is the foreground block nearest the foreground centroid
    (offset 0, positive gradient). Every other block picks the gradient sign
    and offset minimising the squared phase mismatch (mod 2*pi) against all
    of its already assigned 4-neighbours. Disconnected components are seeded in turn by
    their block nearest the centroid.
    """
    fg = field.mask.flags
    if not fg.any():
        raise EmptyForeground("continuous phase needs at least one foreground block")
    grid = field.grid
    rows, cols = fg.shape
    planes = np.full((rows, cols, 3), np.nan)
    assigned = np.zeros_like(fg)

    cx, cy = grid.centers()
    fr, fc = np.nonzero(fg)
    centroid = np.array([cx[fr, fc].mean(), cy[fr, fc].mean()])
    order = np.argsort(np.hypot(cx[fr, fc] - centroid[0], cy[fr, fc] - centroid[1]), kind="stable")

    for seed_idx in order:
        seed = (int(fr[seed_idx]), int(fc[seed_idx]))
        if assigned[seed]:
            continue
        g = block_gradient(field.theta[seed], freq.value)
        planes[seed] = (g[0], g[1], 0.0)
        assigned[seed] = True
        queued = {seed}
        queue = deque()
        for dr, dc in _NEIGHBOURS:
            n = (seed[0] + dr, seed[1] + dc)
            if 0 <= n[0] < rows and 0 <= n[1] < cols and fg[n] and n not in queued:
                queued.add(n)
                queue.append(n)
        while queue:
            blk = queue.popleft()
            pts, target = [], []
            for dr, dc in _NEIGHBOURS:
                n = (blk[0] + dr, blk[1] + dc)
                if 0 <= n[0] < rows and 0 <= n[1] < cols and assigned[n]:
                    p = edge_points(grid, blk, n)
                    pts.append(p)
                    target.append(plane_value(planes[n], p))
            g = block_gradient(field.theta[blk], freq.value)
            planes[blk] = _fit_block(g, np.vstack(pts), np.concatenate(target))
            assigned[blk] = True
            for dr, dc in _NEIGHBOURS:
                n = (blk[0] + dr, blk[1] + dc)
                if 0 <= n[0] < rows and 0 <= n[1] < cols and fg[n] and n not in queued:
                    queued.add(n)
                    queue.append(n)
    return planes


def render_planes(planes: np.ndarray, mask: ForegroundMask) -> np.ndarray:
    grid = mask.grid
    b = grid.block_size
    gx = np.repeat(np.repeat(planes[..., 0], b, 0), b, 1)[: grid.height, : grid.width]
    gy = np.repeat(np.repeat(planes[..., 1], b, 0), b, 1)[: grid.height, : grid.width]
    c = np.repeat(np.repeat(planes[..., 2], b, 0), b, 1)[: grid.height, : grid.width]
    xs = np.arange(grid.width, dtype=np.float64)
    ys = np.arange(grid.height, dtype=np.float64)[:, None]
    psi = gx * xs + gy * ys + c
    return np.where(mask.pixel_mask(), psi, 0.0)


def continuous_phase(field: OrientationField, freq: FrequencyMap = FrequencyMap()) -> PhaseImage:
    planes = propagate_planes(field, freq)
    psi = render_planes(planes, field.mask)
    grid = field.grid
    return PhaseImage(grid.width, grid.height, field.mask, psi, planes)


# ---------------------------------------------------------------------------
# rendering and validation


def compose_and_render(cont: PhaseImage, spiral: PhaseImage) -> GrayImage:
    if (cont.width, cont.height) != (spiral.width, spiral.height):
        raise DimensionMismatch(
            f"phase images differ: {cont.width}x{cont.height} vs {spiral.width}x{spiral.height}"
        )
    fg = cont.mask.pixel_mask() & spiral.mask.pixel_mask()
    psi = cont.psi + spiral.psi
    gray = round_half_up(127.5 * (1.0 + np.cos(psi)))
    return GrayImage(np.where(fg, gray, 255.0).astype(np.uint8))


def validate_minutiae(
    t: Template, rendered: GrayImage, mask: ForegroundMask, radius: float = 8
) -> tuple[Template, int]:
    """Re-extract minutiae from a rendering and compare them with ``t``.

    Returns the input minutiae that have an extracted counterpart within
    ``radius`` and the number of extracted minutiae with none.
    """
    if not mask.matches(rendered) or (t.width, t.height) != (rendered.width, rendered.height):
        raise DimensionMismatch("template, rendering and mask must share dimensions")
    found = extract_minutiae(rendered, mask)
    ix, iy, _ = t.as_arrays()
    fx, fy, _ = found.as_arrays()
    if len(t) and len(found):
        d = np.hypot(ix[:, None] - fx[None, :], iy[:, None] - fy[None, :])
        has_match = np.any(d <= radius, axis=1)
        spurious = int(np.sum(~np.any(d <= radius, axis=0)))
    else:
        has_match = np.zeros(len(t), dtype=bool)
        spurious = len(found)
    kept = Template(t.width, t.height, [m for m, ok in zip(t.minutiae, has_match) if ok])
    return kept, spurious


# ---------------------------------------------------------------------------
# reconstruction


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise; degenerate inputs return the
    distinct extreme points."""
    pts = sorted(set(map(tuple, points.tolist())))
    if len(pts) <= 2:
        return np.array(pts, dtype=np.float64)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1], dtype=np.float64)


def _distance_to_hull(hull: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    pts = np.column_stack([px, py])
    if len(hull) == 1:
        return np.hypot(px - hull[0, 0], py - hull[0, 1])
    edges = [(hull[i], hull[(i + 1) % len(hull)]) for i in range(len(hull))]
    if len(hull) == 2:
        edges = edges[:1]
    dist = np.full(len(pts), np.inf)
    inside = np.ones(len(pts), dtype=bool)
    for a, b in edges:
        ab = b - a
        ap = pts - a
        t = np.clip((ap @ ab) / (ab @ ab), 0.0, 1.0)
        proj = a + t[:, None] * ab
        dist = np.minimum(dist, np.hypot(*(pts - proj).T))
        inside &= (ab[0] * ap[:, 1] - ab[1] * ap[:, 0]) >= 0
    if len(hull) >= 3:
        dist[inside] = 0.0
    return dist


def reconstruction_mask(t: Template, full_frame: bool = False) -> ForegroundMask:
    """Blocks whose centre lies within two blocks of the minutiae convex hull."""
    if full_frame:
        return ForegroundMask.full(t.width, t.height)
    grid = BlockGrid(t.width, t.height)
    mx, my, _ = t.as_arrays()
    hull = _convex_hull(np.column_stack([mx, my]))
    cx, cy = grid.centers()
    d = _distance_to_hull(hull, cx.ravel(), cy.ravel())
    flags = (d <= HULL_DILATION_BLOCKS * grid.block_size).reshape(grid.rows, grid.cols)
    return ForegroundMask(grid, flags)


def direction_polarities(t: Template, planes: np.ndarray, block_size: int = 8) -> list[int]:
    """Spiral polarity per minutia so that the inserted ridge period falls on
    the side the minutia direction points to."""
    out = []
    for m in t.minutiae:
        gx, gy, _ = planes[int(m.y) // block_size, int(m.x) // block_size]
        if np.isnan(gx):
            out.append(kind_polarity(m.kind))
            continue
        along = math.cos(m.direction) * gy - math.sin(m.direction) * gx
        out.append(1 if along >= 0 else -1)
    return out


def emergent_direction(plane_gradient, polarity: int) -> float:
    """Direction a minutia appears to point when a spiral of ``polarity`` is
    planted in a block with phase gradient ``plane_gradient``."""
    gx, gy = plane_gradient[0], plane_gradient[1]
    return math.atan2(-polarity * gx, polarity * gy) % (2.0 * math.pi)


def reconstruct_phase(
    t: Template, freq: FrequencyMap = FrequencyMap(), full_frame: bool = False
) -> tuple[PhaseImage, PhaseImage]:
    """Continuous and spiral phase images for a template."""
    if len(t) == 0:
        raise EmptyTemplate("cannot reconstruct from an empty template")
    _check_in_bounds(t, t.width, t.height)
    mask = reconstruction_mask(t, full_frame)
    field = field_from_minutiae(t, mask)
    cont = continuous_phase(field, freq)
    spiral = spiral_phase(t, t.width, t.height, direction_polarities(t, cont.planes))
    return cont, spiral


def reconstruct(
    t: Template, freq: FrequencyMap = FrequencyMap(), full_frame: bool = False
) -> GrayImage:
    cont, spiral = reconstruct_phase(t, freq, full_frame)
    return compose_and_render(cont, spiral)


def reextract(image: GrayImage) -> Template:
    """Extract a template from a rendering, segmenting its blank background."""
    return extract_minutiae(image, segment(image))


def phase_circulation(psi: np.ndarray, loop: Sequence[tuple[int, int]]) -> float:
    """Sum of wrapped phase increments around a closed pixel loop of (x, y)."""
    vals = np.array([psi[y, x] for x, y in loop])
    steps = np.diff(np.append(vals, vals[0]))
    return float(np.sum(np.angle(np.exp(1j * steps))))


def frame_loop(width: int, height: int, inset: int = 0) -> list[tuple[int, int]]:
    """Clockwise 4-connected loop of (x, y) pixels ``inset`` from the frame edge."""
    x0, y0, x1, y1 = inset, inset, width - 1 - inset, height - 1 - inset
    loop = [(x, y0) for x in range(x0, x1)]
    loop += [(x1, y) for y in range(y0, y1)]
    loop += [(x, y1) for x in range(x1, x0, -1)]
    loop += [(x0, y) for y in range(y1, y0, -1)]
    return loop


def winding_number(psi: np.ndarray, loop) -> float:
    return phase_circulation(psi, loop) / (2.0 * math.pi)

