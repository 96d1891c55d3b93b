"""Blockwise ridge orientation: interpolation from a minutiae template and
squared-gradient estimation from an image."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyForeground, EmptyTemplate
from .imaging import BlockGrid, ForegroundMask, GrayImage, block_gradient_moments
from .minutiae import Template

EPS_PX2 = 1.0
DEGENERATE = 1e-9


def wrap_pi(angle):
    """Map angles into [0, pi); works on scalars and arrays."""
    a = np.mod(angle, np.pi)
    a = np.where(a >= np.pi, 0.0, a)
    if np.ndim(a) == 0:
        return float(a)
    return a


def angular_distance(a, b):
    """Distance between two orientations (defined mod pi), in [0, pi/2]."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    out = np.min(np.abs(np.stack([d - np.pi, d, d + np.pi])), axis=0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True, eq=False)
class OrientationField:
    mask: ForegroundMask
    theta: np.ndarray  # (rows, cols); NaN on background blocks

    @property
    def grid(self) -> BlockGrid:
        return self.mask.grid

    def values(self) -> np.ndarray:
        """Theta of the foreground blocks, row-major."""
        return self.theta[self.mask.flags]

    def dump(self) -> str:
        """Text grid of theta, one block row per line; background blocks are
        written as ``nan``."""
        lines = []
        for row in self.theta:
            lines.append(" ".join("nan" if np.isnan(v) else f"{v:.4f}" for v in row))
        return "\n".join(lines) + "\n"


def field_from_minutiae(t: Template, mask: ForegroundMask) -> OrientationField:
    """Inverse-square-distance average of minutia directions in the
    doubled-angle domain, evaluated at each foreground block centre.

    Angles are accumulated relative to the nearest minutia, so a single
    minutia reproduces its own direction (mod pi) bit-exactly. A cancelled
    sum falls back to the nearest minutia.
    """
    if len(t) == 0:
        raise EmptyTemplate("orientation needs at least one minutia")
    if not mask.flags.any():
        raise EmptyForeground("orientation needs at least one foreground block")

    mx, my, md = t.as_arrays()
    cx, cy = mask.grid.centers()
    rows, cols = np.nonzero(mask.flags)
    px, py = cx[rows, cols], cy[rows, cols]

    d2 = (px[:, None] - mx[None, :]) ** 2 + (py[:, None] - my[None, :]) ** 2
    weights = 1.0 / (EPS_PX2 + d2)
    nearest = np.argmin(d2, axis=1)  # first index on ties
    ref = md[nearest]

    rel = 2.0 * (md[None, :] - ref[:, None])
    sx = np.sum(weights * np.cos(rel), axis=1)
    sy = np.sum(weights * np.sin(rel), axis=1)
    half = np.where(np.hypot(sx, sy) < DEGENERATE, 0.0, 0.5 * np.arctan2(sy, sx))

    theta = np.full(mask.flags.shape, np.nan)
    theta[rows, cols] = wrap_pi(wrap_pi(ref) + half)
    return OrientationField(mask, theta)


def _fill_from_resolved(theta: np.ndarray, resolved: np.ndarray, fg: np.ndarray) -> None:
    """Breadth-first copy of resolved thetas into unresolved foreground blocks."""
    queue = deque(zip(*np.nonzero(resolved)))
    rows, cols = theta.shape
    done = resolved.copy()
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (0, 1), (1, 0), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < rows and 0 <= cc < cols and fg[rr, cc] and not done[rr, cc]:
                theta[rr, cc] = theta[r, c]
                done[rr, cc] = True
                queue.append((rr, cc))
    # foreground components with no resolved block at all
    theta[fg & ~done] = 0.0


def field_from_image(image: GrayImage, mask: ForegroundMask) -> OrientationField:
    if not mask.matches(image):
        raise DimensionMismatch(
            f"mask grid is {mask.grid.width}x{mask.grid.height}, "
            f"image is {image.width}x{image.height}"
        )
    gxx, gyy, gxy = block_gradient_moments(image)
    fg = mask.flags
    gradient_dir = 0.5 * np.arctan2(2.0 * gxy, gxx - gyy)
    theta = np.full(fg.shape, np.nan)
    flat = (gxx + gyy) <= 0.0
    resolved = fg & ~flat
    theta[resolved] = wrap_pi(gradient_dir[resolved] + math.pi / 2)
    if np.any(fg & flat):
        _fill_from_resolved(theta, resolved, fg)
    return OrientationField(mask, theta)
