"""Synthetic prints with known minutiae, and rigid "other impression"
perturbations of them. These serve as ground truth for round-trip and
attack tests."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import InvalidSpec
from .imaging import ForegroundMask, GrayImage, round_half_up
from .minutiae import Kind, Minutia, Template
from .orientation import OrientationField, wrap_pi
from .phase import (
    FrequencyMap,
    compose_and_render,
    continuous_phase,
    emergent_direction,
    kind_polarity,
    spiral_phase,
)

MIN_PERIODS_APART = 3.0


@dataclass(frozen=True)
class ConstantField:
    theta: float = 0.0

    def at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.full(np.broadcast(x, y).shape, float(self.theta))


@dataclass(frozen=True)
class ArchField:
    amplitude: float = 0.3
    wavelength: float = 300.0

    def at(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.amplitude * np.sin(2.0 * math.pi * np.asarray(x) / self.wavelength) + 0 * y


def parse_field(text: str):
    """``constant:THETA`` or ``arch:AMPLITUDE:WAVELENGTH``."""
    kind, _, rest = text.partition(":")
    try:
        args = [float(v) for v in rest.split(":")] if rest else []
    except ValueError:
        raise InvalidSpec(f"bad field description {text!r}") from None
    if kind == "constant" and len(args) <= 1:
        return ConstantField(*args)
    if kind == "arch" and len(args) <= 2:
        return ArchField(*args)
    raise InvalidSpec(f"bad field description {text!r}")


@dataclass(frozen=True)
class SynthSpec:
    width: int
    height: int
    field_kind: object = field(default_factory=ConstantField)
    planted: tuple = ()
    seed: int = 0
    freq: float = 1.0 / 9.0


def check_spec(spec: SynthSpec) -> None:
    if spec.width < 1 or spec.height < 1:
        raise InvalidSpec("image dimensions must be positive")
    try:
        FrequencyMap(spec.freq)
    except ValueError as exc:
        raise InvalidSpec(str(exc)) from None
    min_dist = MIN_PERIODS_APART / spec.freq
    pts = [(m.x, m.y) for m in spec.planted]
    for m in spec.planted:
        if not (0.0 <= m.x < spec.width and 0.0 <= m.y < spec.height):
            raise InvalidSpec(f"planted minutia ({m.x}, {m.y}) out of bounds")
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if math.dist(pts[a], pts[b]) < min_dist:
                raise InvalidSpec(
                    f"planted minutiae {a} and {b} closer than {MIN_PERIODS_APART} ridge periods"
                )


def random_spec(
    width: int,
    height: int,
    n_minutiae: int,
    seed: int,
    field_kind=None,
    freq: float = 1.0 / 9.0,
    margin: float = 24.0,
    max_tries: int = 10000,
) -> SynthSpec:
    """Scatter ``n_minutiae`` of random kind by rejection sampling so that
    every pair is at least three ridge periods apart."""
    if n_minutiae > 0 and (width <= 2 * margin or height <= 2 * margin):
        raise InvalidSpec(f"{width}x{height} leaves no room inside a {margin} px margin")
    rng = np.random.default_rng(seed)
    if field_kind is None:
        field_kind = ConstantField(float(rng.uniform(0.0, math.pi)))
    min_dist = MIN_PERIODS_APART / freq
    pts: list[tuple[float, float]] = []
    tries = 0
    while len(pts) < n_minutiae:
        tries += 1
        if tries > max_tries:
            raise InvalidSpec(f"could not place {n_minutiae} minutiae in {width}x{height}")
        p = (float(rng.uniform(margin, width - margin)), float(rng.uniform(margin, height - margin)))
        if all(math.dist(p, q) >= min_dist for q in pts):
            pts.append(p)
    kinds = rng.integers(0, 2, size=n_minutiae)
    planted = tuple(
        Minutia(x, y, 0.0, Kind.ENDING if k == 0 else Kind.BIFURCATION)
        for (x, y), k in zip(pts, kinds)
    )
    return SynthSpec(width, height, field_kind, planted, seed, freq)


def orientation_field(spec: SynthSpec) -> OrientationField:
    mask = ForegroundMask.full(spec.width, spec.height)
    cx, cy = mask.grid.centers()
    return OrientationField(mask, wrap_pi(spec.field_kind.at(cx, cy)))


def generate(spec: SynthSpec) -> tuple[GrayImage, Template]:
    """Render a print and return it with its ground-truth template.

    Spirals use the kind polarity (+1 ending, -1 bifurcation). The planted
    directions are ignored: each ground-truth direction is the one the
    rendering actually shows, i.e. toward the side where the spiral inserts
    its extra ridge period.
    """
    check_spec(spec)
    cont = continuous_phase(orientation_field(spec), FrequencyMap(spec.freq))
    planted = Template(spec.width, spec.height, spec.planted)
    image = compose_and_render(cont, spiral_phase(planted, spec.width, spec.height))

    truth = []
    for m in spec.planted:
        g = cont.planes[int(m.y) // 8, int(m.x) // 8]
        truth.append(replace(m, direction=emergent_direction(g, kind_polarity(m.kind))))
    return image, Template(spec.width, spec.height, truth)


def _rigid(x, y, cx, cy, dx, dy, rot):
    if rot == 0.0:
        return x + dx, y + dy  # exact for pure shifts
    c, s = math.cos(rot), math.sin(rot)
    ox, oy = x - cx, y - cy
    return c * ox - s * oy + cx + dx, s * ox + c * oy + cy + dy


def perturb(
    image: GrayImage,
    t: Template,
    dx: float,
    dy: float,
    rot: float,
    dropout: float,
    seed: int,
) -> tuple[GrayImage, Template]:
    """Rotate by ``rot`` about the frame centre, shift by ``(dx, dy)``, then
    drop each minutia with probability ``dropout``.

    The image is resampled bilinearly with white fill; minutiae leaving the
    frame are removed.
    """
    if not 0.0 <= dropout < 1.0:
        raise ValueError("dropout must lie in [0, 1)")
    h, w = image.height, image.width
    cx, cy = w / 2.0, h / 2.0

    # inverse map: output pixel -> source coordinate
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sx, sy = _rigid(xx - dx, yy - dy, cx, cy, 0.0, 0.0, -rot)
    warped = ndimage.map_coordinates(
        image.pixels.astype(np.float64), [sy, sx], order=1, mode="constant", cval=255.0
    )
    out_img = GrayImage(np.clip(round_half_up(warped), 0, 255).astype(np.uint8))

    draws = np.random.default_rng(seed).random(len(t))
    moved = []
    for m, u in zip(t.minutiae, draws):
        if u < dropout:
            continue
        nx, ny = _rigid(m.x, m.y, cx, cy, dx, dy, rot)
        if 0.0 <= nx < w and 0.0 <= ny < h:
            moved.append(Minutia(nx, ny, m.direction + rot, m.kind))
    return out_img, Template(t.width, t.height, moved)


def impressions(
    image: GrayImage,
    t: Template,
    count: int,
    seed: int,
    max_shift: float = 15.0,
    max_rot: float = math.pi / 6,
    dropout: float = 0.2,
) -> list[tuple[GrayImage, Template]]:
    """Seeded random perturbations standing in for other impressions."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        dx, dy = rng.uniform(-max_shift, max_shift, size=2)
        rot = rng.uniform(-max_rot, max_rot)
        out.append(perturb(image, t, float(dx), float(dy), float(rot), dropout, int(rng.integers(2**31))))
    return out


def batch(
    count: int,
    n_minutiae: int,
    seed: int,
    width: int = 300,
    height: int = 300,
) -> list[tuple[GrayImage, Template]]:
    """``count`` seeded constant-field prints."""
    specs: Sequence[SynthSpec] = [
        random_spec(width, height, n_minutiae, seed * 1000 + k) for k in range(count)
    ]
    return [generate(s) for s in specs]
