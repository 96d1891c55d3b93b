import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import ndimage

import oracles
from fprecon import synth
from fprecon.errors import DimensionMismatch, MalformedTemplate, NotBinary, OutOfBounds
from fprecon.imaging import ForegroundMask, GrayImage, segment
from fprecon.minutiae import (
    Kind,
    Minutia,
    Template,
    binarize,
    crossing_number,
    extract_minutiae,
    format_template,
    parse_template,
    read_template,
    remove_close_pairs,
    thin,
    write_template,
)

EIGHT = np.ones((3, 3), dtype=int)


def ridge_components(binary):
    return ndimage.label(binary.pixels == 0, structure=EIGHT)[1]


# --- data model and file format --------------------------------------------


def test_direction_is_normalised():
    assert Minutia(1, 1, -math.pi / 2, Kind.ENDING).direction == pytest.approx(3 * math.pi / 2)
    assert Minutia(1, 1, 2 * math.pi, Kind.ENDING).direction == 0.0


def test_format_example():
    t = Template(300, 300, (Minutia(100.0, 150.0, 1.570796, Kind.ENDING),))
    assert format_template(t) == "300 300\n100.000000 150.000000 1.570796 E\n"


@pytest.mark.parametrize(
    "text",
    [
        "300 300\n10 10 0.5 Q\n",
        "300 300\n10 ten 0.5 E\n",
        "300 300\n300 10 0.5 E\n",
        "300 300\n10 -1 0.5 B\n",
        "300 300\n10 10 0.5 E\n10 10 1.0 B\n",
        "300\n",
        "300 300\n10 10 E\n",
    ],
)
def test_parse_malformed(text):
    with pytest.raises(MalformedTemplate):
        parse_template(text)


def test_round_trip_50_random(tmp_path):
    t = oracles.random_template(np.random.default_rng(1), 50)
    write_template(t, tmp_path / "t.txt")
    back = read_template(tmp_path / "t.txt")
    assert (back.width, back.height) == (t.width, t.height)
    for a, b in zip(t, back):
        assert abs(a.x - b.x) <= 1e-6 and abs(a.y - b.y) <= 1e-6
        assert abs(math.remainder(a.direction - b.direction, 2 * math.pi)) <= 1e-6
        assert a.kind is b.kind


@settings(max_examples=60, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0, 299.999, allow_nan=False),
            st.floats(0, 199.999, allow_nan=False),
            st.floats(0, 2 * math.pi, allow_nan=False, exclude_max=True),
            st.sampled_from([Kind.ENDING, Kind.BIFURCATION]),
        ),
        max_size=30,
        unique_by=lambda m: (round(m[0], 6), round(m[1], 6)),
    )
)
def test_round_trip_property(items):
    t = Template(300, 200, tuple(Minutia(*m) for m in items))
    back = parse_template(format_template(t))
    assert len(back) == len(t)
    for a, b in zip(t, back):
        assert abs(a.x - b.x) <= 1e-6 and abs(a.y - b.y) <= 1e-6
        assert abs(math.remainder(a.direction - b.direction, 2 * math.pi)) <= 1e-6
        assert a.kind is b.kind


# --- binarize -----------------------------------------------------------------


def test_binarize_background_clears():
    img = GrayImage(np.full((8, 8), 128, np.uint8))
    assert (binarize(img, segment(img)).pixels == 255).all()


def test_binarize_alternating_rows():
    px = np.zeros((8, 8), np.uint8)
    px[1::2] = 255
    out = binarize(GrayImage(px), ForegroundMask.full(8, 8)).pixels
    assert (out[0::2] == 0).all() and (out[1::2] == 255).all()


def test_binarize_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        binarize(GrayImage(np.zeros((8, 8), np.uint8)), ForegroundMask.full(16, 8))


# --- thinning -----------------------------------------------------------------


def test_thin_blank_unchanged():
    img = GrayImage(np.full((12, 12), 255, np.uint8))
    assert thin(img) == img


def test_thin_bar():
    px = np.full((9, 20), 255, np.uint8)
    px[3:6, 3:17] = 0
    bar = GrayImage(px)
    skel = thin(bar)
    ridge = skel.pixels == 0
    assert ridge.any()
    assert (ridge.sum(axis=0) <= 1).all()  # one pixel wide
    assert ridge_components(skel) == ridge_components(bar) == 1
    assert not (ridge & (px == 255)).any()  # skeleton lies inside the bar


def test_thin_rejects_non_binary():
    with pytest.raises(NotBinary):
        thin(GrayImage(np.array([[0, 7], [255, 255]], np.uint8)))


def test_thin_on_prints(prints):
    for image, _ in prints[:3]:
        binary = binarize(image, segment(image))
        skel = thin(binary)
        ridge = skel.pixels == 0
        assert thin(skel) == skel  # idempotent
        assert ridge_components(skel) == ridge_components(binary)
        # width one: no 2x2 square made entirely of ridge pixels
        assert not (ridge[:-1, :-1] & ridge[1:, :-1] & ridge[:-1, 1:] & ridge[1:, 1:]).any()


# --- crossing number ----------------------------------------------------------


def ring_image(bits):
    px = np.full((3, 3), 255, np.uint8)
    px[1, 1] = 0
    for b, (dx, dy) in zip(bits, oracles.RING):
        if b:
            px[1 + dy, 1 + dx] = 0
    return GrayImage(px)


@pytest.mark.parametrize(
    "bits,expected",
    [
        ([0, 0, 1, 0, 0, 0, 0, 0], 1),
        ([1, 0, 0, 1, 0, 0, 1, 0], 3),  # N, SE, W: three separated branches
        ([0] * 8, 0),
        ([1, 1, 0, 0, 0, 0, 0, 0], 1),  # adjacent neighbours form one run
        ([1, 0, 0, 0, 1, 0, 0, 0], 2),  # ridge continues straight through
    ],
)
def test_crossing_number_examples(bits, expected):
    assert crossing_number(ring_image(bits), 1, 1) == expected
    assert oracles.crossing_number(bits) == expected


@pytest.mark.parametrize("x,y", [(0, 1), (1, 0), (2, 1), (1, 2), (5, 5), (-1, 1)])
def test_crossing_number_border(x, y):
    with pytest.raises(OutOfBounds):
        crossing_number(ring_image([0] * 8), x, y)


# --- close-pair filter --------------------------------------------------------


def test_close_pair_three_px():
    pts = np.array([[50.0, 50.0], [53.0, 50.0]])
    assert len(remove_close_pairs(pts, 5.0)) <= 1


def test_close_pair_closest_first():
    # (0,1) is the closest pair; once it is gone, point 2 has no close partner
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]])
    assert remove_close_pairs(pts, 4.5) == [2]


@settings(max_examples=80, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0, 60), st.floats(0, 60)), max_size=25),
    st.floats(0.5, 15.0),
)
def test_close_pair_separation_property(points, sep):
    pts = np.array(points, dtype=float).reshape(-1, 2)
    alive = remove_close_pairs(pts, sep)
    assert alive == sorted(alive)
    for a in alive:
        for b in alive:
            if a < b:
                assert math.dist(pts[a], pts[b]) >= sep


# --- extraction ----------------------------------------------------------------


def test_extract_blank():
    img = GrayImage(np.full((64, 64), 200, np.uint8))
    assert len(extract_minutiae(img, segment(img))) == 0


def test_extract_dimension_mismatch():
    img = GrayImage(np.full((64, 64), 200, np.uint8))
    with pytest.raises(DimensionMismatch):
        extract_minutiae(img, ForegroundMask.full(32, 64))


def test_extract_single_planted_ending():
    # horizontal ridges with one spiral: exactly one ridge stops
    stop = Minutia(48.0, 48.5, 0.0, Kind.ENDING)
    spec = synth.SynthSpec(96, 96, synth.ConstantField(0.0), (stop,), seed=0)
    image, truth = synth.generate(spec)
    found = extract_minutiae(image, segment(image))
    assert len(found) == 1
    m = found.minutiae[0]
    assert m.kind is Kind.ENDING
    assert abs(m.x - stop.x) <= 2 and abs(m.y - stop.y) <= 2
    assert abs(math.remainder(m.direction - truth.minutiae[0].direction, 2 * math.pi)) < math.pi / 6


def _border_oracle(mask, x, y):
    """Distance from pixel (x, y) to the nearest background pixel, the frame
    outside counting as background."""
    pm = np.pad(mask.pixel_mask(), 1, constant_values=False)
    by, bx = np.nonzero(~pm)
    return float(np.min(np.hypot(bx - (x + 1), by - (y + 1))))


def test_extraction_invariants(prints):
    for image, _ in prints:
        mask = segment(image)
        found = extract_minutiae(image, mask)
        assert len(found) > 0
        skel = thin(binarize(image, mask))
        pts = [(m.x, m.y) for m in found]
        for m in found:
            cn = crossing_number(skel, int(m.x), int(m.y))
            assert cn == (1 if m.kind is Kind.ENDING else 3)
            assert _border_oracle(mask, int(m.x), int(m.y)) > 10
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                assert math.dist(pts[i], pts[j]) >= 5


def test_extraction_recovers_planted(prints):
    for image, truth in prints:
        found = extract_minutiae(image, segment(image))
        rec, spur = oracles.recovery(truth.minutiae, found.minutiae)
        assert rec >= 0.8 * len(truth)
