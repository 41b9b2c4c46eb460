"""Sketch parsing, stroke formats, rasterization and SVG rendering."""

import json
import re
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import lattisketch as ls
from lattisketch.sketch_data import segment_pixels


# ---------------------------------------------------------------------------
# parse_quickdraw_line


def test_parse_empty_drawing():
    sk = ls.parse_quickdraw_line('{"drawing": []}')
    assert sk.n_steps == 0
    assert sk.is_empty()


def test_parse_two_point_polyline():
    # first point anchors the origin, so one offset step plus the end marker
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 10], [0, 0]]]}')
    steps = [tuple(row) for row in sk.steps]
    assert steps == [(10.0, 0.0, ls.PEN_LIFT), (0.0, 0.0, ls.PEN_END)]
    assert sk.drawn_segments().shape[0] == 1


def test_parse_single_point_drawing():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0], [0]]]}')
    steps = [tuple(row) for row in sk.steps]
    assert steps == [(0.0, 0.0, ls.PEN_DOWN), (0.0, 0.0, ls.PEN_END)]


def test_parse_offsets_and_pen_states(square_sketch):
    # closed square: 4 drawn moves, pen lifted on the last
    pens = square_sketch.steps[:, 2].tolist()
    assert pens == [ls.PEN_DOWN, ls.PEN_DOWN, ls.PEN_DOWN, ls.PEN_LIFT, ls.PEN_END]
    assert square_sketch.drawn_segments().shape[0] == 4


def test_parse_multistroke_lift_between_polylines():
    line = '{"drawing": [[[0, 5], [0, 0]], [[0, 0], [5, 9]]]}'
    sk = ls.parse_quickdraw_line(line)
    pens = sk.steps[:, 2].tolist()
    assert pens.count(ls.PEN_LIFT) == 2
    assert pens[-1] == ls.PEN_END


@pytest.mark.parametrize("line", [
    "not json at all",
    '{"no_drawing": 1}',
    '{"drawing": "nope"}',
    '{"drawing": [[[0, 1], [0]]]}',          # ragged polyline
    '{"drawing": [[[0, "x"], [0, 1]]]}',     # non-numeric
])
def test_parse_malformed(line):
    with pytest.raises(ls.MalformedRecord):
        ls.parse_quickdraw_line(line)


def test_validate_rejects_midstream_end():
    steps = np.array([[1.0, 0.0, ls.PEN_END], [1.0, 0.0, ls.PEN_DOWN]])
    with pytest.raises(ls.MalformedRecord):
        ls.VectorSketch(steps=steps).validate()


# ---------------------------------------------------------------------------
# stroke-5


def test_to_stroke5_empty_is_all_padding():
    rows = ls.to_stroke5(ls.VectorSketch(steps=np.zeros((0, 3))), 4)
    assert rows.shape == (4, 5)
    assert np.array_equal(rows, np.tile([0, 0, 0, 0, 1], (4, 1)))


def test_to_stroke5_exact_fit():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 10], [0, 0]]]}')
    rows = ls.to_stroke5(sk, 2)
    assert rows.shape == (2, 5)
    assert rows[0, 3] == 1 and rows[1, 4] == 1


def test_to_stroke5_padding_tail():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 10, 20], [0, 0, 0]]]}')
    rows = ls.to_stroke5(sk, 200)
    assert np.array_equal(rows[3:], np.tile([0, 0, 0, 0, 1], (197, 1)))


def test_to_stroke5_too_long():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 1, 2, 3], [0, 0, 0, 0]]]}')
    with pytest.raises(ls.SequenceTooLong):
        ls.to_stroke5(sk, 2)


def test_stroke5_round_trip(square_sketch):
    rows = ls.to_stroke5(square_sketch, 32)
    back = ls.from_stroke5(rows)
    assert np.allclose(back.steps, square_sketch.steps)


def test_validate_stroke5_rejects_bad_onehot():
    rows = np.zeros((3, 5))
    rows[:, 4] = 1
    rows[1, 3] = 1  # two hot bits
    with pytest.raises(ls.MalformedRecord):
        ls.validate_stroke5(rows)


# ---------------------------------------------------------------------------
# rasterization against an independent segment-walk oracle


def oracle_segment(x0, y0, x1, y1):
    """All pixels of the discrete segment, walked one major-axis step at a
    time with exact rational midpoint rounding. Independent of the
    implementation's integer recurrence."""
    if (x1, y1) < (x0, y0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    dx, dy = x1 - x0, y1 - y0
    pts = set()
    if max(abs(dx), abs(dy)) == 0:
        return {(x0, y0)}
    if abs(dx) >= abs(dy):
        for t in range(abs(dx) + 1):
            x = x0 + t * (1 if dx > 0 else -1)
            # y = y0 + dy * (x - x0)/dx, rounded half toward +inf on the
            # doubled grid (midpoint rule)
            frac = Fraction(dy * (x - x0), dx) if dx else Fraction(0)
            y = int((frac + Fraction(1, 2)).__floor__()) + y0
            pts.add((x, y))
    else:
        for t in range(abs(dy) + 1):
            y = y0 + t * (1 if dy > 0 else -1)
            frac = Fraction(dx * (y - y0), dy)
            x = int((frac + Fraction(1, 2)).__floor__()) + x0
            pts.add((x, y))
    return pts


@given(st.tuples(st.integers(0, 60), st.integers(0, 60),
                 st.integers(0, 60), st.integers(0, 60)))
@settings(max_examples=200, deadline=None)
def test_segment_pixels_matches_rational_oracle(coords):
    x0, y0, x1, y1 = coords
    got = {tuple(p) for p in segment_pixels(x0, y0, x1, y1)}
    assert got == oracle_segment(x0, y0, x1, y1)


def test_segment_pixels_endpoint_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(50):
        x0, y0, x1, y1 = rng.integers(0, 100, size=4)
        a = {tuple(p) for p in segment_pixels(x0, y0, x1, y1)}
        b = {tuple(p) for p in segment_pixels(x1, y1, x0, y0)}
        assert a == b


def test_rasterize_empty_is_blank():
    r = ls.rasterize(ls.VectorSketch(steps=np.zeros((0, 3))), 256)
    assert r.pixels.shape == (256, 256)
    assert r.dark_count() == 0


def test_rasterize_horizontal_segment_pixel_count():
    # a sketch that is a single horizontal stroke scales to width
    # side - 2*margin, so the dark count is that length + 1
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 100], [0, 0]]]}')
    r = ls.rasterize(sk, 256)
    assert r.dark_count() == (256 - 4) + 1


def rasterize_oracle(sketch, side):
    """Brute-force rasterization: same fit transform, then the rational
    segment walk above for every drawn segment."""
    segs = sketch.drawn_segments()
    if segs.size == 0:
        return np.zeros((side, side), dtype=np.uint8)
    pts = sketch.absolute_points()
    from lattisketch.sketch_data import CANVAS_MARGIN, _fit_transform

    scale, offset = _fit_transform(pts, side, CANVAS_MARGIN)
    img = np.zeros((side, side), dtype=np.uint8)
    for x0, y0, x1, y1 in segs:
        a = np.floor(np.array([x0, y0]) * scale + offset + 0.5).astype(int)
        b = np.floor(np.array([x1, y1]) * scale + offset + 0.5).astype(int)
        for x, y in oracle_segment(a[0], a[1], b[0], b[1]):
            img[y, x] = 1
    return img


def test_rasterize_matches_bruteforce_oracle():
    rng = np.random.default_rng(42)
    for _ in range(10):
        n_pts = int(rng.integers(2, 9))
        xs = rng.integers(0, 200, size=n_pts).tolist()
        ys = rng.integers(0, 200, size=n_pts).tolist()
        sk = ls.parse_quickdraw_line(json.dumps({"drawing": [[xs, ys]]}))
        got = ls.rasterize(sk, 128).pixels
        want = rasterize_oracle(sk, 128)
        assert np.array_equal(got, want)


def test_rasterize_aspect_ratio_preserved():
    # 100x50 box: long side fills side-2*margin, short side half of that
    sk = ls.parse_quickdraw_line(
        '{"drawing": [[[0, 100, 100, 0, 0], [0, 0, 50, 50, 0]]]}')
    r = ls.rasterize(sk, 256)
    ys, xs = np.nonzero(r.pixels)
    w = xs.max() - xs.min()
    h = ys.max() - ys.min()
    assert w == 256 - 4
    assert abs(w / h - 2.0) < 2.0 / h + 1e-9  # within one pixel


def test_rasterize_single_point_sketch():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0], [0]]]}')
    r = ls.rasterize(sk, 256)
    assert r.dark_count() == 1


# ---------------------------------------------------------------------------
# SVG


def test_svg_empty_sketch_has_no_paths():
    svg = ls.render_svg(ls.VectorSketch(steps=np.zeros((0, 3))))
    assert svg.startswith("<?xml")
    assert "<path" not in svg
    assert "</svg>" in svg


def test_svg_one_segment_one_path():
    sk = ls.parse_quickdraw_line('{"drawing": [[[0, 10], [0, 0]]]}')
    assert ls.render_svg(sk).count("<path") == 1


def test_svg_path_per_pen_down_run():
    line = '{"drawing": [[[0, 5], [0, 0]], [[0, 9], [5, 9]]]}'
    assert ls.render_svg(ls.parse_quickdraw_line(line)).count("<path") == 2


def test_svg_round_trip_coordinates(square_sketch):
    svg = ls.render_svg(square_sketch)
    coord = r"(-?\d+\.\d+)[ ,](-?\d+\.\d+)"
    pts = []
    for d in re.findall(r'd="([^"]+)"', svg):
        pts += [(float(x), float(y)) for x, y in re.findall(coord, d)]
    # drop the zero-offset end row: it is not part of the drawn path
    want = square_sketch.absolute_points()[:-1]
    assert len(pts) == want.shape[0]
    got = np.array(pts)
    assert np.max(np.abs(np.sort(got, axis=0) - np.sort(want, axis=0))) < 1e-3


def test_svg_deterministic(square_sketch):
    assert ls.render_svg(square_sketch) == ls.render_svg(square_sketch)


# ---------------------------------------------------------------------------
# JSON and PGM round trips


def test_sketch_json_round_trip(square_sketch):
    obj = ls.sketch_to_json_obj(square_sketch, label="square")
    back = ls.sketch_from_json_obj(json.loads(json.dumps(obj)))
    assert np.allclose(back.steps, square_sketch.steps)


def test_pgm_round_trip(tmp_path, square_sketch):
    r = ls.rasterize(square_sketch, 64)
    path = tmp_path / "square.pgm"
    ls.write_pgm(r, path)
    back = ls.read_pgm(path)
    assert np.array_equal(back.pixels, r.pixels)


def test_read_pgm_ascii(tmp_path):
    path = tmp_path / "tiny.pgm"
    path.write_text("P2\n# comment\n2 2\n255\n0 255\n255 0\n")
    r = ls.read_pgm(path)
    assert np.array_equal(r.pixels, [[1, 0], [0, 1]])


# ---------------------------------------------------------------------------
# properties


@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)),
                min_size=2, max_size=8))
@settings(max_examples=50, deadline=None)
def test_property_stroke5_round_trip(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    sk = ls.parse_quickdraw_line(json.dumps({"drawing": [[xs, ys]]}))
    rows = ls.to_stroke5(sk, 64)
    back = ls.from_stroke5(rows)
    assert np.allclose(back.steps, sk.steps)


@given(st.lists(st.tuples(st.integers(0, 255), st.integers(0, 255)),
                min_size=2, max_size=6, unique=True))
@settings(max_examples=30, deadline=None)
def test_property_rasterize_oracle_equality(points):
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    sk = ls.parse_quickdraw_line(json.dumps({"drawing": [[xs, ys]]}))
    assert np.array_equal(ls.rasterize(sk, 96).pixels, rasterize_oracle(sk, 96))
