"""Vector sketch ingestion, stroke-format conversion, rasterization and SVG export.

A vector sketch is an ordered list of steps ``(dx, dy, pen)``. Execution
starts at the origin with the pen down; each step moves the cursor by the
offset and then sets the pen state. A move draws a segment when the pen
was down *before* the move, so the first move of any non-empty sketch is
drawn. Pen states: 0 = down, 1 = lift, 2 = end (at most one, final).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import MalformedRecord, SequenceTooLong

PEN_DOWN = 0
PEN_LIFT = 1
PEN_END = 2

_PEN_NAMES = {PEN_DOWN: "down", PEN_LIFT: "lift", PEN_END: "end"}
_PEN_CODES = {v: k for k, v in _PEN_NAMES.items()}

#: canonical canvas side in pixels
CANVAS_SIDE = 256
#: blank border kept inside the canvas when scaling a sketch to fit
CANVAS_MARGIN = 2


@dataclass(frozen=True)
class VectorSketch:
    """Ordered stroke steps as an (n, 3) float array of (dx, dy, pen)."""

    steps: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    def __post_init__(self):
        arr = np.asarray(self.steps, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "steps", arr)

    @property
    def n_steps(self) -> int:
        return self.steps.shape[0]

    def is_empty(self) -> bool:
        return self.n_steps == 0

    def validate(self) -> None:
        """Raise MalformedRecord if the step list breaks the format invariants."""
        pens = self.steps[:, 2]
        if not np.all(np.isin(pens, (PEN_DOWN, PEN_LIFT, PEN_END))):
            raise MalformedRecord("unknown pen state")
        ends = np.flatnonzero(pens == PEN_END)
        if ends.size > 1:
            raise MalformedRecord("more than one pen=end step")
        if ends.size == 1 and ends[0] != self.n_steps - 1:
            raise MalformedRecord("pen=end is not the final step")
        if not np.all(np.isfinite(self.steps)):
            raise MalformedRecord("non-finite offset")

    def absolute_points(self) -> np.ndarray:
        """Cursor positions, shape (n_steps + 1, 2); row 0 is the origin."""
        pts = np.zeros((self.n_steps + 1, 2))
        if self.n_steps:
            pts[1:] = np.cumsum(self.steps[:, :2], axis=0)
        return pts

    def drawn_segments(self) -> np.ndarray:
        """Segments actually inked, shape (k, 4) rows (x0, y0, x1, y1).

        A move draws when the pen state before it is down; the initial
        state is down. Zero-length segments (dots) are kept.
        """
        if self.is_empty():
            return np.zeros((0, 4))
        pts = self.absolute_points()
        pen_before = np.concatenate([[PEN_DOWN], self.steps[:-1, 2]])
        drawn = pen_before == PEN_DOWN
        return np.hstack([pts[:-1][drawn], pts[1:][drawn]])


@dataclass(frozen=True)
class RasterSketch:
    """Binary pixel grid; ``pixels[y, x] == 1`` marks stroke ink."""

    pixels: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixels", np.asarray(self.pixels, dtype=np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def dark_count(self) -> int:
        return int(self.pixels.sum())


def parse_quickdraw_line(line: str) -> VectorSketch:
    """Parse one QuickDraw-format JSON line into a VectorSketch.

    The record must carry a "drawing" array of polylines ``[[x...], [y...]]``
    (extra per-polyline arrays such as raw-format timestamps are ignored).
    An empty drawing maps to an empty sketch; a drawing whose only content
    is a single point maps to a pen-down dot.
    """
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise MalformedRecord(f"invalid JSON: {exc}") from exc
    if not isinstance(record, dict) or "drawing" not in record:
        raise MalformedRecord('missing "drawing" key')
    drawing = record["drawing"]
    if not isinstance(drawing, list):
        raise MalformedRecord('"drawing" is not a list')

    # absolute points annotated with the pen state after arrival:
    # down inside a polyline, lift on its last point
    xs_all: list[float] = []
    ys_all: list[float] = []
    pens_all: list[int] = []
    for poly in drawing:
        if not isinstance(poly, (list, tuple)) or len(poly) < 2:
            raise MalformedRecord("polyline is not an [xs, ys] pair")
        xs, ys = poly[0], poly[1]
        if not isinstance(xs, (list, tuple)) or not isinstance(ys, (list, tuple)):
            raise MalformedRecord("polyline coordinates are not lists")
        if len(xs) != len(ys):
            raise MalformedRecord("polyline x/y length mismatch")
        for i, (x, y) in enumerate(zip(xs, ys)):
            if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
                raise MalformedRecord("non-numeric coordinate")
            xs_all.append(float(x))
            ys_all.append(float(y))
            pens_all.append(PEN_LIFT if i == len(xs) - 1 else PEN_DOWN)

    if not xs_all:
        return VectorSketch(np.zeros((0, 3)))
    if len(xs_all) == 1:
        # lone dot: touch the pen down at the anchor, then end
        steps = [(0.0, 0.0, PEN_DOWN), (0.0, 0.0, PEN_END)]
        return VectorSketch(np.array(steps))

    xs_arr = np.array(xs_all)
    ys_arr = np.array(ys_all)
    steps = np.zeros((len(xs_all), 3))
    steps[1:, 0] = np.diff(xs_arr)
    steps[1:, 1] = np.diff(ys_arr)
    steps[:, 2] = pens_all
    steps = steps[1:]  # the first point is the origin anchor
    end_row = np.array([[0.0, 0.0, PEN_END]])
    return VectorSketch(np.vstack([steps, end_row]))


def to_stroke5(sketch: VectorSketch, n_max: int) -> np.ndarray:
    """Expand a sketch to a fixed-length (n_max, 5) stroke-5 array.

    Rows mirror the steps as (dx, dy, p_down, p_lift, p_end); the remainder
    is (0, 0, 0, 0, 1) padding. Raises SequenceTooLong for > n_max steps.
    """
    n = sketch.n_steps
    if n > n_max:
        raise SequenceTooLong(f"{n} steps exceed n_max={n_max}")
    rows = np.zeros((n_max, 5))
    rows[:, 4] = 1.0  # padding default
    if n:
        rows[:n, 4] = 0.0
        rows[:n, 0] = sketch.steps[:, 0]
        rows[:n, 1] = sketch.steps[:, 1]
        pens = sketch.steps[:, 2].astype(int)
        rows[np.arange(n), 2 + pens] = 1.0
    return rows


def from_stroke5(rows: np.ndarray) -> VectorSketch:
    """Inverse of to_stroke5: keep rows up to and including the first p_end=1."""
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, 5)
    pens = np.argmax(rows[:, 2:5], axis=1)
    ends = np.flatnonzero(pens == PEN_END)
    if ends.size:
        cut = ends[0]
        # a leading p_end row is all padding: the sketch is empty
        if cut == 0 and not np.any(rows[0, :2]):
            return VectorSketch(np.zeros((0, 3)))
        rows = rows[: cut + 1]
        pens = pens[: cut + 1]
    steps = np.column_stack([rows[:, 0], rows[:, 1], pens.astype(np.float64)])
    return VectorSketch(steps)


def validate_stroke5(rows: np.ndarray) -> None:
    """Check the stroke-5 invariants (one-hot pens, all-padding tail)."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or rows.shape[1] != 5:
        raise MalformedRecord("stroke-5 array must be (n, 5)")
    onehot = rows[:, 2:5]
    if not np.all(np.isin(onehot, (0.0, 1.0))) or not np.all(onehot.sum(axis=1) == 1.0):
        raise MalformedRecord("pen columns are not one-hot")
    ends = np.flatnonzero(onehot[:, 2] == 1.0)
    if ends.size:
        tail = rows[ends[0] + 1:]
        pad = np.zeros(5)
        pad[4] = 1.0
        if tail.size and not np.all(tail == pad):
            raise MalformedRecord("rows after the first p_end are not padding")


def segment_pixels(x0: int, y0: int, x1: int, y1: int) -> np.ndarray:
    """Integer midpoint line: the (k, 2) pixel set of a 1-px segment.

    Endpoint order does not matter (segments are canonicalized), and the
    rounding rule is exact integer floor((2*t*minor + major) / (2*major)),
    i.e. round-half-up of the ideal crossing ordinate.
    """
    if (x1, y1) < (x0, y0):
        x0, y0, x1, y1 = x1, y1, x0, y0
    dx = x1 - x0  # >= 0 after the swap
    dy = y1 - y0
    if dx == 0 and dy == 0:
        return np.array([[x0, y0]], dtype=np.int64)
    if dx >= abs(dy):
        t = np.arange(dx + 1, dtype=np.int64)
        ys = y0 + (2 * t * dy + dx) // (2 * dx)
        return np.column_stack([x0 + t, ys])
    ady = abs(dy)
    sy = 1 if dy > 0 else -1
    t = np.arange(ady + 1, dtype=np.int64)
    xs = x0 + (2 * t * dx + ady) // (2 * ady)
    return np.column_stack([xs, y0 + sy * t])


def _fit_transform(points: np.ndarray, side: int, margin: int):
    """Uniform scale + centering offset mapping points into the canvas."""
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    extent = hi - lo
    usable = side - 2 * margin
    biggest = float(extent.max())
    scale = usable / biggest if biggest > 0 else 1.0
    offset = margin + (usable - extent * scale) / 2.0 - lo * scale
    return scale, offset


def rasterize(sketch: VectorSketch, side: int = CANVAS_SIDE) -> RasterSketch:
    """Render a sketch onto a binary side x side grid with 1-px lines.

    Absolute coordinates come from the cumulative offset sum; the drawing
    is uniformly scaled to fit (aspect ratio preserved), centered, and each
    drawn segment is walked with the integer midpoint algorithm.
    """
    if side < 2:
        raise ValueError("side must be >= 2")
    grid = np.zeros((side, side), dtype=np.uint8)
    segs = sketch.drawn_segments()
    if not len(segs):
        return RasterSketch(grid)
    endpoints = np.vstack([segs[:, 0:2], segs[:, 2:4]])
    scale, offset = _fit_transform(endpoints, side, CANVAS_MARGIN)
    mapped = np.floor(endpoints * scale + offset + 0.5).astype(np.int64)
    k = len(segs)
    for (x0, y0), (x1, y1) in zip(mapped[:k], mapped[k:]):
        px = segment_pixels(x0, y0, x1, y1)
        grid[px[:, 1], px[:, 0]] = 1
    return RasterSketch(grid)


def _fmt(v: float) -> str:
    return f"{v:.4f}"


def render_svg(sketch: VectorSketch) -> str:
    """Render to an SVG 1.1 document, one path per pen-down run."""
    segs = sketch.drawn_segments()
    if len(segs):
        pts = np.vstack([segs[:, 0:2], segs[:, 2:4]])
        lo = pts.min(axis=0) - 2
        hi = pts.max(axis=0) + 2
        view = (lo[0], lo[1], max(hi[0] - lo[0], 1e-3), max(hi[1] - lo[1], 1e-3))
    else:
        view = (0.0, 0.0, 1.0, 1.0)

    # group consecutive drawn segments into polyline runs
    paths = []
    run: list[tuple[float, float]] = []
    for x0, y0, x1, y1 in segs:
        if run and (run[-1][0] != x0 or run[-1][1] != y0):
            paths.append(run)
            run = []
        if not run:
            run = [(x0, y0)]
        run.append((x1, y1))
    if run:
        paths.append(run)

    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{_fmt(view[0])} {_fmt(view[1])} {_fmt(view[2])} {_fmt(view[3])}">',
    ]
    for run in paths:
        d = f"M {_fmt(run[0][0])} {_fmt(run[0][1])}"
        for x, y in run[1:]:
            d += f" L {_fmt(x)} {_fmt(y)}"
        lines.append(
            f'<path d="{d}" fill="none" stroke="black" '
            'stroke-width="1" stroke-linecap="round"/>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def sketch_to_json_obj(sketch: VectorSketch, label: str | None = None) -> dict:
    obj = {
        "steps": [
            [float(dx), float(dy), _PEN_NAMES[int(pen)]]
            for dx, dy, pen in sketch.steps
        ]
    }
    if label is not None:
        obj["label"] = label
    return obj


def sketch_from_json_obj(obj: dict) -> VectorSketch:
    if not isinstance(obj, dict) or "steps" not in obj:
        raise MalformedRecord('missing "steps" key')
    steps = []
    for row in obj["steps"]:
        if len(row) != 3 or row[2] not in _PEN_CODES:
            raise MalformedRecord(f"bad step row: {row!r}")
        steps.append((float(row[0]), float(row[1]), _PEN_CODES[row[2]]))
    sketch = VectorSketch(np.array(steps).reshape(-1, 3))
    sketch.validate()
    return sketch


def write_pgm(raster: RasterSketch, path) -> None:
    """Dump as binary PGM (P5, maxval 255): stroke pixels 0, background 255."""
    data = np.where(raster.pixels > 0, 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{raster.width} {raster.height}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> RasterSketch:
    """Read a P5 (or P2) PGM; values below 128 count as stroke ink."""
    with open(path, "rb") as fh:
        blob = fh.read()

    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        # skip whitespace and '#' comments between header tokens
        while pos < len(blob) and blob[pos : pos + 1].isspace():
            pos += 1
        if pos < len(blob) and blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos : pos + 1].isspace():
            pos += 1
        if pos > start:
            tokens.append(blob[start:pos])
    if len(tokens) < 4:
        raise MalformedRecord("truncated PGM header")
    magic = tokens[0]
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError as exc:
        raise MalformedRecord("non-numeric PGM header field") from exc
    if maxval <= 0 or width <= 0 or height <= 0:
        raise MalformedRecord("bad PGM dimensions")

    if magic == b"P5":
        pos += 1  # exactly one whitespace byte after maxval
        data = np.frombuffer(blob, dtype=np.uint8, count=width * height, offset=pos)
        if data.size < width * height:
            raise MalformedRecord("truncated PGM payload")
    elif magic == b"P2":
        values = blob[pos:].split()
        if len(values) < width * height:
            raise MalformedRecord("truncated PGM payload")
        data = np.array([int(v) for v in values[: width * height]], dtype=np.int64)
    else:
        raise MalformedRecord(f"unsupported PGM magic {magic!r}")
    threshold = (maxval + 1) // 2
    pixels = (data.reshape(height, width) < threshold).astype(np.uint8)
    return RasterSketch(pixels)


def canonicalize_raster(raster: RasterSketch, side: int = CANVAS_SIDE) -> RasterSketch:
    """Map any binary raster onto the canonical side x side canvas.

    Dark pixel coordinates are uniformly scaled (aspect ratio preserved)
    and centered with the same margin rule rasterize uses. A raster that
    is already canonical passes through unchanged.
    """
    if raster.width == side and raster.height == side:
        return raster
    ys, xs = np.nonzero(raster.pixels)
    grid = np.zeros((side, side), dtype=np.uint8)
    if xs.size == 0:
        return RasterSketch(grid)
    pts = np.column_stack([xs, ys]).astype(np.float64)
    scale, offset = _fit_transform(pts, side, CANVAS_MARGIN)
    mapped = np.floor(pts * scale + offset + 0.5).astype(np.int64)
    mapped = np.clip(mapped, 0, side - 1)
    grid[mapped[:, 1], mapped[:, 0]] = 1
    return RasterSketch(grid)
