"""
From a vector sketch to a lattice of graph nodes
================================================

A sketch arrives as polylines. We rasterize it onto a square canvas,
lay a uniform grid of horizontal and vertical lines over the canvas,
and keep every ink pixel that lies on a grid line. Those points are
the only geometry the rest of the model ever sees, so this script
walks the whole reduction step by step.
"""

import json

import numpy as np

import lattisketch as ls

# A tiny two-stroke drawing in the stroke-list format: each stroke is
# [xs, ys]. The square is closed explicitly; the diagonal is open.
record = {
    "drawing": [
        [[40, 215, 215, 40, 40], [40, 40, 215, 215, 40]],
        [[40, 215], [40, 215]],
    ]
}
sketch = ls.parse_quickdraw_line(json.dumps(record))
print(f"parsed {sketch.n_steps} offset steps, {len(sketch.drawn_segments())} drawn segments")

# Rasterize onto the default 256 x 256 canvas. Pixels are uint8, 1 = ink.
raster = ls.rasterize(sketch, side=256)
print(f"raster {raster.width}x{raster.height}, {raster.dark_count()} dark pixels")

# The lattice parameter n puts n horizontal and n vertical lines across
# the canvas, evenly spaced and offset half a cell from the border.
for n in (1, 2, 4, 32):
    cfg = ls.LatticeConfig(n=n, side=256)
    print(f"n={n:3d} line positions {ls.line_positions(cfg)[:6]}...")

# A lattice point is any ink pixel that lies on one of those lines
# (either direction), kept in row-major order.
lat = ls.sample_lattice(raster, ls.LatticeConfig(n=32, side=256))
print(f"lattice kept {lat.m} points from {raster.dark_count()} ink pixels")

pos = set(ls.line_positions(ls.LatticeConfig(n=32, side=256)).tolist())
for x, y in lat.points:
    assert x in pos or y in pos
    assert raster.pixels[y, x] == 1
print("all lattice points verified on-line and on-ink")

# Corruption for training and for the healing demo: drop each point
# independently. The survivors keep their original row-major order.
rng = np.random.default_rng(7)
masked = ls.mask_lattice(lat, p_mask=0.3, rng=rng)
print(f"p_mask=0.3 left {masked.m} points ({masked.m / lat.m:.0%})")

# Lattices serialize to plain JSON for inspection or caching.
obj = lat.to_json_obj()
back = ls.lattice_from_json_obj(obj)
assert np.array_equal(back.points, lat.points)
print("JSON round-trip ok")
