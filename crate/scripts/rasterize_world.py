"""Rasterize world-atlas land-110m.json (TopoJSON) into an equirectangular PGM.

Ocean pixels are white (255), land pixels black (0). Row 0 is the north edge,
column 0 the -180 meridian; pixel (r, c) samples its cell centre.

    npm pack world-atlas@2 && tar xzf world-atlas-*.tgz
    python3 scripts/rasterize_world.py package/land-110m.json data/world_360x180.pgm
"""
import json
import sys

import numpy as np
from matplotlib.path import Path


def decode_arcs(topo):
    sx, sy = topo["transform"]["scale"]
    tx, ty = topo["transform"]["translate"]
    arcs = []
    for arc in topo["arcs"]:
        x = y = 0
        pts = []
        for dx, dy in arc:
            x += dx
            y += dy
            pts.append((x * sx + tx, y * sy + ty))
        arcs.append(pts)
    return arcs


def ring_coords(ring, arcs):
    out = []
    for idx in ring:
        pts = arcs[idx] if idx >= 0 else arcs[~idx][::-1]
        out.extend(pts if not out else pts[1:])
    return out


def main(src, dst, width=360, height=180):
    topo = json.load(open(src))
    arcs = decode_arcs(topo)
    geoms = topo["objects"]["land"]["geometries"]
    lon = (np.arange(width) + 0.5) / width * 360.0 - 180.0
    lat = 90.0 - (np.arange(height) + 0.5) / height * 180.0
    lon_g, lat_g = np.meshgrid(lon, lat)
    pts = np.column_stack([lon_g.ravel(), lat_g.ravel()])
    land = np.zeros(len(pts), dtype=bool)
    for g in geoms:
        polys = g["arcs"] if g["type"] == "MultiPolygon" else [g["arcs"]]
        for poly in polys:
            inside = np.zeros(len(pts), dtype=bool)
            for k, ring in enumerate(poly):
                hit = Path(ring_coords(ring, arcs)).contains_points(pts)
                inside = inside | hit if k == 0 else inside & ~hit
            land |= inside
    img = np.where(land, 0, 255).astype(np.uint8).reshape(height, width)
    with open(dst, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (width, height))
        f.write(img.tobytes())
    print("land fraction (pixels):", land.mean())


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
