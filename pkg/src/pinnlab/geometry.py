"""Polygonal 2-D geometries: file I/O, point containment, signed distances.

The signed-distance oracle is brute force on purpose: exact distance to every
edge, sign from even-odd ray casting.  It is the ground truth that trained
distance fields are judged against.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GeometryError",
    "Geometry2D",
    "circle_polygon",
    "read_geometry",
    "write_geometry",
    "sdf_ground_truth",
]


class GeometryError(ValueError):
    pass


def _segments_properly_intersect(p1, p2, q1, q2) -> bool:
    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1 = cross(q1, q2, p1)
    d2 = cross(q1, q2, p2)
    d3 = cross(p1, p2, q1)
    d4 = cross(p1, p2, q2)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


@dataclass
class Geometry2D:
    """Closed simple polygons given as ordered vertex lists (no repeated endpoint)."""

    polygons: list[np.ndarray]

    def __post_init__(self):
        if not self.polygons:
            raise GeometryError("geometry needs at least one polygon")
        self.polygons = [np.asarray(p, dtype=np.float64) for p in self.polygons]
        for poly in self.polygons:
            if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
                raise GeometryError("each polygon needs >= 3 (x, y) vertices")
            edges = np.roll(poly, -1, axis=0) - poly
            lengths = np.hypot(edges[:, 0], edges[:, 1])
            if np.any(lengths == 0.0):
                raise GeometryError("polygon has a zero-length edge")
            m = poly.shape[0]
            for i in range(m):
                a1, a2 = poly[i], poly[(i + 1) % m]
                for j in range(i + 1, m):
                    if j == i or (j + 1) % m == i or (i + 1) % m == j:
                        continue
                    b1, b2 = poly[j], poly[(j + 1) % m]
                    if _segments_properly_intersect(a1, a2, b1, b2):
                        raise GeometryError("polygon is self-intersecting")

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """All edges over all polygons as (starts (E,2), ends (E,2))."""
        starts = np.concatenate(self.polygons, axis=0)
        ends = np.concatenate([np.roll(p, -1, axis=0) for p in self.polygons], axis=0)
        return starts, ends

    def perimeter_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n points uniform by arclength over all polygon boundaries."""
        starts, ends = self.edges()
        vec = ends - starts
        lengths = np.hypot(vec[:, 0], vec[:, 1])
        cum = np.cumsum(lengths)
        s = rng.uniform(0.0, cum[-1], size=n)
        idx = np.searchsorted(cum, s, side="right")
        offs = s - (cum[idx] - lengths[idx])
        frac = offs / lengths[idx]
        return starts[idx] + frac[:, None] * vec[idx]

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Even-odd point-in-polygon test over all polygons, shape (N,) bool."""
        points = np.asarray(points, dtype=np.float64)
        starts, ends = self.edges()
        inside = np.zeros(points.shape[0], dtype=bool)
        for chunk in _chunks(points.shape[0], 4096):
            px = points[chunk, 0][:, None]
            py = points[chunk, 1][:, None]
            y1 = starts[None, :, 1]
            y2 = ends[None, :, 1]
            x1 = starts[None, :, 0]
            x2 = ends[None, :, 0]
            straddles = (y1 > py) != (y2 > py)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
            hits = straddles & (px < x_cross)
            inside[chunk] = hits.sum(axis=1) % 2 == 1
        return inside

    def distance(self, points: np.ndarray) -> np.ndarray:
        """Unsigned distance to the nearest polygon edge, shape (N,)."""
        points = np.asarray(points, dtype=np.float64)
        starts, ends = self.edges()
        vec = ends - starts
        sq_len = (vec**2).sum(axis=1)
        out = np.empty(points.shape[0])
        for chunk in _chunks(points.shape[0], 4096):
            p = points[chunk]
            rel = p[:, None, :] - starts[None, :, :]
            t = (rel * vec[None, :, :]).sum(axis=2) / sq_len[None, :]
            np.clip(t, 0.0, 1.0, out=t)
            proj = starts[None, :, :] + t[:, :, None] * vec[None, :, :]
            d = np.hypot(p[:, None, 0] - proj[:, :, 0], p[:, None, 1] - proj[:, :, 1])
            out[chunk] = d.min(axis=1)
        return out


def _chunks(n: int, size: int):
    for lo in range(0, n, size):
        yield slice(lo, min(lo + size, n))


def sdf_ground_truth(geom: Geometry2D, points: np.ndarray) -> np.ndarray:
    """Signed distances: negative inside (even-odd rule), positive outside."""
    d = geom.distance(points)
    d[geom.contains(points)] *= -1.0
    return d


def circle_polygon(radius: float, n_vertices: int = 256, center=(0.0, 0.0)) -> Geometry2D:
    angles = 2.0 * np.pi * np.arange(n_vertices) / n_vertices
    verts = np.stack(
        [center[0] + radius * np.cos(angles), center[1] + radius * np.sin(angles)], axis=1
    )
    return Geometry2D([verts])


def read_geometry(path) -> Geometry2D:
    """One polygon per block of "x y" lines; blank lines separate polygons."""
    polygons = []
    current: list[list[float]] = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                if current:
                    polygons.append(np.array(current))
                    current = []
                continue
            x, y = line.split()
            current.append([float(x), float(y)])
    if current:
        polygons.append(np.array(current))
    return Geometry2D(polygons)


def write_geometry(path, geom: Geometry2D) -> None:
    with open(path, "w") as fh:
        for i, poly in enumerate(geom.polygons):
            if i:
                fh.write("\n")
            for x, y in poly:
                fh.write(f"{float(x)!r} {float(y)!r}\n")
