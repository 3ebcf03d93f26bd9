"""Planar geometry primitives shared by the simulator and the optimizer.

Everything works on plain ``(x, y)`` coordinates in meters. Polylines are
``(n, 2)`` float arrays, oriented rectangles are center + heading + extents.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle given by center, heading (radians) and full extents (meters)."""

    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        """Corner coordinates as a (4, 2) array, counter-clockwise."""
        c, s = np.cos(self.heading), np.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def axes(self) -> np.ndarray:
        """The two unit edge directions, shape (2, 2)."""
        c, s = np.cos(self.heading), np.sin(self.heading)
        return np.array([[c, s], [-s, c]])


def rects_overlap(a: OrientedRect, b: OrientedRect) -> bool:
    """Separating-axis overlap test for two oriented rectangles.

    Touching boundaries count as overlap (closed rectangles).
    """
    ca, cb = a.corners(), b.corners()
    for axis in np.vstack([a.axes(), b.axes()]):
        pa = ca @ axis
        pb = cb @ axis
        if pa.max() < pb.min() or pb.max() < pa.min():
            return False
    return True


def segment_intersects_rect(p0: np.ndarray, p1: np.ndarray, rect: OrientedRect) -> bool:
    """True iff the open segment (p0, p1) meets the closed rectangle.

    Uses the slab method in the rectangle's local frame. Endpoints lying
    exactly on the boundary do not count (open segment).
    """
    c, s = np.cos(rect.heading), np.sin(rect.heading)
    rot = np.array([[c, s], [-s, c]])
    center = np.array([rect.cx, rect.cy])
    a = rot @ (np.asarray(p0, dtype=float) - center)
    b = rot @ (np.asarray(p1, dtype=float) - center)
    half = np.array([0.5 * rect.length, 0.5 * rect.width])

    d = b - a
    t0, t1 = 0.0, 1.0
    for k in range(2):
        if abs(d[k]) < 1e-15:
            if abs(a[k]) > half[k]:
                return False
            continue
        lo = (-half[k] - a[k]) / d[k]
        hi = (half[k] - a[k]) / d[k]
        if lo > hi:
            lo, hi = hi, lo
        t0, t1 = max(t0, lo), min(t1, hi)
        if t0 > t1:
            return False
    # Intersection interval must have positive measure strictly inside (0, 1).
    return t1 > 1e-12 and t0 < 1.0 - 1e-12 and t1 > t0


def segments_intersect_rects(p0: np.ndarray, points: np.ndarray, rects: list[OrientedRect]) -> np.ndarray:
    """Vectorized variant: one eye point against many targets and obstacles.

    Returns a boolean array over ``points`` rows: True where the open segment
    from ``p0`` to that point crosses any rectangle in ``rects``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    blocked = np.zeros(len(points), dtype=bool)
    p0 = np.asarray(p0, dtype=float)
    for rect in rects:
        c, s = np.cos(rect.heading), np.sin(rect.heading)
        rot = np.array([[c, s], [-s, c]])
        center = np.array([rect.cx, rect.cy])
        a = rot @ (p0 - center)
        b = (points - center) @ rot.T
        d = b - a
        half = np.array([0.5 * rect.length, 0.5 * rect.width])

        t0 = np.zeros(len(points))
        t1 = np.ones(len(points))
        ok = np.ones(len(points), dtype=bool)
        for k in range(2):
            dk = d[:, k]
            small = np.abs(dk) < 1e-15
            ok &= ~(small & (abs(a[k]) > half[k]))
            with np.errstate(divide="ignore", invalid="ignore"):
                lo = (-half[k] - a[k]) / dk
                hi = (half[k] - a[k]) / dk
            swap = lo > hi
            lo2 = np.where(swap, hi, lo)
            hi2 = np.where(swap, lo, hi)
            t0 = np.where(small, t0, np.maximum(t0, lo2))
            t1 = np.where(small, t1, np.minimum(t1, hi2))
        ok &= t0 <= t1
        ok &= (t1 > 1e-12) & (t0 < 1.0 - 1e-12)
        blocked |= ok
    return blocked


def polyline_arclength(poly: np.ndarray) -> np.ndarray:
    """Cumulative arc length at each vertex, starting at 0."""
    poly = np.asarray(poly, dtype=float)
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def point_at_arclength(poly: np.ndarray, s: float) -> np.ndarray:
    """Point on the polyline at arc length ``s``, clamped to the ends."""
    poly = np.asarray(poly, dtype=float)
    cum = polyline_arclength(poly)
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(poly) - 2)
    span = cum[i + 1] - cum[i]
    t = 0.0 if span <= 0 else (s - cum[i]) / span
    return poly[i] + t * (poly[i + 1] - poly[i])


def heading_at_arclength(poly: np.ndarray, s: float) -> float:
    """Tangent heading (radians) of the polyline segment containing ``s``."""
    poly = np.asarray(poly, dtype=float)
    cum = polyline_arclength(poly)
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right")) - 1
    i = min(max(i, 0), len(poly) - 2)
    d = poly[i + 1] - poly[i]
    return float(np.arctan2(d[1], d[0]))


def project_point_to_polyline(point: np.ndarray, poly: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Closest point on a polyline.

    Returns ``(foot, arclength, distance)`` where ``foot`` is the closest
    point, ``arclength`` its position along the polyline and ``distance``
    the Euclidean distance from ``point``.
    """
    point = np.asarray(point, dtype=float)
    poly = np.asarray(poly, dtype=float)
    a = poly[:-1]
    b = poly[1:]
    ab = b - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom <= 0, 1.0, denom)
    t = np.clip(np.einsum("ij,ij->i", point - a, ab) / denom, 0.0, 1.0)
    feet = a + t[:, None] * ab
    dists = np.linalg.norm(feet - point, axis=1)
    i = int(np.argmin(dists))
    cum = polyline_arclength(poly)
    seg_len = np.linalg.norm(ab[i])
    return feet[i], float(cum[i] + t[i] * seg_len), float(dists[i])


def project_points_to_polyline(points: np.ndarray, poly: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized :func:`project_point_to_polyline` over (n, 2) points."""
    points = np.asarray(points, dtype=float)
    poly = np.asarray(poly, dtype=float)
    a = poly[:-1]
    ab = poly[1:] - a
    denom = np.einsum("ij,ij->i", ab, ab)
    denom = np.where(denom <= 0, 1.0, denom)
    # (n_points, n_segs)
    t = np.einsum("pj,sj->ps", points, ab)
    t = (t - np.einsum("sj,sj->s", a, ab)) / denom
    t = np.clip(t, 0.0, 1.0)
    feet = a[None, :, :] + t[:, :, None] * ab[None, :, :]
    d = np.linalg.norm(feet - points[:, None, :], axis=2)
    idx = np.argmin(d, axis=1)
    rows = np.arange(len(points))
    cum = polyline_arclength(poly)
    seg_len = np.linalg.norm(ab, axis=1)
    arcs = cum[idx] + t[rows, idx] * seg_len[idx]
    return feet[rows, idx], arcs, d[rows, idx]


def segment_crossing_frame(points: np.ndarray, p1: np.ndarray, p2: np.ndarray) -> int | None:
    """First index t where the move points[t] -> points[t+1] crosses segment (p1, p2).

    Returns None when the path never crosses. Used for stop-line events.
    """
    points = np.asarray(points, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    d = p2 - p1
    for t in range(len(points) - 1):
        q1, q2 = points[t], points[t + 1]
        e = q2 - q1
        denom = d[0] * e[1] - d[1] * e[0]
        if abs(denom) < 1e-15:
            continue
        r = q1 - p1
        u = (r[0] * e[1] - r[1] * e[0]) / denom
        v = (r[0] * d[1] - r[1] * d[0]) / denom
        if 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0:
            return t
    return None
