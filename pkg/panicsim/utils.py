"""Planar geometry helpers shared by the spatial and dynamics modules.

Rectangles are ``(x, y, w, h)`` tuples with ``(x, y)`` the lower-left corner, segments
are ``(x1, y1, x2, y2)`` tuples. Point arguments may be a single ``(2,)`` point or an
``(n, 2)`` array; results follow the input shape.
"""
from typing import Sequence

import numpy as np


def closest_on_segment(points: np.ndarray, segment: Sequence[float]) -> np.ndarray:
    """Closest point of ``segment`` to every point."""
    points = np.asarray(points, dtype=float)
    x1, y1, x2, y2 = segment
    ax, ay = x2 - x1, y2 - y1
    length_sq = ax * ax + ay * ay
    if length_sq == 0.0:
        return np.broadcast_to(np.array([x1, y1], dtype=float), points.shape).copy()
    t = ((points[..., 0] - x1) * ax + (points[..., 1] - y1) * ay) / length_sq
    t = np.clip(t, 0.0, 1.0)
    return np.stack((x1 + t * ax, y1 + t * ay), axis=-1)


def segment_distance(points: np.ndarray, segment: Sequence[float]) -> np.ndarray:
    """Euclidean distance from every point to ``segment``."""
    points = np.asarray(points, dtype=float)
    closest = closest_on_segment(points, segment)
    return np.hypot(points[..., 0] - closest[..., 0], points[..., 1] - closest[..., 1])


def closest_on_rect(points: np.ndarray, rect: Sequence[float]):
    """Closest boundary point, outward normal and signed distance to a rectangle.

    Points inside the closed rectangle are projected onto the nearest face (ties in the
    order left, right, bottom, top); their signed distance is minus the depth and the
    normal is the outward normal of that face. For points outside, the normal points
    from the closest point to the point.

    Returns:
        ``(closest, normal, distance)`` with shapes ``(..., 2)``, ``(..., 2)``, ``(...)``.
    """
    points = np.asarray(points, dtype=float)
    x, y, w, h = rect
    x0, y0, x1, y1 = x, y, x + w, y + h
    px, py = points[..., 0], points[..., 1]

    cx = np.clip(px, x0, x1)
    cy = np.clip(py, y0, y1)
    dx, dy = px - cx, py - cy
    dist = np.hypot(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        nx = np.where(dist > 0.0, dx / dist, 0.0)
        ny = np.where(dist > 0.0, dy / dist, 0.0)

    inside = (px >= x0) & (px <= x1) & (py >= y0) & (py <= y1)
    if np.any(inside):
        faces = np.stack((px - x0, x1 - px, py - y0, y1 - py), axis=-1)
        face = np.argmin(faces, axis=-1)
        depth = np.min(faces, axis=-1)
        face_x = np.choose(face, (x0, x1, px, px))
        face_y = np.choose(face, (py, py, y0, y1))
        face_nx = np.choose(face, (-1.0, 1.0, 0.0, 0.0))
        face_ny = np.choose(face, (0.0, 0.0, -1.0, 1.0))
        cx = np.where(inside, face_x, cx)
        cy = np.where(inside, face_y, cy)
        nx = np.where(inside, face_nx, nx)
        ny = np.where(inside, face_ny, ny)
        dist = np.where(inside, -depth, dist)

    return np.stack((cx, cy), axis=-1), np.stack((nx, ny), axis=-1), dist


def segment_hits_rect_interior(segment: Sequence[float], rect: Sequence[float]) -> bool:
    """Whether a segment passes through the open interior of a rectangle.

    Liang-Barsky clipping against the closed rectangle; a segment that only runs along
    the boundary or touches a corner does not count.
    """
    x1, y1, x2, y2 = segment
    x, y, w, h = rect
    dx, dy = x2 - x1, y2 - y1
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x1 - x), (dx, x + w - x1), (-dy, y1 - y), (dy, y + h - y1)):
        if p == 0.0:
            if q < 0.0:
                return False
            continue
        r = q / p
        if p < 0.0:
            t0 = max(t0, r)
        else:
            t1 = min(t1, r)
        if t0 > t1:
            return False
    mid = 0.5 * (t0 + t1)
    mx, my = x1 + mid * dx, y1 + mid * dy
    return bool(x < mx < x + w and y < my < y + h)


def rects_overlap(a: Sequence[float], b: Sequence[float]) -> bool:
    """Whether two rectangles share a region of positive area."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    return bool(min(ax + aw, bx + bw) > max(ax, bx) and min(ay + ah, by + bh) > max(ay, by))


def rect_inside(inner: Sequence[float], outer: Sequence[float], tol: float = 1e-9) -> bool:
    """Whether ``inner`` lies within the closed ``outer`` rectangle."""
    ix, iy, iw, ih = inner
    ox, oy, ow, oh = outer
    return bool(
        ix >= ox - tol and iy >= oy - tol and ix + iw <= ox + ow + tol and iy + ih <= oy + oh + tol
    )
