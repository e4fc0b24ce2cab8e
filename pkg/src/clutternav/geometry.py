"""2D geometry for yaw-rotated rectangular footprints.

All helpers operate on plain float64 numpy arrays and are fully
deterministic: same inputs, same bits out. Rectangles are described by
center (x, y), half-extents (hx, hy) and a yaw angle in radians.
"""
from __future__ import annotations

import numpy as np

# Overlaps thinner than this are treated as touching, not penetrating,
# so exactly abutting boxes never register as supporters.
PENETRATION_EPS = 1e-9


def rect_corners(center_xy, half_extents, yaw: float) -> np.ndarray:
    """Corner coordinates of a rotated rectangle, CCW, shape (4, 2)."""
    cx, cy = float(center_xy[0]), float(center_xy[1])
    hx, hy = float(half_extents[0]), float(half_extents[1])
    c, s = np.cos(yaw), np.sin(yaw)
    local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([cx, cy])


def rects_overlap(corners_a: np.ndarray, corners_b: np.ndarray) -> bool:
    """Separating-axis test for two convex quads given as (4, 2) corners.

    Touching edges (zero-width overlap) do not count: the projections
    must interpenetrate by more than PENETRATION_EPS on every axis.
    """
    for corners in (corners_a, corners_b):
        edges = np.roll(corners, -1, axis=0) - corners
        # Two unique edge directions per rectangle.
        for edge in edges[:2]:
            axis = np.array([-edge[1], edge[0]])
            norm = np.hypot(axis[0], axis[1])
            if norm == 0.0:
                continue
            axis = axis / norm
            pa = corners_a @ axis
            pb = corners_b @ axis
            if pa.min() >= pb.max() - PENETRATION_EPS:
                return False
            if pb.min() >= pa.max() - PENETRATION_EPS:
                return False
    return True


def clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman intersection of two convex CCW polygons.

    Returns the vertices of subject ∩ clip (possibly empty, shape (k, 2)).
    """
    output = [np.asarray(p, dtype=float) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        a = clip[i]
        b = clip[(i + 1) % n]
        edge = b - a
        inputs = output
        output = []
        prev = inputs[-1]
        prev_inside = _cross(edge, prev - a) >= 0.0
        for cur in inputs:
            cur_inside = _cross(edge, cur - a) >= 0.0
            if cur_inside:
                if not prev_inside:
                    output.append(_line_intersect(prev, cur, a, b))
                output.append(cur)
            elif prev_inside:
                output.append(_line_intersect(prev, cur, a, b))
            prev, prev_inside = cur, cur_inside
    if not output:
        return np.zeros((0, 2))
    return np.asarray(output)


def _cross(u, v) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _line_intersect(p1, p2, a, b) -> np.ndarray:
    """Intersection of segment p1-p2 with the infinite line through a-b."""
    d1 = _cross(b - a, p1 - a)
    d2 = _cross(b - a, p2 - a)
    denom = d1 - d2
    if denom == 0.0:
        return np.asarray(p1, dtype=float)
    t = d1 / denom
    return p1 + t * (p2 - p1)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, CCW, degenerate inputs allowed.

    Collinear inputs yield the 2-point extreme segment; a single point
    yields itself. Output shape (h, 2).
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    # np.unique sorts lexicographically, which is what the chain needs.
    lower: list[np.ndarray] = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-1] - lower[-2], p - lower[-2]) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[np.ndarray] = []
    for p in pts[::-1]:
        while len(upper) >= 2 and _cross(upper[-1] - upper[-2], p - upper[-2]) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    return np.asarray(hull)


def point_in_hull(point, hull: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether a point lies inside (or within tol of) a convex hull.

    Handles degenerate hulls: a segment accepts points within tol of it,
    a single vertex accepts points within tol of that vertex.
    """
    p = np.asarray(point, dtype=float)
    h = len(hull)
    if h == 0:
        return False
    if h == 1:
        return bool(np.hypot(*(p - hull[0])) <= tol)
    if h == 2:
        return _point_segment_distance(p, hull[0], hull[1]) <= tol
    for i in range(h):
        a = hull[i]
        b = hull[(i + 1) % h]
        if _cross(b - a, p - a) < -tol * max(1.0, np.hypot(*(b - a))):
            return False
    return True


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = np.clip(float((p - a) @ ab) / denom, 0.0, 1.0)
    return float(np.hypot(*(p - (a + t * ab))))


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area (positive for CCW)."""
    if len(vertices) < 3:
        return 0.0
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def min_area_rect(points: np.ndarray) -> tuple[np.ndarray, float, float, float]:
    """Minimum-area bounding rectangle via rotating calipers.

    Returns (center_xy, extent_u, extent_v, angle) where angle in
    [0, pi/2) orients the u axis. Works for any aspect ratio, including
    squares, where covariance-based orientation is undefined.
    """
    pts = np.asarray(points, dtype=float)
    hull = convex_hull(pts)
    if len(hull) == 1:
        return hull[0].copy(), 0.0, 0.0, 0.0
    if len(hull) == 2:
        d = hull[1] - hull[0]
        angle = float(np.arctan2(d[1], d[0])) % (np.pi / 2)
        return (hull[0] + hull[1]) / 2.0, float(np.hypot(*d)), 0.0, angle
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2)
    best = None
    for angle in np.unique(angles):
        c, s = np.cos(angle), np.sin(angle)
        u = hull @ np.array([c, s])
        v = hull @ np.array([-s, c])
        eu = u.max() - u.min()
        ev = v.max() - v.min()
        area = eu * ev
        if best is None or area < best[0] - 1e-15 or (
            abs(area - best[0]) <= 1e-15 and angle < best[4]
        ):
            cu = (u.max() + u.min()) / 2.0
            cv = (v.max() + v.min()) / 2.0
            center = np.array([c * cu - s * cv, s * cu + c * cv])
            best = (area, center, eu, ev, float(angle))
    assert best is not None
    _, center, eu, ev, angle = best
    return center, float(eu), float(ev), angle
