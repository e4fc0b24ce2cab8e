import math

import numpy as np
import pytest

from clutternav import geometry as geo


class TestRectsOverlap:
    def test_clearly_overlapping(self):
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((0.5, 0.5), (1, 1), 0.3)
        assert geo.rects_overlap(a, b)

    def test_disjoint(self):
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((5, 0), (1, 1), 0.7)
        assert not geo.rects_overlap(a, b)

    def test_exactly_touching_edges_do_not_count(self):
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((2.0, 0), (1, 1), 0.0)
        assert not geo.rects_overlap(a, b)

    def test_rotated_near_miss(self):
        # Diamond whose corner approaches but does not enter the square.
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((1 + math.sqrt(2) + 1e-6, 0), (1, 1), math.pi / 4)
        assert not geo.rects_overlap(a, b)
        c = geo.rect_corners((1 + math.sqrt(2) - 1e-3, 0), (1, 1), math.pi / 4)
        assert geo.rects_overlap(a, c)


class TestClipConvex:
    def test_half_overlap_area(self):
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((1, 0), (1, 1), 0.0)
        poly = geo.clip_convex(a, b)
        assert abs(abs(geo.polygon_area(geo.convex_hull(poly))) - 2.0) < 1e-12

    def test_contained_rectangle(self):
        outer = geo.rect_corners((0, 0), (2, 2), 0.0)
        inner = geo.rect_corners((0.2, -0.1), (0.5, 0.5), 0.4)
        poly = geo.clip_convex(inner, outer)
        assert abs(abs(geo.polygon_area(geo.convex_hull(poly))) - 1.0) < 1e-12

    def test_disjoint_empty(self):
        a = geo.rect_corners((0, 0), (1, 1), 0.0)
        b = geo.rect_corners((10, 10), (1, 1), 0.0)
        assert len(geo.clip_convex(a, b)) == 0


class TestConvexHull:
    def test_square_with_interior_points(self):
        pts = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5], [0.2, 0.7]])
        hull = geo.convex_hull(pts)
        assert len(hull) == 4

    def test_collinear(self):
        pts = np.array([[0, 0], [1, 1], [2, 2], [0.5, 0.5]])
        hull = geo.convex_hull(pts)
        assert len(hull) == 2

    def test_point_in_hull(self):
        hull = geo.convex_hull(np.array([[0, 0], [2, 0], [2, 2], [0, 2]]))
        assert geo.point_in_hull((1, 1), hull)
        assert geo.point_in_hull((0, 0), hull)  # boundary
        assert not geo.point_in_hull((3, 1), hull)

    def test_point_in_degenerate_hulls(self):
        segment = np.array([[0.0, 0.0], [1.0, 0.0]])
        assert geo.point_in_hull((0.5, 0.0), segment)
        assert not geo.point_in_hull((0.5, 0.1), segment)
        point = np.array([[0.3, 0.4]])
        assert geo.point_in_hull((0.3, 0.4), point)
        assert not geo.point_in_hull((0.31, 0.4), point)


class TestMinAreaRect:
    @pytest.mark.parametrize("angle_deg", [0, 17, 45, 60, 89])
    def test_recovers_rectangle(self, angle_deg):
        rng = np.random.default_rng(angle_deg)
        angle = math.radians(angle_deg)
        u = rng.uniform(-0.5, 0.5, 400)
        v = rng.uniform(-0.2, 0.2, 400)
        # Pin the extremes so the extents are exact.
        u[:2] = [-0.5, 0.5]
        v[2:4] = [-0.2, 0.2]
        u[2:4] = 0.0
        v[:2] = 0.0
        c, s = math.cos(angle), math.sin(angle)
        pts = np.column_stack([c * u - s * v, s * u + c * v])
        center, eu, ev, rec_angle = geo.min_area_rect(pts)
        assert abs(max(eu, ev) - 1.0) < 0.05
        assert abs(min(eu, ev) - 0.4) < 0.05
        err = abs((rec_angle - angle) % (math.pi / 2))
        err = min(err, math.pi / 2 - err)
        assert err < math.radians(3.0)

    def test_square_orientation(self):
        # A square's orientation is recoverable mod 90 degrees.
        angle = math.radians(45)
        grid = np.linspace(-0.5, 0.5, 21)
        gx, gy = np.meshgrid(grid, grid)
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        c, s = math.cos(angle), math.sin(angle)
        rot = pts @ np.array([[c, s], [-s, c]])
        _, eu, ev, rec = geo.min_area_rect(rot)
        err = abs((rec - angle) % (math.pi / 2))
        err = min(err, math.pi / 2 - err)
        assert err < math.radians(1.0)
        assert abs(eu - 1.0) < 1e-6 and abs(ev - 1.0) < 1e-6
