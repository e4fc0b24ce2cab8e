"""Synthetic top-down depth sensing and geometric instance segmentation.

The renderer plays the role of an overhead depth camera: an orthographic
z-buffer over a fixed grid, so only top-visible surfaces produce points.
Segmentation is the classic three-stage pipeline: per-point normals from
local PCA, curvature-seeded region growing over the k-NN graph, then a
box fit per planar segment.
"""
from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import geometry
from .errors import EmptySceneError, TooFewPointsError
from .sim import Scene

DEFAULT_GRID_PITCH = 0.004  # meters between grid samples
DEFAULT_RESOLUTION = 1.0 / DEFAULT_GRID_PITCH**2  # points per m^2
DEFAULT_CAMERA_HEIGHT = 1.5
DEFAULT_K_NEIGHBORS = 12
DEFAULT_ANGLE_THRESH = math.radians(10.0)
DEFAULT_CURVATURE_THRESH = 0.05
MIN_SEGMENT_SIZE = 8
FLOOR_Z_TOL = 1e-3


@dataclass(frozen=True)
class PointCloud:
    """Points with optional per-point normals, curvatures and validity."""

    points: np.ndarray  # (m, 3)
    normals: np.ndarray | None = None  # (m, 3), unit where valid
    curvatures: np.ndarray | None = None  # (m,) surface variation
    normal_valid: np.ndarray | None = None  # (m,) bool

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class ObservedObject:
    """Recovered box: dims (L, W, H), centroid, yaw of the L axis."""

    dims: tuple[float, float, float]
    centroid: tuple[float, float, float]
    yaw: float


# ---------------------------------------------------------------------------
# rendering


def render_point_cloud_labeled(
    scene: Scene,
    camera_height: float = DEFAULT_CAMERA_HEIGHT,
    resolution: float = DEFAULT_RESOLUTION,
) -> tuple[PointCloud, np.ndarray]:
    """Orthographic top-down render; labels give the owning object id.

    Label -1 marks floor points. Grid samples are cell-centered over the
    floor square, pitch = 1/sqrt(resolution).
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    extent = scene.floor_half_extent
    pitch = 1.0 / math.sqrt(resolution)
    if extent <= 0.0 or 2.0 * extent < pitch:
        raise EmptySceneError("floor too small for the sampling grid")
    if scene.objects and camera_height <= scene.max_top_z():
        raise ValueError("camera must be above all objects")

    axis = np.arange(-extent + pitch / 2.0, extent, pitch)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    gx = gx.ravel()
    gy = gy.ravel()
    z = np.zeros_like(gx)
    labels = np.full(gx.shape, -1, dtype=int)

    for obj in scene.objects:
        c, s = math.cos(obj.yaw), math.sin(obj.yaw)
        dx = gx - obj.position[0]
        dy = gy - obj.position[1]
        u = c * dx + s * dy
        v = -s * dx + c * dy
        inside = (np.abs(u) <= obj.dims[0] / 2.0) & (np.abs(v) <= obj.dims[1] / 2.0)
        higher = inside & (obj.top_z > z)
        z[higher] = obj.top_z
        labels[higher] = obj.id

    points = np.column_stack([gx, gy, z])
    return PointCloud(points=points), labels


def render_point_cloud(
    scene: Scene,
    camera_height: float = DEFAULT_CAMERA_HEIGHT,
    resolution: float = DEFAULT_RESOLUTION,
) -> PointCloud:
    cloud, _ = render_point_cloud_labeled(scene, camera_height, resolution)
    return cloud


# ---------------------------------------------------------------------------
# normals


def estimate_normals(cloud: PointCloud, k: int = DEFAULT_K_NEIGHBORS) -> PointCloud:
    """Per-point normals from PCA over k nearest neighbors.

    The normal is the smallest-variance direction, oriented into the +z
    hemisphere (toward the camera); exactly horizontal normals are
    canonicalized by sign of their first nonzero component. Neighborhoods
    with covariance rank < 2 are flagged invalid (NaN normal).
    """
    pts = cloud.points
    if k < 3:
        raise ValueError("k must be >= 3")
    if len(pts) < k:
        raise ValueError(f"need at least k={k} points, got {len(pts)}")

    tree = cKDTree(pts)
    _, idx = tree.query(pts, k=k)
    neigh = pts[idx]  # (m, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("mki,mkj->mij", centered, centered) / k
    eigvals, eigvecs = np.linalg.eigh(cov)  # ascending

    normals = eigvecs[:, :, 0].copy()
    total = eigvals.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        curvatures = np.where(total > 0.0, eigvals[:, 0] / total, np.nan)
    valid = eigvals[:, 1] > 1e-8 * np.maximum(eigvals[:, 2], 1e-300)

    # Orient toward the camera; canonicalize horizontal normals.
    flip = normals[:, 2] < -1e-12
    horiz = np.abs(normals[:, 2]) <= 1e-12
    flip |= horiz & (normals[:, 0] < -1e-12)
    flip |= horiz & (np.abs(normals[:, 0]) <= 1e-12) & (normals[:, 1] < 0.0)
    normals[flip] *= -1.0
    normals[~valid] = np.nan
    curvatures = np.where(valid, curvatures, np.nan)

    return PointCloud(
        points=pts, normals=normals, curvatures=curvatures, normal_valid=valid
    )


# ---------------------------------------------------------------------------
# region growing


def region_grow(
    cloud: PointCloud,
    angle_thresh: float = DEFAULT_ANGLE_THRESH,
    curvature_thresh: float = DEFAULT_CURVATURE_THRESH,
    k: int = DEFAULT_K_NEIGHBORS,
    min_segment_size: int = MIN_SEGMENT_SIZE,
) -> list[np.ndarray]:
    """Grow planar segments over the k-NN graph, lowest curvature first.

    A neighbor joins a segment when its normal deviates from the current
    seed's normal by at most angle_thresh; it seeds further growth only
    when its own curvature is below curvature_thresh. Points in no
    returned segment (including invalid-normal points and undersized
    regions) are noise.
    """
    if cloud.normals is None or cloud.curvatures is None or cloud.normal_valid is None:
        raise ValueError("region growing requires estimated normals")
    pts = cloud.points
    m = len(pts)
    if m == 0:
        return []

    tree = cKDTree(pts)
    _, neighbor_idx = tree.query(pts, k=min(k, m))
    normals = cloud.normals
    curv = cloud.curvatures
    valid = cloud.normal_valid
    cos_thresh = math.cos(angle_thresh)

    seed_order = np.argsort(np.where(valid, curv, np.inf), kind="stable")
    visited = ~valid.copy()  # invalid points are never grown
    segments: list[np.ndarray] = []

    for seed in seed_order:
        if visited[seed]:
            continue
        visited[seed] = True
        segment = [int(seed)]
        queue = deque([int(seed)])
        while queue:
            p = queue.popleft()
            nbrs = neighbor_idx[p]
            cand = nbrs[~visited[nbrs]]
            if len(cand) == 0:
                continue
            dots = normals[cand] @ normals[p]
            accepted = cand[dots >= cos_thresh]
            for q in accepted:
                qi = int(q)
                visited[qi] = True
                segment.append(qi)
                if curv[qi] <= curvature_thresh:
                    queue.append(qi)
        if len(segment) >= min_segment_size:
            segments.append(np.array(sorted(segment), dtype=int))
    return segments


# ---------------------------------------------------------------------------
# box fitting


def fit_aabb(
    points: np.ndarray, support_z: float = 0.0, grid_pitch: float = 0.0
) -> ObservedObject:
    """Fit a box to a top-face segment.

    Planform shape and yaw come from the minimum-area bounding rectangle
    of the segment's XY hull; height is the face elevation above the
    supporting surface. When grid_pitch is known, the extents are
    rescaled so the rectangle area matches the sampled area
    n * pitch^2, which is rotation-unbiased, unlike the raw extents.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise TooFewPointsError("box fit needs at least 4 points")
    top_z = float(pts[:, 2].mean())
    center_xy, eu, ev, angle = geometry.min_area_rect(pts[:, : 2])
    if grid_pitch > 0.0:
        if eu * ev > 0.0:
            scale = math.sqrt(len(pts) * grid_pitch**2 / (eu * ev))
            eu, ev = eu * scale, ev * scale
        else:
            eu, ev = eu + grid_pitch, ev + grid_pitch
    length = max(eu, 1e-6)
    width = max(ev, 1e-6)
    height = max(top_z - support_z, 1e-6)
    centroid = (float(center_xy[0]), float(center_xy[1]), (top_z + support_z) / 2.0)
    return ObservedObject(dims=(length, width, height), centroid=centroid, yaw=angle)


def _estimate_pitch(pts: np.ndarray, tree: cKDTree) -> float:
    d, _ = tree.query(pts, k=2)
    return float(np.median(d[:, 1]))


def segment_scene(
    cloud: PointCloud,
    k: int = DEFAULT_K_NEIGHBORS,
    angle_thresh: float = DEFAULT_ANGLE_THRESH,
    curvature_thresh: float = DEFAULT_CURVATURE_THRESH,
    min_segment_size: int = MIN_SEGMENT_SIZE,
) -> list[ObservedObject]:
    """Full pipeline: normals, region growing, floor removal, box fits.

    Floor segments are dropped when their mean elevation is near zero or
    their hull covers most of the cloud's XY bounding box. Each remaining
    face's support elevation is the highest point found just outside its
    footprint below the face; that ring is what a lower surface looks
    like to a top-down sensor, since nothing is emitted under a face.
    """
    pts = cloud.points
    if len(pts) < max(k, MIN_SEGMENT_SIZE):
        return []
    if cloud.normals is None:
        cloud = estimate_normals(cloud, k=k)
        pts = cloud.points

    tree = cKDTree(pts)
    pitch = _estimate_pitch(pts, tree)
    span = pts[:, :2].max(axis=0) - pts[:, :2].min(axis=0)
    bbox_area = float(span[0] * span[1])

    segments = region_grow(
        cloud,
        angle_thresh=angle_thresh,
        curvature_thresh=curvature_thresh,
        k=k,
        min_segment_size=min_segment_size,
    )

    observed: list[ObservedObject] = []
    for seg in segments:
        seg_pts = pts[seg]
        mean_z = float(seg_pts[:, 2].mean())
        if abs(mean_z) < FLOOR_Z_TOL:
            continue
        hull = geometry.convex_hull(seg_pts[:, :2])
        if bbox_area > 0.0 and abs(geometry.polygon_area(hull)) > 0.5 * bbox_area:
            continue
        center_xy, eu, ev, angle = geometry.min_area_rect(seg_pts[:, :2])
        support_z = _support_elevation(pts, center_xy, eu, ev, angle, mean_z, pitch)
        observed.append(fit_aabb(seg_pts, support_z=support_z, grid_pitch=pitch))

    observed.sort(key=lambda o: o.centroid)
    return observed


def _support_elevation(pts, center_xy, eu, ev, angle, top_z, pitch) -> float:
    """Highest surface in the slightly expanded footprint below the face."""
    c, s = math.cos(angle), math.sin(angle)
    dx = pts[:, 0] - center_xy[0]
    dy = pts[:, 1] - center_xy[1]
    u = c * dx + s * dy
    v = -s * dx + c * dy
    margin = 1.5 * pitch
    inside = (np.abs(u) <= eu / 2.0 + margin) & (np.abs(v) <= ev / 2.0 + margin)
    below = inside & (pts[:, 2] < top_z - max(3.0 * pitch, FLOOR_Z_TOL))
    if not below.any():
        return 0.0
    return float(pts[below, 2].max())


def observe_ground_truth(scene: Scene) -> tuple[list[ObservedObject], list[int]]:
    """Perception bypass: exact boxes from the simulator, same schema.

    Returns the observations and the matching object ids, both in id
    order.
    """
    objects = sorted(scene.objects, key=lambda o: o.id)
    observed = [
        ObservedObject(dims=o.dims, centroid=o.position, yaw=o.yaw) for o in objects
    ]
    return observed, [o.id for o in objects]


# ---------------------------------------------------------------------------
# I/O


def save_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w") as fh:
        for x, y, z in cloud.points:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def load_xyz(path) -> PointCloud:
    data = np.loadtxt(path, dtype=float)
    if data.size == 0:
        return PointCloud(points=np.zeros((0, 3)))
    return PointCloud(points=data.reshape(-1, 3))


def observed_to_dicts(objects: list[ObservedObject]) -> list[dict]:
    return [
        {"dims": list(o.dims), "centroid": list(o.centroid), "yaw": o.yaw}
        for o in objects
    ]


def observed_from_dicts(records: list[dict]) -> list[ObservedObject]:
    return [
        ObservedObject(
            dims=tuple(float(v) for v in rec["dims"]),
            centroid=tuple(float(v) for v in rec["centroid"]),
            yaw=float(rec["yaw"]),
        )
        for rec in records
    ]


def save_observed(objects: list[ObservedObject], path) -> None:
    with open(path, "w") as fh:
        json.dump(observed_to_dicts(objects), fh, indent=2)


def load_observed(path) -> list[ObservedObject]:
    with open(path) as fh:
        return observed_from_dicts(json.load(fh))
