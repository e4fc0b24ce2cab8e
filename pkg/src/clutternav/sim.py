"""Deterministic quasi-static cuboid world.

Scenes are immutable: every operation returns a new Scene. Objects are
upright cuboids (yaw only) that drop straight down onto the highest
overlapping top face at or below them (floor = 0). An object resting on
others is stable when its center of mass projects inside the convex hull
of the contact-overlap corner points; unstable objects are nudged from
the hull centroid toward the COM and re-dropped until they come to rest,
falling back to the floor after TOPPLE_MAX_ITERS nudges. Lateral
interpenetration is not resolved; this is a settling model, not a rigid
body engine.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import geometry
from .constants import N_MAX
from .errors import IdMismatchError, UnknownIdError

log = logging.getLogger(__name__)

DIM_MIN = 0.07
DIM_MAX = 0.09
DEFAULT_DENSITY = 140.0
DEFAULT_FLOOR_HALF_EXTENT = 0.5
SPAWN_RADIUS = 0.25

SETTLE_EPS = 1e-4
SETTLE_MAX_PASSES = 50
TOPPLE_STEP = 0.01
TOPPLE_MAX_ITERS = 20
CONTACT_TOL = 1e-6

TAU_MOVE_SIM = 0.005
TAU_MOVE_REPORT = 0.05

SCENARIO_KINDS = ("clutter", "stack", "wall", "pyramid")


@dataclass(frozen=True)
class SceneObject:
    """One cuboid: axis dims (L, W, H), centroid position, yaw about z."""

    id: int
    dims: tuple[float, float, float]
    position: tuple[float, float, float]
    yaw: float
    density: float = DEFAULT_DENSITY

    @property
    def top_z(self) -> float:
        return self.position[2] + self.dims[2] / 2.0

    @property
    def bottom_z(self) -> float:
        return self.position[2] - self.dims[2] / 2.0

    @property
    def volume(self) -> float:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def footprint_corners(self) -> np.ndarray:
        return geometry.rect_corners(
            self.position[:2], (self.dims[0] / 2.0, self.dims[1] / 2.0), self.yaw
        )


@dataclass(frozen=True)
class Scene:
    """Immutable world state: cuboids over a square floor centered at 0."""

    objects: tuple[SceneObject, ...]
    floor_half_extent: float = DEFAULT_FLOOR_HALF_EXTENT
    seed: int = 0

    def __post_init__(self):
        ids = [o.id for o in self.objects]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")

    def ids(self) -> list[int]:
        return [o.id for o in self.objects]

    def get(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.id == object_id:
                return o
        raise UnknownIdError(object_id)

    def max_top_z(self) -> float:
        return max((o.top_z for o in self.objects), default=0.0)

    def centroids(self) -> dict[int, tuple[float, float, float]]:
        return {o.id: o.position for o in self.objects}


@dataclass(frozen=True)
class RemovalOutcome:
    """Bookkeeping for one removal: who moved, and by how much in total."""

    removed_id: int
    pre_centroids: dict[int, tuple[float, float, float]]
    post_centroids: dict[int, tuple[float, float, float]]
    d_total: float
    objects_moved: int


# ---------------------------------------------------------------------------
# settling


def settle(scene: Scene) -> Scene:
    """Drop every object to rest, bottom-up, until a fixed point.

    Objects never move upward. Unstable perches are nudged toward their
    COM and re-dropped; after TOPPLE_MAX_ITERS nudges the object is
    rested on the floor at its last XY (topple limit).
    """
    n = len(scene.objects)
    if n == 0:
        return scene
    pos = np.array([o.position for o in scene.objects], dtype=float)
    dims = np.array([o.dims for o in scene.objects], dtype=float)
    yaws = np.array([o.yaw for o in scene.objects], dtype=float)
    obj_ids = [o.id for o in scene.objects]
    radii = np.hypot(dims[:, 0], dims[:, 1]) / 2.0
    corners = [
        geometry.rect_corners(pos[i, :2], dims[i, :2] / 2.0, yaws[i]) for i in range(n)
    ]

    for _ in range(SETTLE_MAX_PASSES):
        order = sorted(range(n), key=lambda i: (pos[i, 2] - dims[i, 2] / 2.0, obj_ids[i]))
        placed: list[int] = []
        max_disp = 0.0
        for i in order:
            old = pos[i].copy()
            _place_one(i, placed, pos, dims, yaws, radii, corners, obj_ids)
            placed.append(i)
            max_disp = max(max_disp, float(np.linalg.norm(pos[i] - old)))
        if max_disp < SETTLE_EPS:
            break
    else:
        log.warning("settle: pass limit (%d) reached", SETTLE_MAX_PASSES)

    new_objects = tuple(
        replace(scene.objects[i], position=(pos[i, 0], pos[i, 1], pos[i, 2]))
        for i in range(n)
    )
    return replace(scene, objects=new_objects)


def _place_one(i, placed, pos, dims, yaws, radii, corners, obj_ids) -> None:
    """Drop object i onto the placed set; nudge until stable."""
    half_h = dims[i, 2] / 2.0
    for _ in range(TOPPLE_MAX_ITERS):
        bottom = pos[i, 2] - half_h
        rest_top = 0.0
        supporters: list[int] = []
        for j in placed:
            top_j = pos[j, 2] + dims[j, 2] / 2.0
            if top_j > bottom + CONTACT_TOL:
                continue
            d2 = (pos[i, 0] - pos[j, 0]) ** 2 + (pos[i, 1] - pos[j, 1]) ** 2
            if d2 > (radii[i] + radii[j]) ** 2:
                continue
            if not geometry.rects_overlap(corners[i], corners[j]):
                continue
            if top_j > rest_top + CONTACT_TOL:
                rest_top = top_j
                supporters = [j]
            elif top_j > rest_top - CONTACT_TOL:
                supporters.append(j)

        if not supporters:
            pos[i, 2] = half_h
            return

        contact_pts = []
        for j in supporters:
            poly = geometry.clip_convex(corners[i], corners[j])
            if len(poly):
                contact_pts.append(poly)
        if not contact_pts:
            pos[i, 2] = half_h
            return
        hull = geometry.convex_hull(np.vstack(contact_pts))
        com_xy = pos[i, :2]
        if geometry.point_in_hull(com_xy, hull, tol=1e-9):
            pos[i, 2] = rest_top + half_h
            return

        # Unstable: nudge from the hull centroid toward the COM and retry.
        centroid = hull.mean(axis=0)
        direction = com_xy - centroid
        norm = float(np.hypot(direction[0], direction[1]))
        if norm < 1e-12:
            angle = (obj_ids[i] * 0.61803398875) % 1.0 * 2.0 * math.pi
            direction = np.array([math.cos(angle), math.sin(angle)])
        else:
            direction = direction / norm
        pos[i, 0] += TOPPLE_STEP * direction[0]
        pos[i, 1] += TOPPLE_STEP * direction[1]
        pos[i, 2] = rest_top + half_h
        corners[i] = geometry.rect_corners(pos[i, :2], dims[i, :2] / 2.0, yaws[i])

    log.debug("settle: topple limit for object %d; floor-rested", obj_ids[i])
    pos[i, 2] = half_h


def stability_violations(scene: Scene) -> list[int]:
    """Ids of objects that are neither floor-supported nor stably perched."""
    bad = []
    for o in scene.objects:
        if abs(o.bottom_z) <= CONTACT_TOL:
            continue
        corners_o = o.footprint_corners()
        contact_pts = []
        for s in scene.objects:
            if s.id == o.id:
                continue
            if abs(s.top_z - o.bottom_z) > CONTACT_TOL:
                continue
            if not geometry.rects_overlap(corners_o, s.footprint_corners()):
                continue
            poly = geometry.clip_convex(corners_o, s.footprint_corners())
            if len(poly):
                contact_pts.append(poly)
        if not contact_pts:
            bad.append(o.id)
            continue
        hull = geometry.convex_hull(np.vstack(contact_pts))
        if not geometry.point_in_hull(o.position[:2], hull, tol=1e-9):
            bad.append(o.id)
    return bad


def is_statically_stable(scene: Scene) -> bool:
    return not stability_violations(scene)


# ---------------------------------------------------------------------------
# generation


def spawn_layered_clutter(seed: int, n_objects: int, layers: int) -> Scene:
    """Drop cuboids over a floor disc in layers, settling after each layer."""
    if n_objects < 1:
        raise ValueError("n_objects must be >= 1")
    if layers < 1:
        raise ValueError("layers must be >= 1")
    if n_objects > N_MAX:
        raise ValueError(f"n_objects {n_objects} exceeds padded state capacity {N_MAX}")

    rng = np.random.default_rng(seed)
    base, rem = divmod(n_objects, layers)
    counts = [base + (1 if k < rem else 0) for k in range(layers)]

    scene = Scene(objects=(), seed=seed)
    next_id = 0
    for count in counts:
        top = scene.max_top_z()
        batch = []
        for k in range(count):
            dims = tuple(rng.uniform(DIM_MIN, DIM_MAX, size=3))
            r = SPAWN_RADIUS * math.sqrt(rng.uniform())
            theta = rng.uniform(0.0, 2.0 * math.pi)
            yaw = rng.uniform(0.0, math.pi)
            z = top + 0.2 + dims[2] / 2.0 + k * 1e-3
            batch.append(
                SceneObject(
                    id=next_id,
                    dims=dims,
                    position=(r * math.cos(theta), r * math.sin(theta), z),
                    yaw=yaw,
                )
            )
            next_id += 1
        scene = replace(scene, objects=scene.objects + tuple(batch))
        scene = settle(scene)
    return scene


def _pyramid_layer_counts(n: int) -> list[int]:
    """Consecutive decreasing layer sizes summing exactly to n."""
    for base in range(1, n + 1):
        counts = []
        width, remaining = base, n
        while remaining > 0 and width > 0:
            take = min(width, remaining)
            counts.append(take)
            remaining -= take
            width -= 1
        if remaining == 0 and all(a > b for a, b in zip(counts, counts[1:])):
            return counts
    raise ValueError(f"no pyramid layering for n={n}")


def build_scenario(kind: str, seed: int) -> Scene:
    """Construct one of the four evaluation arrangements, settled."""
    if kind == "clutter":
        return spawn_layered_clutter(seed, 30, 3)
    rng = np.random.default_rng(seed)
    if kind == "stack":
        objs = []
        z = 0.0
        for i in range(10):
            dims = tuple(rng.uniform(DIM_MIN, DIM_MAX, size=3))
            objs.append(
                SceneObject(id=i, dims=dims, position=(0.0, 0.0, z + dims[2] / 2.0), yaw=0.0)
            )
            z += dims[2]
        return settle(Scene(objects=tuple(objs), seed=seed))
    if kind == "wall":
        dims = tuple(rng.uniform(DIM_MIN, DIM_MAX, size=3))
        objs = []
        oid = 0
        for row in range(3):
            for col in range(10):
                x = (col - 4.5) * dims[0]
                z = (row + 0.5) * dims[2]
                objs.append(SceneObject(id=oid, dims=dims, position=(x, 0.0, z), yaw=0.0))
                oid += 1
        return settle(Scene(objects=tuple(objs), seed=seed))
    if kind == "pyramid":
        dims = tuple(rng.uniform(DIM_MIN, DIM_MAX, size=3))
        counts = _pyramid_layer_counts(30)
        objs = []
        oid = 0
        for level, count in enumerate(counts):
            z = (level + 0.5) * dims[2]
            for k in range(count):
                x = (k - (count - 1) / 2.0) * dims[0]
                objs.append(SceneObject(id=oid, dims=dims, position=(x, 0.0, z), yaw=0.0))
                oid += 1
        return settle(Scene(objects=tuple(objs), seed=seed))
    raise ValueError(f"unknown scenario kind: {kind!r}")


def occluders_of(scene: Scene, object_id: int) -> list[int]:
    """Ids of objects above the given one whose footprints overlap it."""
    target = scene.get(object_id)
    corners_t = target.footprint_corners()
    out = []
    for o in scene.objects:
        if o.id == object_id:
            continue
        if o.position[2] <= target.position[2] + 1e-9:
            continue
        if geometry.rects_overlap(corners_t, o.footprint_corners()):
            out.append(o.id)
    return out


def is_occluded(scene: Scene, object_id: int) -> bool:
    return bool(occluders_of(scene, object_id))


def select_target(scene: Scene, seed: int) -> int:
    """Pick a retrieval target, preferring occluded objects."""
    if not scene.objects:
        raise ValueError("scene is empty")
    rng = np.random.default_rng(seed)
    occluded = sorted(o.id for o in scene.objects if is_occluded(scene, o.id))
    pool = occluded if occluded else sorted(scene.ids())
    return int(pool[rng.integers(len(pool))])


# ---------------------------------------------------------------------------
# removal and disturbance accounting


def remove_object(
    scene: Scene, object_id: int, tau_move: float = TAU_MOVE_SIM
) -> tuple[Scene, RemovalOutcome]:
    """Delete an object, re-settle, and account for the disturbance."""
    scene.get(object_id)  # raises UnknownIdError
    remaining = tuple(o for o in scene.objects if o.id != object_id)
    pre = {o.id: o.position for o in remaining}
    new_scene = settle(replace(scene, objects=remaining))
    post = new_scene.centroids()
    outcome = RemovalOutcome(
        removed_id=object_id,
        pre_centroids=pre,
        post_centroids=post,
        d_total=disturbance_total(pre, post, object_id),
        objects_moved=objects_moved(pre, post, object_id, tau_move),
    )
    return new_scene, outcome


def _check_maps(pre, post, removed_id) -> None:
    if set(pre) != set(post):
        raise IdMismatchError("pre/post centroid maps cover different ids")
    if removed_id in pre:
        raise IdMismatchError(f"removed id {removed_id} still present in maps")


def disturbance_total(pre, post, removed_id: int) -> float:
    """Sum of Euclidean centroid displacements over the remaining objects."""
    _check_maps(pre, post, removed_id)
    total = 0.0
    for oid, c_pre in pre.items():
        c_post = post[oid]
        total += math.dist(c_pre, c_post)
    return total


def objects_moved(pre, post, removed_id: int, tau_move: float) -> int:
    """Count remaining objects displaced by more than tau_move."""
    if tau_move <= 0.0:
        raise ValueError("tau_move must be positive")
    _check_maps(pre, post, removed_id)
    return sum(1 for oid in pre if math.dist(pre[oid], post[oid]) > tau_move)


# ---------------------------------------------------------------------------
# serialization


def scene_to_dict(scene: Scene) -> dict:
    return {
        "seed": scene.seed,
        "floor_half_extent": scene.floor_half_extent,
        "objects": [
            {
                "id": o.id,
                "dims": list(o.dims),
                "pos": list(o.position),
                "yaw": o.yaw,
                "density": o.density,
            }
            for o in scene.objects
        ],
    }


def scene_from_dict(data: dict) -> Scene:
    objects = tuple(
        SceneObject(
            id=int(rec["id"]),
            dims=tuple(float(v) for v in rec["dims"]),
            position=tuple(float(v) for v in rec["pos"]),
            yaw=float(rec["yaw"]),
            density=float(rec.get("density", DEFAULT_DENSITY)),
        )
        for rec in data["objects"]
    )
    return Scene(
        objects=objects,
        floor_half_extent=float(data.get("floor_half_extent", DEFAULT_FLOOR_HALF_EXTENT)),
        seed=int(data.get("seed", 0)),
    )


def save_scene(scene: Scene, path) -> None:
    with open(path, "w") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)


def load_scene(path) -> Scene:
    with open(path) as fh:
        return scene_from_dict(json.load(fh))
