"""Per-object geometric features and the padded decision state.

Each observable object becomes one row of nine scalars; rows are min-max
normalized per scene (per current state, so statistics refresh after
every removal) and placed at stable indices in an N_MAX x 9 matrix with
a validity mask. Removed or absent objects are zero rows with mask off.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .constants import FEATURE_DIM, N_MAX
from .errors import EmptyListError, StateOverflowError
from .perception import ObservedObject

FEATURE_NAMES = (
    "x",
    "y",
    "z",
    "yaw",
    "vertical_offset",
    "dist_to_centroid",
    "bbox_volume",
    "mean_knn_dist",
    "min_nn_dist",
)

KNN_K = 3


@dataclass(frozen=True)
class FeatureRow:
    """One object's feature vector; see FEATURE_NAMES for the layout."""

    x: float
    y: float
    z: float
    yaw: float
    vertical_offset: float
    dist_to_centroid: float
    bbox_volume: float
    mean_knn_dist: float
    min_nn_dist: float

    def as_array(self) -> np.ndarray:
        return np.array(
            [
                self.x,
                self.y,
                self.z,
                self.yaw,
                self.vertical_offset,
                self.dist_to_centroid,
                self.bbox_volume,
                self.mean_knn_dist,
                self.min_nn_dist,
            ]
        )

    @staticmethod
    def from_array(values) -> "FeatureRow":
        return FeatureRow(*(float(v) for v in values))


@dataclass(frozen=True)
class StateMatrix:
    """Padded, masked feature matrix; id_map sends row index to object id."""

    rows: np.ndarray  # (N_MAX, FEATURE_DIM)
    mask: np.ndarray  # (N_MAX,) bool
    id_map: dict[int, int]

    def valid_rows(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def flat(self) -> np.ndarray:
        return self.rows.reshape(-1)

    def n_valid(self) -> int:
        return int(self.mask.sum())


def extract_features(objects: list[ObservedObject]) -> list[FeatureRow]:
    """Raw (unnormalized) features for every object in the scene."""
    if not objects:
        raise EmptyListError("no objects to featurize")
    n = len(objects)
    centroids = np.array([o.centroid for o in objects], dtype=float)
    scene_min_z = centroids[:, 2].min()
    clutter_centroid = centroids.mean(axis=0)

    k = min(KNN_K, n - 1)
    if k > 0:
        tree = cKDTree(centroids)
        dists, _ = tree.query(centroids, k=k + 1)  # first hit is the point itself
        neighbor_dists = dists[:, 1:]
        mean_knn = neighbor_dists.mean(axis=1)
        min_nn = neighbor_dists[:, 0]
    else:
        mean_knn = np.zeros(n)
        min_nn = np.zeros(n)

    rows = []
    for i, obj in enumerate(objects):
        cx, cy, cz = obj.centroid
        rows.append(
            FeatureRow(
                x=cx,
                y=cy,
                z=cz,
                yaw=obj.yaw,
                vertical_offset=cz - scene_min_z,
                dist_to_centroid=float(np.linalg.norm(centroids[i] - clutter_centroid)),
                bbox_volume=obj.dims[0] * obj.dims[1] * obj.dims[2],
                mean_knn_dist=float(mean_knn[i]),
                min_nn_dist=float(min_nn[i]),
            )
        )
    return rows


def normalize_per_scene(rows: list[FeatureRow]) -> list[FeatureRow]:
    """Column-wise min-max over the given rows; constant columns map to 0."""
    if not rows:
        raise EmptyListError("nothing to normalize")
    mat = np.stack([r.as_array() for r in rows])
    lo = mat.min(axis=0)
    hi = mat.max(axis=0)
    span = hi - lo
    out = np.zeros_like(mat)
    live = span > 0.0
    out[:, live] = (mat[:, live] - lo[live]) / span[live]
    return [FeatureRow.from_array(row) for row in out]


def pad_state(
    rows: list[FeatureRow], ids: list[int], row_map: dict[int, int]
) -> StateMatrix:
    """Place rows at their assigned indices; everything else is zero/masked.

    row_map sends object id to its fixed row index (assigned once, at
    episode start) so a row never moves while the episode runs.
    """
    if len(rows) != len(ids):
        raise ValueError("rows and ids must align")
    if len(rows) > N_MAX:
        raise StateOverflowError(f"{len(rows)} objects exceed capacity {N_MAX}")
    mat = np.zeros((N_MAX, FEATURE_DIM))
    mask = np.zeros(N_MAX, dtype=bool)
    id_map: dict[int, int] = {}
    for row, oid in zip(rows, ids):
        idx = row_map[oid]
        if not 0 <= idx < N_MAX:
            raise StateOverflowError(f"row index {idx} out of range")
        if mask[idx]:
            raise ValueError(f"row index {idx} assigned twice")
        mat[idx] = row.as_array()
        mask[idx] = True
        id_map[idx] = oid
    return StateMatrix(rows=mat, mask=mask, id_map=id_map)


def assemble_state(
    objects: list[ObservedObject], ids: list[int], row_map: dict[int, int]
) -> StateMatrix:
    """extract -> normalize -> pad, the per-step observation pipeline."""
    rows = normalize_per_scene(extract_features(objects))
    return pad_state(rows, ids, row_map)


def empty_state() -> StateMatrix:
    """All-removed state: zero matrix, no valid rows."""
    return StateMatrix(
        rows=np.zeros((N_MAX, FEATURE_DIM)), mask=np.zeros(N_MAX, dtype=bool), id_map={}
    )


def state_to_csv(state: StateMatrix, path) -> None:
    """Debug dump: one line per row index, mask and object id included."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("row", "object_id", "mask") + FEATURE_NAMES)
        for i in range(N_MAX):
            oid = state.id_map.get(i, "")
            writer.writerow(
                [i, oid, int(state.mask[i])] + [f"{v:.6g}" for v in state.rows[i]]
            )
