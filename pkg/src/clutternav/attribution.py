"""Gradient-guided object importance.

For a chosen target, each object's influence is a path-integrated
gradient: interpolate that object's feature row from a zeroed baseline
back to its actual value, average the target-Q gradient along the path,
and take the dot product with the row. A spatial decay factor then
down-weights objects far from the target. The decision score adds
min-max normalized removability to min-max normalized influence
magnitude, weighted 1:1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .critic import CriticParams, input_gradient, q_all
from .errors import LengthMismatchError, MaskedRowError, MaskedTargetError
from .features import StateMatrix

QUADRATURES = ("monte_carlo", "riemann")


@dataclass(frozen=True)
class AttributionConfig:
    """Path-integration sample count, decay rate (1/m), and quadrature."""

    k_samples: int = 5
    decay: float = 2.0
    seed: int = 0
    quadrature: str = "monte_carlo"

    def __post_init__(self):
        if self.k_samples < 1:
            raise ValueError("k_samples must be >= 1")
        if self.decay < 0.0:
            raise ValueError("decay must be >= 0")
        if self.quadrature not in QUADRATURES:
            raise ValueError(f"quadrature must be one of {QUADRATURES}")


@dataclass(frozen=True)
class ImportanceScores:
    """Per-valid-row score triple; rows gives the row index alignment."""

    rows: np.ndarray
    q_scores: np.ndarray
    influences: np.ndarray
    combined: np.ndarray
    target_row: int


def baseline_state(state: StateMatrix, obj_row: int) -> StateMatrix:
    """Counterfactual with one object's features zeroed; mask unchanged."""
    if not 0 <= obj_row < len(state.mask) or not state.mask[obj_row]:
        raise MaskedRowError(f"row {obj_row} is masked or out of range")
    rows = state.rows.copy()
    rows[obj_row] = 0.0
    return replace(state, rows=rows)


def _alphas(cfg: AttributionConfig, obj_row: int) -> np.ndarray:
    if cfg.quadrature == "riemann":
        return (np.arange(cfg.k_samples) + 0.5) / cfg.k_samples
    rng = np.random.default_rng(cfg.seed ^ obj_row)
    return rng.uniform(0.0, 1.0, size=cfg.k_samples)


def path_attribution(
    params: CriticParams,
    state: StateMatrix,
    target_row: int,
    obj_row: int,
    cfg: AttributionConfig,
) -> float:
    """Mean path gradient of the target's Q dotted with the object's row.

    Interpolation points scale only the object's own row (the baseline
    differs from the state in that row alone), so for an affine critic
    the result is exact for any sample count.
    """
    if not state.mask[target_row]:
        raise MaskedRowError(f"target row {target_row} is masked")
    base = baseline_state(state, obj_row)
    delta = state.rows[obj_row].copy()
    total = 0.0
    for alpha in _alphas(cfg, obj_row):
        rows_k = base.rows.copy()
        rows_k[obj_row] = alpha * delta
        state_k = replace(state, rows=rows_k)
        grad_row = input_gradient(params, state_k, target_row)[obj_row]
        total += float(grad_row @ delta)
    return total / cfg.k_samples


def spatial_decay(p_i, p_t, decay: float) -> float:
    """Exponential down-weighting by metric distance to the target."""
    if decay < 0.0:
        raise ValueError("decay must be >= 0")
    return math.exp(-decay * math.dist(tuple(p_i), tuple(p_t)))


def influence_scores(
    params: CriticParams,
    state: StateMatrix,
    target_row: int,
    cfg: AttributionConfig,
    positions: np.ndarray,
) -> np.ndarray:
    """Decayed path attributions for every valid row, target included.

    positions is (N_MAX, 3) of raw metric centroids indexed by row; only
    valid rows are read. Output aligns with state.valid_rows().
    """
    if not 0 <= target_row < len(state.mask) or not state.mask[target_row]:
        raise MaskedTargetError(f"target row {target_row} is masked")
    positions = np.asarray(positions, dtype=float)
    p_t = positions[target_row]
    out = []
    for row in state.valid_rows():
        row = int(row)
        decay = spatial_decay(positions[row], p_t, cfg.decay)
        out.append(decay * path_attribution(params, state, target_row, row, cfg))
    return np.array(out)


def _minmax(values: np.ndarray) -> np.ndarray:
    lo = values.min()
    hi = values.max()
    if hi - lo <= 0.0:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def combined_scores(q_scores: np.ndarray, influences: np.ndarray) -> np.ndarray:
    """Normalized removability plus normalized influence magnitude (1:1).

    Constant vectors contribute zero, so degenerate terms never swamp
    the other.
    """
    q_scores = np.asarray(q_scores, dtype=float)
    influences = np.asarray(influences, dtype=float)
    if q_scores.shape != influences.shape:
        raise LengthMismatchError(
            f"q_scores {q_scores.shape} vs influences {influences.shape}"
        )
    if q_scores.size < 1:
        raise LengthMismatchError("score vectors must be non-empty")
    return _minmax(q_scores) + _minmax(np.abs(influences))


def score_objects(
    params: CriticParams,
    state: StateMatrix,
    target_row: int,
    cfg: AttributionConfig,
    positions: np.ndarray,
) -> ImportanceScores:
    """Removability, influence, and combined scores in one pass."""
    q = q_all(params, state)
    g = influence_scores(params, state, target_row, cfg, positions)
    return ImportanceScores(
        rows=state.valid_rows().copy(),
        q_scores=q,
        influences=g,
        combined=combined_scores(q, g),
        target_row=target_row,
    )


SCORES_CSV_HEADER = ("step", "object_id", "Q_i", "G_i", "S_i", "is_target", "chosen")


def write_scores_csv(records, path) -> None:
    """Dump per-step score records; one line per (step, object).

    records: iterable of (step, object_id, q, g, s, is_target, chosen)
    tuples; score entries may be None for policies that never computed
    them.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCORES_CSV_HEADER)
        for step, oid, q, g, s, is_target, chosen in records:
            writer.writerow(
                [
                    step,
                    oid,
                    "" if q is None else f"{q:.6g}",
                    "" if g is None else f"{g:.6g}",
                    "" if s is None else f"{s:.6g}",
                    int(is_target),
                    int(chosen),
                ]
            )
