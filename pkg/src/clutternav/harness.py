"""Episode loop, baseline policies, experiments, and result export.

An episode repeatedly observes the scene (ground-truth bypass or the
full perception pipeline), builds the padded state, asks a policy for a
row, removes the mapped object, and logs scores and disturbance. The
target is always a selectable candidate; by default the episode ends
when the policy selects it.

Policies see only the state matrix, score vectors, and observed
centroids -- never simulator internals. The harness itself owns the
observation-to-object matching needed to execute removals.
"""
from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import attribution as attr
from . import features as feat
from . import perception, sim
from .attribution import AttributionConfig, ImportanceScores, score_objects
from .constants import N_MAX
from .critic import CriticParams, greedy_action, q_all
from .errors import NoValidRowsError, StateOverflowError
from .features import StateMatrix

POLICY_KINDS = ("random", "conservative", "clutternav")
_POLICY_STREAM = {"random": 11, "conservative": 12, "clutternav": 13}
MATCH_TOL = 0.05  # meters; observation-to-object association gate
THREADS_ENV = "CLUTTERNAV_THREADS"


@dataclass(frozen=True)
class PolicySpec:
    """Which decision rule to run, plus its kind-specific knobs."""

    kind: str
    seed: int = 0
    attribution: AttributionConfig | None = None

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "clutternav" and self.attribution is None:
            object.__setattr__(self, "attribution", AttributionConfig())


_DEFAULT_CAMERA_HEIGHT = perception.DEFAULT_CAMERA_HEIGHT
_DEFAULT_RESOLUTION = perception.DEFAULT_RESOLUTION


@dataclass(frozen=True)
class EpisodeConfig:
    """Per-episode observation and termination settings."""

    perception: str = "gt"  # "gt" or "pipeline"
    tau_move: float = sim.TAU_MOVE_REPORT  # reporting threshold for moved counts
    termination: str = "selection"  # "selection" or "exposure"
    camera_height: float = _DEFAULT_CAMERA_HEIGHT
    resolution: float = _DEFAULT_RESOLUTION

    def __post_init__(self):
        if self.perception not in ("gt", "pipeline"):
            raise ValueError("perception must be 'gt' or 'pipeline'")
        if self.termination not in ("selection", "exposure"):
            raise ValueError("termination must be 'selection' or 'exposure'")


@dataclass
class StepRecord:
    """One removal: candidate ids with their scores, and what it cost."""

    chosen_id: int
    object_ids: list[int]
    q_scores: list[float] | None
    influences: list[float] | None
    combined: list[float] | None
    d_total: float
    objects_moved: int


@dataclass
class EpisodeLog:
    scenario: str
    seed: int
    target_id: int
    steps: list[StepRecord] = field(default_factory=list)
    removals: int = 0
    total_disturbance: float = 0.0
    success: bool = False
    target_removed: bool = False


@dataclass(frozen=True)
class SummaryCell:
    mean_removals: float
    std_removals: float
    mean_disturbance: float
    std_disturbance: float
    n_trials: int
    failures: int


@dataclass
class ExperimentSummary:
    cells: dict[tuple[str, str], SummaryCell]
    logs: dict[tuple[str, str], list[EpisodeLog]] | None = None


# ---------------------------------------------------------------------------
# policies


def policy_random(state: StateMatrix, rng) -> int:
    """Uniform choice over the valid rows."""
    valid = state.valid_rows()
    if len(valid) == 0:
        raise NoValidRowsError("no valid rows to choose from")
    gen = np.random.default_rng(rng)
    return int(valid[gen.integers(len(valid))])


def policy_conservative(params: CriticParams, state: StateMatrix) -> int:
    """Remove whatever looks safest: argmax removability, target-blind."""
    return greedy_action(params, state)


def clutternav_choice(scores: ImportanceScores, id_map: dict[int, int]) -> int:
    """Argmax of the combined score; ties go to the lowest object id."""
    best = scores.combined.max()
    tied = [int(scores.rows[i]) for i in np.flatnonzero(scores.combined == best)]
    return min(tied, key=lambda r: id_map[r])


def policy_clutternav(
    params: CriticParams,
    state: StateMatrix,
    target_row: int,
    cfg: AttributionConfig,
    positions: np.ndarray,
) -> int:
    """Argmax of removability + influence; the target is a candidate too."""
    scores = score_objects(params, state, target_row, cfg, positions)
    return clutternav_choice(scores, state.id_map)


# ---------------------------------------------------------------------------
# observation plumbing


def match_observed_to_scene(
    observed: list[perception.ObservedObject], scene: sim.Scene, tol: float = MATCH_TOL
) -> tuple[list[perception.ObservedObject], list[int]]:
    """Greedy nearest-centroid association of observations to object ids.

    Observations with no scene object within tol are dropped (phantom
    detections cannot be executed).
    """
    if not observed or not scene.objects:
        return [], []
    obs_pts = np.array([o.centroid for o in observed])
    scn = list(scene.objects)
    scn_pts = np.array([o.position for o in scn])
    dist = np.linalg.norm(obs_pts[:, None, :] - scn_pts[None, :, :], axis=2)
    matched: list[tuple[int, int]] = []
    while True:
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if not np.isfinite(dist[i, j]) or dist[i, j] > tol:
            break
        matched.append((int(i), scn[int(j)].id))
        dist[i, :] = np.inf
        dist[:, j] = np.inf
        if len(matched) == min(len(observed), len(scn)):
            break
    matched.sort(key=lambda pair: pair[1])
    return [observed[i] for i, _ in matched], [oid for _, oid in matched]


class _Observer:
    """Stable row bookkeeping across an episode, both perception modes."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.row_map: dict[int, int] = {}

    def observe(self, scene: sim.Scene) -> tuple[StateMatrix, np.ndarray]:
        if self.cfg.perception == "gt":
            observed, ids = perception.observe_ground_truth(scene)
        else:
            cloud = perception.render_point_cloud(
                scene, self.cfg.camera_height, self.cfg.resolution
            )
            observed, ids = match_observed_to_scene(
                perception.segment_scene(cloud), scene
            )
        for oid in ids:
            if oid not in self.row_map:
                if len(self.row_map) >= N_MAX:
                    raise StateOverflowError("more observed objects than state rows")
                self.row_map[oid] = len(self.row_map)
        if not ids:
            return feat.empty_state(), np.zeros((N_MAX, 3))
        state = feat.assemble_state(observed, ids, self.row_map)
        positions = np.zeros((N_MAX, 3))
        for obs, oid in zip(observed, ids):
            positions[self.row_map[oid]] = obs.centroid
        return state, positions


# ---------------------------------------------------------------------------
# episodes


def run_episode(
    scene: sim.Scene,
    target_id: int,
    policy: PolicySpec,
    params: CriticParams | None,
    cfg: EpisodeConfig = EpisodeConfig(),
) -> EpisodeLog:
    """Remove objects until the target is retrieved or the step cap hits.

    The cap equals the initial object count. When the perception pipeline
    has not seen the target yet, the clutternav policy falls back to the
    conservative choice until it appears.
    """
    scene.get(target_id)  # raises UnknownIdError
    if policy.kind != "random" and params is None:
        raise ValueError(f"policy {policy.kind!r} needs trained critic params")

    log = EpisodeLog(scenario="", seed=policy.seed, target_id=target_id)
    rng = np.random.default_rng(np.random.SeedSequence((policy.seed, _POLICY_STREAM[policy.kind])))
    observer = _Observer(cfg)
    cap = len(scene.objects)
    state, positions = observer.observe(scene)

    while True:
        if cfg.termination == "exposure" and not sim.is_occluded(scene, target_id):
            log.success = True
            break
        if len(log.steps) >= cap or not scene.objects:
            break
        valid = state.valid_rows()
        if len(valid) == 0:
            break  # nothing observable; cannot act

        target_row = observer.row_map.get(target_id)
        target_visible = target_row is not None and bool(state.mask[target_row])
        scores: ImportanceScores | None = None
        q_vec: list[float] | None = None

        if policy.kind == "random":
            row = int(valid[rng.integers(len(valid))])
        elif policy.kind == "conservative":
            q_vec = [float(v) for v in q_all(params, state)]
            row = greedy_action(params, state)
        else:  # clutternav
            if target_visible:
                scores = score_objects(
                    params, state, int(target_row), policy.attribution, positions
                )
                q_vec = [float(v) for v in scores.q_scores]
                row = clutternav_choice(scores, state.id_map)
            else:
                q_vec = [float(v) for v in q_all(params, state)]
                row = greedy_action(params, state)

        chosen_id = state.id_map[row]
        scene, outcome = sim.remove_object(scene, chosen_id, tau_move=sim.TAU_MOVE_SIM)
        moved = sim.objects_moved(
            outcome.pre_centroids, outcome.post_centroids, chosen_id, cfg.tau_move
        )
        log.steps.append(
            StepRecord(
                chosen_id=chosen_id,
                object_ids=[state.id_map[int(r)] for r in valid],
                q_scores=q_vec,
                influences=None if scores is None else [float(v) for v in scores.influences],
                combined=None if scores is None else [float(v) for v in scores.combined],
                d_total=outcome.d_total,
                objects_moved=moved,
            )
        )
        if chosen_id == target_id:
            log.success = True
            log.target_removed = True
            break
        if scene.objects:
            state, positions = observer.observe(scene)
        else:
            break

    log.removals = len(log.steps)
    log.total_disturbance = sum(s.d_total for s in log.steps)
    return log


# ---------------------------------------------------------------------------
# experiments


def _trial_seeds(seeds, n_trials: int) -> list[int]:
    if isinstance(seeds, (int, np.integer)):
        return [int(seeds) + i for i in range(n_trials)]
    seeds = [int(s) for s in seeds]
    if len(seeds) < n_trials:
        raise ValueError(f"need {n_trials} seeds, got {len(seeds)}")
    return seeds[:n_trials]


def run_experiment(
    scenarios,
    policies: list[PolicySpec],
    n_trials: int,
    seeds,
    params: CriticParams | None = None,
    cfg: EpisodeConfig = EpisodeConfig(),
    keep_logs: bool = False,
) -> ExperimentSummary:
    """Seeded trial grid: same scene and target across policies per trial.

    Worker count is capped by the CLUTTERNAV_THREADS env var (default 1,
    serial). Aggregation is order-independent: results land in
    per-trial slots and summaries are sorted on export.
    """
    scenarios = list(scenarios)
    trial_seeds = _trial_seeds(seeds, n_trials)
    tasks = []
    for scenario in scenarios:
        for trial, tseed in enumerate(trial_seeds):
            tasks.append((scenario, trial, tseed))

    results: dict[tuple[str, str], list[EpisodeLog | None]] = {
        (sc, p.kind): [None] * n_trials for sc in scenarios for p in policies
    }

    def run_trial(task):
        scenario, trial, tseed = task
        scene = sim.build_scenario(scenario, tseed)
        target = sim.select_target(scene, tseed)
        out = []
        for spec in policies:
            per_policy = PolicySpec(
                kind=spec.kind, seed=tseed, attribution=spec.attribution
            )
            log = run_episode(scene, target, per_policy, params, cfg)
            log.scenario = scenario
            log.seed = tseed
            out.append((spec.kind, trial, log))
        return scenario, out

    workers = int(os.environ.get(THREADS_ENV, "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            finished = list(pool.map(run_trial, tasks))
    else:
        finished = [run_trial(t) for t in tasks]

    for scenario, out in finished:
        for kind, trial, log in out:
            results[(scenario, kind)][trial] = log

    cells = {}
    logs = {}
    for key, trial_logs in results.items():
        assert all(t is not None for t in trial_logs)
        removals = np.array([t.removals for t in trial_logs], dtype=float)
        dists = np.array([t.total_disturbance for t in trial_logs], dtype=float)
        cells[key] = SummaryCell(
            mean_removals=float(removals.mean()),
            std_removals=float(removals.std()),
            mean_disturbance=float(dists.mean()),
            std_disturbance=float(dists.std()),
            n_trials=n_trials,
            failures=sum(1 for t in trial_logs if not t.success),
        )
        if keep_logs:
            logs[key] = list(trial_logs)
    return ExperimentSummary(cells=cells, logs=logs if keep_logs else None)


# ---------------------------------------------------------------------------
# export

SUMMARY_COLUMNS = (
    "scenario",
    "policy",
    "mean_removals",
    "std_removals",
    "mean_disturbance",
    "std_disturbance",
    "n_trials",
    "failures",
)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def summary_to_dict(summary: ExperimentSummary) -> dict:
    cells = []
    for (scenario, policy), cell in sorted(summary.cells.items()):
        cells.append(
            {
                "scenario": scenario,
                "policy": policy,
                "mean_removals": float(_fmt(cell.mean_removals)),
                "std_removals": float(_fmt(cell.std_removals)),
                "mean_disturbance": float(_fmt(cell.mean_disturbance)),
                "std_disturbance": float(_fmt(cell.std_disturbance)),
                "n_trials": cell.n_trials,
                "failures": cell.failures,
            }
        )
    return {"schema": "clutternav-summary-v1", "cells": cells}


def summary_from_dict(data: dict) -> ExperimentSummary:
    if data.get("schema") != "clutternav-summary-v1":
        raise ValueError("not a summary document")
    cells = {}
    for rec in data["cells"]:
        cells[(rec["scenario"], rec["policy"])] = SummaryCell(
            mean_removals=rec["mean_removals"],
            std_removals=rec["std_removals"],
            mean_disturbance=rec["mean_disturbance"],
            std_disturbance=rec["std_disturbance"],
            n_trials=rec["n_trials"],
            failures=rec["failures"],
        )
    return ExperimentSummary(cells=cells)


def episode_step_records(logs: list[EpisodeLog]):
    """Flatten logs into the per-step score CSV schema."""
    for log in logs:
        for step_idx, step in enumerate(log.steps):
            for j, oid in enumerate(step.object_ids):
                yield (
                    step_idx,
                    oid,
                    None if step.q_scores is None else step.q_scores[j],
                    None if step.influences is None else step.influences[j],
                    None if step.combined is None else step.combined[j],
                    oid == log.target_id,
                    oid == step.chosen_id,
                )


def export_results(obj, path, fmt: str = "csv") -> None:
    """Write a summary table or per-step episode logs to disk.

    Summaries go to CSV (stable column order) or JSON (round-trippable
    schema); episode logs go to the per-step score CSV or a structured
    JSON dump.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    if isinstance(obj, ExperimentSummary):
        if fmt == "json":
            with open(path, "w") as fh:
                json.dump(summary_to_dict(obj), fh, indent=2)
            return
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            for (scenario, policy), cell in sorted(obj.cells.items()):
                writer.writerow(
                    [
                        scenario,
                        policy,
                        _fmt(cell.mean_removals),
                        _fmt(cell.std_removals),
                        _fmt(cell.mean_disturbance),
                        _fmt(cell.std_disturbance),
                        cell.n_trials,
                        cell.failures,
                    ]
                )
        return

    logs = [obj] if isinstance(obj, EpisodeLog) else list(obj)
    if fmt == "csv":
        attr.write_scores_csv(episode_step_records(logs), path)
        return
    payload = [
        {
            "scenario": log.scenario,
            "seed": log.seed,
            "target_id": log.target_id,
            "removals": log.removals,
            "total_disturbance": float(_fmt(log.total_disturbance)),
            "success": log.success,
            "steps": [
                {
                    "chosen_id": s.chosen_id,
                    "object_ids": s.object_ids,
                    "q_scores": s.q_scores,
                    "influences": s.influences,
                    "combined": s.combined,
                    "d_total": float(_fmt(s.d_total)),
                    "objects_moved": s.objects_moved,
                }
                for s in log.steps
            ],
        }
        for log in logs
    ]
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
