"""Gradient-guided sequential object removal for buried-target retrieval.

Pipeline: a deterministic quasi-static cuboid simulator generates and
settles clutter; a synthetic top-down depth render feeds a geometric
segmentation pipeline (or a ground-truth bypass); per-object features
become a padded state matrix; a small MLP critic learned from
demonstrations scores removability; integrated-gradient influence maps
steer removals toward the target.
"""
from .attribution import (
    AttributionConfig,
    ImportanceScores,
    baseline_state,
    combined_scores,
    influence_scores,
    path_attribution,
    score_objects,
    spatial_decay,
)
from .constants import FEATURE_DIM, N_MAX
from .critic import (
    CriticParams,
    ReplayBuffer,
    TrainConfig,
    Transition,
    collect_demonstrations,
    init_critic,
    input_gradient,
    load_checkpoint,
    q_all,
    q_forward,
    reward,
    save_checkpoint,
    td_target,
    train_critic,
)
from .features import (
    FeatureRow,
    StateMatrix,
    assemble_state,
    extract_features,
    normalize_per_scene,
    pad_state,
)
from .harness import (
    EpisodeConfig,
    EpisodeLog,
    ExperimentSummary,
    PolicySpec,
    export_results,
    policy_clutternav,
    policy_conservative,
    policy_random,
    run_episode,
    run_experiment,
)
from .perception import (
    ObservedObject,
    PointCloud,
    estimate_normals,
    fit_aabb,
    observe_ground_truth,
    region_grow,
    render_point_cloud,
    segment_scene,
)
from .sim import (
    RemovalOutcome,
    Scene,
    SceneObject,
    build_scenario,
    disturbance_total,
    is_occluded,
    objects_moved,
    remove_object,
    select_target,
    settle,
    spawn_layered_clutter,
)

__version__ = "0.1.0"
