"""Command line front end.

Subcommands:
  gen        scenario -> scene JSON
  segment    scene JSON or XYZ cloud -> observed-object JSON
  train      collect demonstrations, fit the critic, save a checkpoint
  eval       run policy/scenario trials, write a summary table
  attribute  per-step Q/G/S score log for one retrieval episode
"""
from __future__ import annotations

import argparse
import csv
import sys

from . import critic, harness, perception, sim
from .attribution import AttributionConfig


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output file path")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="clutternav")
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("gen", help="generate a scenario scene")
    p_gen.add_argument("--scenario", choices=sim.SCENARIO_KINDS, default="clutter")
    _add_common(p_gen)

    p_seg = sub.add_parser("segment", help="segment a scene render or XYZ cloud")
    p_seg.add_argument("--in", dest="input", required=True,
                       help="scene .json (rendered internally) or point cloud .xyz")
    p_seg.add_argument("--camera-height", type=float,
                       default=perception.DEFAULT_CAMERA_HEIGHT)
    p_seg.add_argument("--resolution", type=float,
                       default=perception.DEFAULT_RESOLUTION,
                       help="render sampling density, points per m^2")
    _add_common(p_seg)

    p_train = sub.add_parser("train", help="train the removability critic")
    p_train.add_argument("--steps", type=int, default=3000)
    p_train.add_argument("--batch", type=int, default=64)
    p_train.add_argument("--lr", type=float, default=3e-4)
    p_train.add_argument("--gamma-d", type=float, default=0.9)
    p_train.add_argument("--epsilon", type=float, default=0.3)
    p_train.add_argument("--transitions", type=int, default=4000,
                         help="demonstration transitions to collect")
    p_train.add_argument("--loss-out", default=None, help="optional loss history CSV")
    _add_common(p_train)

    p_eval = sub.add_parser("eval", help="run scenario/policy trials")
    p_eval.add_argument("--checkpoint", default=None)
    p_eval.add_argument("--scenario", action="append", choices=sim.SCENARIO_KINDS,
                        default=None, help="repeatable; default all")
    p_eval.add_argument("--policy", action="append", choices=harness.POLICY_KINDS,
                        default=None, help="repeatable; default all")
    p_eval.add_argument("--trials", type=int, default=100)
    p_eval.add_argument("--perception", choices=("gt", "pipeline"), default="gt")
    p_eval.add_argument("--tau-move", type=float, default=sim.TAU_MOVE_REPORT)
    p_eval.add_argument("--k-samples", type=int, default=5)
    p_eval.add_argument("--lambda", dest="decay", type=float, default=2.0)
    p_eval.add_argument("--episodes-out", default=None,
                        help="optional per-step score CSV for all episodes")
    _add_common(p_eval)

    p_attr = sub.add_parser("attribute", help="score one retrieval episode")
    p_attr.add_argument("--checkpoint", required=True)
    p_attr.add_argument("--scene", required=True, help="scene JSON path")
    p_attr.add_argument("--target", default="auto",
                        help="target object id, or 'auto' to pick one")
    p_attr.add_argument("--k-samples", type=int, default=5)
    p_attr.add_argument("--lambda", dest="decay", type=float, default=2.0)
    _add_common(p_attr)

    return parser


def _cmd_gen(args) -> int:
    scene = sim.build_scenario(args.scenario, args.seed)
    sim.save_scene(scene, args.out)
    print(f"wrote {args.scenario} scene ({len(scene.objects)} objects) to {args.out}")
    return 0


def _cmd_segment(args) -> int:
    if args.input.endswith(".json"):
        scene = sim.load_scene(args.input)
        cloud = perception.render_point_cloud(scene, args.camera_height, args.resolution)
    else:
        cloud = perception.load_xyz(args.input)
    observed = perception.segment_scene(cloud)
    perception.save_observed(observed, args.out)
    print(f"segmented {len(observed)} objects from {len(cloud)} points -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    config = critic.TrainConfig(
        steps=args.steps,
        batch=args.batch,
        learning_rate=args.lr,
        gamma_d=args.gamma_d,
        epsilon=args.epsilon,
        seed=args.seed,
    )
    buffer = critic.collect_demonstrations(
        critic.default_scene_factory,
        params=None,
        n_transitions=args.transitions,
        epsilon=config.epsilon,
        seed=args.seed,
        capacity=config.buffer_capacity,
        gamma_w=config.gamma_w,
        tau_move=config.tau_move,
    )
    result = critic.train_critic(buffer, config)
    critic.save_checkpoint(result.params, args.out)
    if args.loss_out:
        with open(args.loss_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("step", "td_loss"))
            for i, loss in enumerate(result.losses):
                writer.writerow((i, f"{loss:.6g}"))
    first = result.losses[:100].mean()
    last = result.losses[-100:].mean()
    print(
        f"trained {config.steps} steps on {len(buffer)} transitions; "
        f"TD loss {first:.4g} -> {last:.4g}; checkpoint -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    scenarios = args.scenario or list(sim.SCENARIO_KINDS)
    kinds = args.policy or list(harness.POLICY_KINDS)
    params = critic.load_checkpoint(args.checkpoint) if args.checkpoint else None
    if params is None and any(k != "random" for k in kinds):
        print("error: --checkpoint required for non-random policies", file=sys.stderr)
        return 2
    attr_cfg = AttributionConfig(k_samples=args.k_samples, decay=args.decay, seed=args.seed)
    policies = [harness.PolicySpec(kind=k, seed=args.seed, attribution=attr_cfg)
                for k in kinds]
    cfg = harness.EpisodeConfig(perception=args.perception, tau_move=args.tau_move)
    summary = harness.run_experiment(
        scenarios, policies, args.trials, args.seed, params=params, cfg=cfg,
        keep_logs=args.episodes_out is not None,
    )
    fmt = "json" if args.out.endswith(".json") else "csv"
    harness.export_results(summary, args.out, fmt=fmt)
    if args.episodes_out:
        all_logs = [log for logs in summary.logs.values() for log in logs]
        harness.export_results(all_logs, args.episodes_out, fmt="csv")
    for (scenario, policy), cell in sorted(summary.cells.items()):
        print(
            f"{scenario:8s} {policy:12s} removals {cell.mean_removals:6.2f} "
            f"+/- {cell.std_removals:5.2f}  disturbance {cell.mean_disturbance:8.4f} "
            f"+/- {cell.std_disturbance:7.4f}  (n={cell.n_trials})"
        )
    print(f"summary -> {args.out}")
    return 0


def _cmd_attribute(args) -> int:
    params = critic.load_checkpoint(args.checkpoint)
    scene = sim.load_scene(args.scene)
    target = sim.select_target(scene, args.seed) if args.target == "auto" else int(args.target)
    attr_cfg = AttributionConfig(k_samples=args.k_samples, decay=args.decay, seed=args.seed)
    policy = harness.PolicySpec(kind="clutternav", seed=args.seed, attribution=attr_cfg)
    log = harness.run_episode(scene, target, policy, params)
    log.scenario = "custom"
    harness.export_results([log], args.out, fmt="csv")
    print(
        f"episode: target {target}, {log.removals} removals, "
        f"disturbance {log.total_disturbance:.4f} -> {args.out}"
    )
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "segment": _cmd_segment,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "attribute": _cmd_attribute,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
