"""Second sweep: demo volume and discount. Scratch file, not shipped."""
import time

import numpy as np

from clutternav import critic as cr
from clutternav import harness as hn
from clutternav.attribution import AttributionConfig

TRIALS = 50
SCENARIOS = ["clutter", "wall", "pyramid"]


def evaluate(params, label):
    attr = AttributionConfig()
    policies = [hn.PolicySpec(kind=k, attribution=attr)
                for k in ("random", "conservative", "clutternav")]
    summary = hn.run_experiment(SCENARIOS, policies, TRIALS, 1000, params=params)
    print(f"--- {label}")
    for sc in SCENARIOS:
        r = summary.cells[(sc, "random")]
        c = summary.cells[(sc, "conservative")]
        n = summary.cells[(sc, "clutternav")]
        rem_ok = n.mean_removals < c.mean_removals and n.mean_removals < r.mean_removals
        dist_ok = (n.mean_disturbance <= 0.5 * r.mean_disturbance
                   and c.mean_disturbance <= r.mean_disturbance)
        red = 1 - n.mean_removals / r.mean_removals
        print(f"  {sc:8s} rem r/c/n {r.mean_removals:5.2f}/{c.mean_removals:5.2f}/{n.mean_removals:5.2f} "
              f"red {red*100:4.1f}%  dist r/c/n {r.mean_disturbance:.3f}/{c.mean_disturbance:.3f}/{n.mean_disturbance:.3f} "
              f"{'OK' if rem_ok and dist_ok else 'FAIL'}")


def run(label, gamma_d, lr, n_trans):
    t0 = time.time()
    buf = cr.collect_demonstrations(cr.default_scene_factory, None, n_trans,
                                    epsilon=1.0, seed=0)
    cfg = cr.TrainConfig(steps=3000, seed=0, gamma_d=gamma_d, learning_rate=lr)
    res = cr.train_critic(buf, cfg)
    ratio = res.losses[-100:].mean() / res.losses[:100].mean()
    print(f"{label}: {time.time()-t0:.0f}s loss ratio {ratio:.3f} "
          f"({res.losses[:100].mean():.4f} -> {res.losses[-100:].mean():.4f})")
    evaluate(res.params, label)


if __name__ == "__main__":
    run("E g0.0 lr1e-3 10k", 0.0, 1e-3, 10_000)
    run("F g0.9 lr1e-3  4k", 0.9, 1e-3, 4_000)
    run("G g0.9 lr1e-3 10k", 0.9, 1e-3, 10_000)
