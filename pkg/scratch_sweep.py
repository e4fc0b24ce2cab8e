"""Sweep training configs; measure ordinal margins. Scratch file, not shipped."""
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
    t0 = time.time()
    summary = hn.run_experiment(SCENARIOS, policies, TRIALS, 1000, params=params)
    print(f"--- {label} (eval {time.time()-t0:.0f}s)")
    ok = True
    for sc in SCENARIOS:
        r = summary.cells[(sc, "random")]
        c = summary.cells[(sc, "conservative")]
        n = summary.cells[(sc, "clutternav")]
        rem_ok = n.mean_removals < c.mean_removals and n.mean_removals < r.mean_removals
        dist_ok = (n.mean_disturbance <= 0.5 * r.mean_disturbance
                   and c.mean_disturbance <= r.mean_disturbance)
        red = 1 - n.mean_removals / r.mean_removals
        ok &= rem_ok and dist_ok
        print(f"  {sc:8s} rem r/c/n {r.mean_removals:5.2f}/{c.mean_removals:5.2f}/{n.mean_removals:5.2f} "
              f"red {red*100:4.1f}%  dist r/c/n {r.mean_disturbance:.3f}/{c.mean_disturbance:.3f}/{n.mean_disturbance:.3f} "
              f"{'OK' if rem_ok and dist_ok else 'FAIL'}")
    return ok


def run(label, demos="random", wd=0.0, lr=1e-3, n_trans=4000):
    t0 = time.time()
    if demos == "random":
        buf = cr.collect_demonstrations(cr.default_scene_factory, None, n_trans,
                                        epsilon=1.0, seed=0)
    else:
        buf = cr.collect_demonstrations(cr.default_scene_factory, None, n_trans // 2,
                                        epsilon=1.0, seed=0)
        warm = cr.train_critic(buf, cr.TrainConfig(steps=1000, seed=0, gamma_d=0.0,
                                                   learning_rate=lr, weight_decay=wd))
        buf2 = cr.collect_demonstrations(cr.default_scene_factory, warm.params,
                                         n_trans // 2, epsilon=0.3, seed=1)
        for t in buf2._items:
            buf.push(t)
    cfg = cr.TrainConfig(steps=3000, seed=0, gamma_d=0.0, learning_rate=lr, weight_decay=wd)
    res = cr.train_critic(buf, cfg)
    ratio = res.losses[-100:].mean() / res.losses[:100].mean()
    print(f"{label}: collect+train {time.time()-t0:.0f}s  loss ratio {ratio:.3f} "
          f"({res.losses[:100].mean():.4f} -> {res.losses[-100:].mean():.4f})")
    evaluate(res.params, label)


if __name__ == "__main__":
    run("A wd=0      random4k", demos="random", wd=0.0)
    run("B wd=1e-4   random4k", demos="random", wd=1e-4)
    run("C wd=1e-3   random4k", demos="random", wd=1e-3)
    run("D wd=1e-4   tworound", demos="tworound", wd=1e-4)
