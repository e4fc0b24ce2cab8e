"""Third sweep: lr and demo pile density, plus gradient SNR diagnostics."""
import time

import numpy as np

from clutternav import critic as cr
from clutternav import features as ft
from clutternav import harness as hn
from clutternav import perception as pc
from clutternav import sim
from clutternav.attribution import AttributionConfig, score_objects

TRIALS = 50
SCENARIOS = ["clutter", "wall", "pyramid"]


def mixed_factory(seed):
    rng = np.random.default_rng(seed)
    layers = int(rng.integers(2, 6))
    return sim.spawn_layered_clutter(seed, n_objects=30, layers=layers)


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


def diagnostics(params, label):
    # Q vs realized damage, and occluder-gradient SNR.
    qs, damages = [], []
    occ_mags, non_mags = [], []
    for s in range(40):
        scene = sim.build_scenario("clutter", 5000 + s)
        target = sim.select_target(scene, 5000 + s)
        row_map = {oid: i for i, oid in enumerate(sorted(scene.ids()))}
        obs, ids = pc.observe_ground_truth(scene)
        state = ft.assemble_state(obs, ids, row_map)
        positions = np.zeros((40, 3))
        for o, oid in zip(obs, ids):
            positions[row_map[oid]] = o.centroid
        if s < 15:
            for oid in sorted(scene.ids())[:10]:
                q = cr.q_forward(params, state, row_map[oid])
                _, out = sim.remove_object(scene, oid)
                qs.append(q)
                damages.append(-(out.objects_moved + 0.1 * out.d_total))
        occl = set(sim.occluders_of(scene, target))
        if not occl:
            continue
        scores = score_objects(params, state, row_map[target],
                               AttributionConfig(), positions)
        tpos = np.array(scene.get(target).position)
        for k, row in enumerate(scores.rows):
            oid = state.id_map[int(row)]
            if oid == target:
                continue
            d = np.linalg.norm(np.array(scene.get(oid).position) - tpos)
            if oid in occl:
                occ_mags.append(abs(scores.influences[k]))
            elif d < 0.2:
                non_mags.append(abs(scores.influences[k]))
    rho = np.corrcoef(qs, damages)[0, 1]
    print(f"  [{label}] Q-vs-damage corr {rho:.3f}; "
          f"|G| occluders {np.mean(occ_mags):.4f} vs nearby non {np.mean(non_mags):.4f} "
          f"(SNR {np.mean(occ_mags)/max(np.mean(non_mags),1e-12):.2f})")


def run(label, lr, factory, n_trans=4000, diag=False):
    t0 = time.time()
    buf = cr.collect_demonstrations(factory, None, n_trans, epsilon=1.0, seed=0)
    cfg = cr.TrainConfig(steps=3000, seed=0, gamma_d=0.0, learning_rate=lr)
    res = cr.train_critic(buf, cfg)
    ratio = res.losses[-100:].mean() / res.losses[:100].mean()
    print(f"{label}: {time.time()-t0:.0f}s loss ratio {ratio:.3f} "
          f"({res.losses[:100].mean():.4f} -> {res.losses[-100:].mean():.4f})")
    if diag:
        diagnostics(res.params, label)
    evaluate(res.params, label)


if __name__ == "__main__":
    run("H lr2e-3 plain ", 2e-3, cr.default_scene_factory, diag=True)
    run("I lr1e-3 mixed ", 1e-3, mixed_factory, diag=True)
    run("J lr2e-3 mixed ", 2e-3, mixed_factory, diag=True)
