"""Build the benchmark checkpoints from scratch (about 2 h on a laptop CPU).

Writes into checkpoints/: dp_corridors.ckpt (the main steering policy),
dp_threegoals.ckpt (the multi-goal task-alignment policy), and
vae_corridors.ckpt (the unimodal baseline). Every stage is deterministic;
the .json sidecars record configs, dataset fingerprints, and loss curves.
"""

import time
from collections import Counter
from pathlib import Path

import numpy as np

from mazesteer import diffusion as df
from mazesteer import maze as mz
from mazesteer import nn
from mazesteer import vae as vb

OUT = Path(__file__).resolve().parents[1] / "checkpoints"
OUT.mkdir(exist_ok=True)


def log(msg):
    print(f"[{time.strftime('%H:%M:%S')}] {msg}", flush=True)


def rs_collision_rate(policy, maze, n_conds=20, batch=32, seed0=1000):
    rng = np.random.default_rng(99)
    free = maze.free_cells()
    hits, total = 0, 0
    for i in range(n_conds):
        r, c = free[rng.integers(len(free))]
        trajs = df.sample_unguided(policy, maze.cell_center(r, c), batch=batch, seed=seed0 + i)
        for t in trajs:
            hits += mz.check_collision(mz.clamp_to_workspace(t, maze), maze)
            total += 1
    return hits / total


def main():
    # ---- corridors diffusion policy (the benchmark workhorse)
    corridors = mz.load_builtin_maze("corridors")
    t0 = time.time()
    demos = mz.generate_demos(corridors, num_steps=400_000, seed=0, step_size=0.10,
                              window_stride=8)
    log(f"corridors demos: {len(demos)} windows ({time.time() - t0:.0f}s)")
    policy = df.make_policy(corridors, hidden=(512, 512, 512, 512), seed=10)
    policy, hist = df.train(policy, demos, steps=80_000, seed=11, batch=256, lr=8e-4)
    log(f"corridors DP: loss {hist['loss'][0]:.4f} -> {hist['loss'][-1]:.4f}")
    df.save_policy(
        OUT / "dp_corridors.ckpt",
        policy,
        {
            "dataset": nn.dataset_fingerprint(demos.trajectories),
            "demo_num_steps": 400_000,
            "demo_seed": 0,
            "demo_step_size": 0.10,
            "demo_window_stride": 8,
            "hidden": [512, 512, 512, 512],
            "train_steps": 80_000,
            "train_seed": 11,
            "batch": 256,
            "lr": 8e-4,
            "history": hist,
        },
    )
    log(f"saved dp_corridors.ckpt; RS collision rate "
        f"{rs_collision_rate(policy, corridors):.3f}")

    # ---- threegoals diffusion policy (task-alignment variant)
    tg = mz.load_builtin_maze("threegoals")
    goals = mz.builtin_goals()
    demos_tg = mz.generate_demos(
        tg, num_steps=150_000, seed=2, goals=goals, step_size=0.12,
        window_stride=8, home_cell=mz.BRANCH_CELL,
    )
    log(f"threegoals demos: {len(demos_tg)} windows")
    policy_tg = df.make_policy(tg, seed=12)
    policy_tg, hist_tg = df.train(policy_tg, demos_tg, steps=40_000, seed=13,
                                  batch=256, lr=1e-3)
    log(f"threegoals DP: loss {hist_tg['loss'][0]:.4f} -> {hist_tg['loss'][-1]:.4f}")
    df.save_policy(
        OUT / "dp_threegoals.ckpt",
        policy_tg,
        {
            "dataset": nn.dataset_fingerprint(demos_tg.trajectories),
            "demo_num_steps": 150_000,
            "demo_seed": 2,
            "demo_step_size": 0.12,
            "demo_window_stride": 8,
            "train_steps": 40_000,
            "train_seed": 13,
            "batch": 256,
            "lr": 1e-3,
            "history": hist_tg,
        },
    )
    labels = []
    for i in range(10):
        for t in df.sample_unguided(policy_tg, mz.BRANCH_STATE, batch=32, seed=2000 + i):
            labels.append(mz.task_label(t, goals))
    log(f"saved dp_threegoals.ckpt; branch-state labels {Counter(labels)}")

    # ---- corridors VAE baseline (unimodal by design)
    vae = vb.make_latent_policy(corridors, seed=14)
    vae, hist_v = vb.train_vae(vae, demos, steps=20_000, seed=15, batch=256, lr=1e-3)
    log(f"vae: recon {hist_v['recon'][0]:.4f} -> {hist_v['recon'][-1]:.4f}")
    vb.save_latent_policy(
        OUT / "vae_corridors.ckpt",
        vae,
        {
            "dataset": nn.dataset_fingerprint(demos.trajectories),
            "train_steps": 20_000,
            "train_seed": 15,
            "batch": 256,
            "lr": 1e-3,
            "history": hist_v,
        },
    )
    log("saved vae_corridors.ckpt")
    log("ALL DONE")


if __name__ == "__main__":
    main()
