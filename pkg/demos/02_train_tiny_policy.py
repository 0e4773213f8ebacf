"""Train a small trajectory denoiser end to end (a few minutes on CPU).

This is the full pipeline at toy scale: horizon 16 instead of 64 and a
narrower network. The benchmark-scale checkpoints are built by
scripts/build_checkpoints.py (or the `mazesteer train` command).
"""

import numpy as np

from mazesteer import diffusion as df
from mazesteer import maze as mz

corridors = mz.load_builtin_maze("corridors")
demos = mz.generate_demos(corridors, num_steps=30_000, seed=0, horizon=16, step_size=0.10)
print(f"{len(demos)} demo windows")

policy = df.make_policy(corridors, horizon=16, hidden=(128, 128), seed=0)
policy, history = df.train(policy, demos, steps=4_000, seed=1, batch=64, lr=2e-3)
print(f"loss: {history['loss'][0]:.3f} -> {history['loss'][-1]:.3f}")

# unguided sampling: batches are deterministic per seed, member streams are
# independent of batch size
cond = corridors.cell_center(1, 1)
batch = df.sample_unguided(policy, cond, batch=16, seed=7)
rate = np.mean([
    mz.check_collision(mz.clamp_to_workspace(t, corridors), corridors) for t in batch
])
print(f"collision rate of 16 unguided samples at {cond}: {rate:.2f}")
print("step size of sampled trajectories:",
      np.linalg.norm(np.diff(batch, axis=1), axis=2).mean().round(3),
      "(demos walk at 0.10)")

df.save_policy("/tmp/tiny_policy.ckpt", policy, {"demo": "tiny"})
loaded, meta = df.load_policy("/tmp/tiny_policy.ckpt")
again = df.sample_unguided(loaded, cond, batch=16, seed=7)
print("checkpoint round-trip reproduces samples:", np.array_equal(batch, again))
