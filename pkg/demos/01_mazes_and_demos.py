"""Mazes, collision checking, and demonstration generation.

The two built-in mazes are plain text assets: `corridors` is a city-block
lattice with many equal-length routes between most cell pairs (so a learned
policy has genuinely multimodal choices), `threegoals` is a trident with
three goal chambers reachable from a single branch stub.
"""

import numpy as np

from mazesteer import maze as mz


def render(maze, traj=None):
    grid = [
        ["#" if maze.occupancy[r, c] else "." for c in range(maze.width)]
        for r in range(maze.height)
    ]
    if traj is not None:
        for r, c in maze.cell_of(traj):
            grid[r][c] = "*"
    return "\n".join("".join(row) for row in grid)


corridors = mz.load_builtin_maze("corridors")
print(f"corridors: {corridors.height}x{corridors.width} cells, "
      f"{len(corridors.free_cells())} free, "
      f"connected={mz.free_graph_is_connected(corridors)}")
print(render(corridors))

# a demonstration dataset is a continuous collision-free walk, chunked into
# fixed-horizon windows
demos = mz.generate_demos(corridors, num_steps=20_000, seed=0, step_size=0.10)
print(f"\n{len(demos)} windows of horizon {demos.horizon}")
print("every window collision-free:",
      not any(mz.check_collision(w, corridors) for w in demos.trajectories))
print("\none demo window over the maze:")
print(render(corridors, demos.trajectories[3]))

# both serialization formats round-trip
mz.save_demos_jsonl(demos, "/tmp/demos.jsonl")
mz.save_demos_packed(demos, "/tmp/demos.bin")
packed = mz.load_demos_packed("/tmp/demos.bin")
print("\npacked round-trip max error:",
      np.abs(packed.trajectories - demos.trajectories).max())

# the multi-goal variant: goal-directed legs, half starting from the branch
tg = mz.load_builtin_maze("threegoals")
goals = mz.builtin_goals()
ta_demos = mz.generate_demos(
    tg, num_steps=10_000, seed=1, goals=goals, step_size=0.12,
    home_cell=mz.BRANCH_CELL,
)
final = ta_demos.trajectories[:, -1]
hits = np.stack([g.contains(final) for g in goals], axis=1)
print(f"\nthreegoals: {len(ta_demos)} windows; "
      f"fraction ending in a goal region: {hits.any(axis=1).mean():.2f}")
print(render(tg, ta_demos.trajectories[0]))
