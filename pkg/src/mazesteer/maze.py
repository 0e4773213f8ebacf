"""Occupancy-grid mazes, collision checking, and demonstration generation.

Workspace convention: x runs along columns, y along rows (row 0 is the top
line of the text asset), both in workspace units. Cell (r, c) covers
[c*cell, (c+1)*cell) x [r*cell, (r+1)*cell).
"""

from __future__ import annotations

import heapq
import io
import json
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

MAGIC_DEMOS = b"MZDEMO01"


@dataclass(frozen=True)
class MazeMap:
    """Immutable occupancy grid. occupancy[r, c] == True means wall."""

    occupancy: np.ndarray  # bool, shape (H, W)
    cell_size: float
    name: str = "maze"

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool)
        object.__setattr__(self, "occupancy", occ)
        occ.setflags(write=False)
        if occ.ndim != 2 or occ.shape[0] < 2 or occ.shape[1] < 2:
            raise ValueError("occupancy must be a 2-D grid of at least 2x2 cells")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        border = np.concatenate([occ[0], occ[-1], occ[:, 0], occ[:, -1]])
        if not border.all():
            raise ValueError("outer border cells must all be walls")
        if occ.all():
            raise ValueError("maze has no free cells")

    @property
    def height(self) -> int:
        return self.occupancy.shape[0]

    @property
    def width(self) -> int:
        return self.occupancy.shape[1]

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) corners of the workspace in workspace units."""
        lo = np.zeros(2)
        hi = np.array([self.width * self.cell_size, self.height * self.cell_size])
        return lo, hi

    def free_cells(self) -> np.ndarray:
        """(n, 2) int array of free (row, col) pairs."""
        rows, cols = np.nonzero(~self.occupancy)
        return np.stack([rows, cols], axis=1)

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return np.array([(col + 0.5) * self.cell_size, (row + 0.5) * self.cell_size])

    def cell_of(self, points: np.ndarray) -> np.ndarray:
        """Cell indices (..., 2) as (row, col) for workspace points (..., 2)."""
        pts = np.asarray(points, dtype=float)
        cols = np.floor(pts[..., 0] / self.cell_size).astype(int)
        rows = np.floor(pts[..., 1] / self.cell_size).astype(int)
        cols = np.clip(cols, 0, self.width - 1)
        rows = np.clip(rows, 0, self.height - 1)
        return np.stack([rows, cols], axis=-1)

    def occupied_at(self, points: np.ndarray) -> np.ndarray:
        cells = self.cell_of(points)
        return self.occupancy[cells[..., 0], cells[..., 1]]


def load_maze_text(text: str, name: str = "maze") -> MazeMap:
    """Parse the plain-text maze format: `cell_size=<f>` header, then `#`/`.` rows."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("cell_size="):
        raise ValueError("maze asset must start with a cell_size=<float> line")
    cell = float(lines[0].split("=", 1)[1])
    rows = lines[1:]
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError("maze rows must all have the same width")
    bad = set("".join(rows)) - {"#", "."}
    if bad:
        raise ValueError(f"unexpected maze characters: {sorted(bad)}")
    occ = np.array([[ch == "#" for ch in row] for row in rows], dtype=bool)
    return MazeMap(occupancy=occ, cell_size=cell, name=name)


def dump_maze_text(maze: MazeMap) -> str:
    rows = ["".join("#" if w else "." for w in row) for row in maze.occupancy]
    return f"cell_size={maze.cell_size}\n" + "\n".join(rows) + "\n"


def load_maze(path: str | Path) -> MazeMap:
    p = Path(path)
    return load_maze_text(p.read_text(), name=p.stem)


def load_builtin_maze(name: str) -> MazeMap:
    """Load a maze shipped with the package (e.g. 'corridors', 'threegoals')."""
    text = resources.files("mazesteer.assets").joinpath(f"{name}.txt").read_text()
    return load_maze_text(text, name=name)


# ---------------------------------------------------------------------------
# normalization


def normalize(points: np.ndarray, maze: MazeMap) -> np.ndarray:
    """Map workspace coordinates to [-1, 1] per dimension."""
    lo, hi = maze.bounds
    return 2.0 * (np.asarray(points, dtype=float) - lo) / (hi - lo) - 1.0


def denormalize(points: np.ndarray, maze: MazeMap) -> np.ndarray:
    lo, hi = maze.bounds
    return (np.asarray(points, dtype=float) + 1.0) * 0.5 * (hi - lo) + lo


def clamp_to_workspace(points: np.ndarray, maze: MazeMap, margin: float = 1e-9) -> np.ndarray:
    lo, hi = maze.bounds
    return np.clip(points, lo + margin, hi - margin)


# ---------------------------------------------------------------------------
# collision checking


def _segment_cells(p: np.ndarray, q: np.ndarray, cell: float) -> np.ndarray:
    """All (row, col) cells the segment p->q passes through (floor convention).

    Enumerates crossings of the grid lines and evaluates the cell index at the
    midpoint of every sub-interval, which is exact for interior traversal and
    matches arbitrarily dense point sampling.
    """
    d = q - p
    ts = [0.0, 1.0]
    for axis in range(2):
        if d[axis] == 0.0:
            continue
        k0 = int(np.ceil(min(p[axis], q[axis]) / cell))
        k1 = int(np.floor(max(p[axis], q[axis]) / cell))
        if k1 >= k0:
            ks = np.arange(k0, k1 + 1, dtype=float) * cell
            ts.extend(((ks - p[axis]) / d[axis]).tolist())
    ts = np.unique(np.clip(np.asarray(ts), 0.0, 1.0))
    mids = (ts[:-1] + ts[1:]) / 2.0
    pts = p[None, :] + mids[:, None] * d[None, :]
    pts = np.concatenate([pts, p[None, :], q[None, :]], axis=0)
    cells = np.floor(pts / cell).astype(int)
    return cells[:, ::-1]  # (x, y) -> (row, col)


def check_collision(traj: np.ndarray, maze: MazeMap) -> bool:
    """True iff any state, or any point on a segment between consecutive
    states, lies inside a wall cell. Exact for the open grid interior."""
    traj = np.asarray(traj, dtype=float)
    if traj.ndim != 2 or traj.shape[1] != 2:
        raise ValueError("trajectory must have shape (T, 2)")
    if maze.occupied_at(traj).any():
        return True
    cell = maze.cell_size
    start_cells = maze.cell_of(traj[:-1])
    end_cells = maze.cell_of(traj[1:])
    crossing = (start_cells != end_cells).any(axis=1)
    h, w = maze.occupancy.shape
    for idx in np.nonzero(crossing)[0]:
        cells = _segment_cells(traj[idx], traj[idx + 1], cell)
        rows = np.clip(cells[:, 0], 0, h - 1)
        cols = np.clip(cells[:, 1], 0, w - 1)
        if maze.occupancy[rows, cols].any():
            return True
    return False


def segment_collides(p: np.ndarray, q: np.ndarray, maze: MazeMap, margin: float = 0.0) -> bool:
    """Segment-vs-grid test; a positive margin additionally requires the
    segment to keep that distance from every wall (8-point stencil)."""
    if check_collision(np.stack([p, q]), maze):
        return True
    if margin <= 0.0:
        return False
    m = margin
    offsets = np.array(
        [(m, 0), (-m, 0), (0, m), (0, -m), (m, m), (m, -m), (-m, m), (-m, -m)]
    )
    n_sub = max(int(np.ceil(np.linalg.norm(q - p) / (maze.cell_size / 4))), 1)
    ts = np.linspace(0.0, 1.0, n_sub + 1)[:, None]
    pts = p[None] + ts * (q - p)[None]
    probes = (pts[:, None, :] + offsets[None]).reshape(-1, 2)
    lo, hi = maze.bounds
    inside = ((probes > lo) & (probes < hi)).all(axis=1)
    return bool(maze.occupied_at(probes[inside]).any())


# ---------------------------------------------------------------------------
# goal regions


@dataclass(frozen=True)
class GoalRegion:
    center: np.ndarray  # workspace units
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float)
        object.__setattr__(self, "center", c)
        if self.radius <= 0:
            raise ValueError("radius must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return np.linalg.norm(pts - self.center, axis=-1) <= self.radius


def goal_region_is_free(region: GoalRegion, maze: MazeMap) -> bool:
    """True iff every cell overlapping the goal disc is free."""
    cell = maze.cell_size
    cx, cy = region.center
    r = region.radius
    c0 = int(np.floor((cx - r) / cell))
    c1 = int(np.floor((cx + r) / cell))
    r0 = int(np.floor((cy - r) / cell))
    r1 = int(np.floor((cy + r) / cell))
    for row in range(r0, r1 + 1):
        for col in range(c0, c1 + 1):
            if row < 0 or col < 0 or row >= maze.height or col >= maze.width:
                return False
            # distance from disc center to this cell rectangle
            dx = max(col * cell - cx, 0.0, cx - (col + 1) * cell)
            dy = max(row * cell - cy, 0.0, cy - (row + 1) * cell)
            if dx * dx + dy * dy <= r * r and maze.occupancy[row, col]:
                return False
    return True


def builtin_goals(name: str = "threegoals") -> list[GoalRegion]:
    """Canonical goal regions and branch layout for the multi-goal maze."""
    if name != "threegoals":
        raise KeyError(f"no builtin goals for maze {name!r}")
    return [
        GoalRegion(np.array([2.5, 1.5]), 0.45),
        GoalRegion(np.array([5.5, 1.5]), 0.45),
        GoalRegion(np.array([9.5, 1.5]), 0.45),
    ]


# dead-end stub below the junction of the threegoals maze; demos fan out
# from here to all three goals, so the policy is multimodal at this state
BRANCH_CELL = (4, 5)
BRANCH_STATE = np.array([5.5, 4.5])


def task_label(traj: np.ndarray, goals: list[GoalRegion]) -> int | None:
    """Index of the first goal region entered, scanning t = 1..T, else None."""
    if not goals:
        raise ValueError("goals must be non-empty")
    traj = np.asarray(traj, dtype=float)
    inside = np.stack([g.contains(traj) for g in goals], axis=1)  # (T, G)
    hits = np.nonzero(inside.any(axis=1))[0]
    if hits.size == 0:
        return None
    first_t = hits[0]
    return int(np.nonzero(inside[first_t])[0][0])


# ---------------------------------------------------------------------------
# demonstration generation


def _free_graph_neighbors(maze: MazeMap) -> dict[tuple[int, int], list[tuple[int, int]]]:
    nbrs: dict[tuple[int, int], list[tuple[int, int]]] = {}
    occ = maze.occupancy
    for r, c in map(tuple, maze.free_cells()):
        out = []
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            rr, cc = r + dr, c + dc
            if 0 <= rr < maze.height and 0 <= cc < maze.width and not occ[rr, cc]:
                out.append((rr, cc))
        nbrs[(r, c)] = out
    return nbrs


def free_graph_is_connected(maze: MazeMap) -> bool:
    nbrs = _free_graph_neighbors(maze)
    cells = list(nbrs)
    if not cells:
        return False
    seen = {cells[0]}
    stack = [cells[0]]
    while stack:
        for n in nbrs[stack.pop()]:
            if n not in seen:
                seen.add(n)
                stack.append(n)
    return len(seen) == len(cells)


def plan_cell_path(
    maze: MazeMap,
    start: tuple[int, int],
    goal: tuple[int, int],
    rng: np.random.Generator | None = None,
) -> list[tuple[int, int]] | None:
    """Dijkstra over free cells. With an rng, edge weights are jittered so
    repeated queries explore different homotopy classes."""
    nbrs = _free_graph_neighbors(maze)
    if start not in nbrs or goal not in nbrs:
        return None
    weights: dict[tuple[tuple[int, int], tuple[int, int]], float] = {}

    def w(a, b):
        key = (a, b) if a <= b else (b, a)
        if key not in weights:
            weights[key] = 1.0 if rng is None else float(rng.uniform(0.5, 1.5))
        return weights[key]

    dist = {start: 0.0}
    prev: dict[tuple[int, int], tuple[int, int]] = {}
    pq = [(0.0, start)]
    while pq:
        d, cur = heapq.heappop(pq)
        if cur == goal:
            break
        if d > dist.get(cur, np.inf):
            continue
        for n in nbrs[cur]:
            nd = d + w(cur, n)
            if nd < dist.get(n, np.inf):
                dist[n] = nd
                prev[n] = cur
                heapq.heappush(pq, (nd, n))
    if goal not in dist:
        return None
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    return path[::-1]


def shortcut_waypoints(
    waypoints: np.ndarray,
    maze: MazeMap,
    rng: np.random.Generator,
    attempts: int = 60,
    clearance: float = 0.25,
) -> np.ndarray:
    """Random shortcutting that keeps the polyline collision-free with a wall
    clearance (demos close to walls make the learned manifold brittle)."""
    pts = [np.asarray(p, dtype=float) for p in waypoints]
    m = clearance * maze.cell_size
    for _ in range(attempts):
        if len(pts) <= 2:
            break
        i = int(rng.integers(0, len(pts) - 2))
        j = int(rng.integers(i + 2, len(pts)))
        if not segment_collides(pts[i], pts[j], maze, margin=m):
            pts = pts[: i + 1] + pts[j:]
    return np.stack(pts)


def _walk_polyline(poly: np.ndarray, step: float, phase: float = 0.0) -> np.ndarray:
    """Constant-speed states along a polyline, spaced `step` apart."""
    seg = np.diff(poly, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    if total <= 0:
        return poly[:1].copy()
    arcs = np.arange(phase, total, step)
    idx = np.clip(np.searchsorted(cum, arcs, side="right") - 1, 0, len(seg) - 1)
    frac = (arcs - cum[idx]) / np.where(seglen[idx] > 0, seglen[idx], 1.0)
    return poly[idx] + frac[:, None] * seg[idx]


@dataclass
class DemoDataset:
    trajectories: np.ndarray  # (n, T, 2) workspace units
    map_id: str
    seed: int
    horizon: int = field(init=False)

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=float)
        if self.trajectories.ndim != 3 or self.trajectories.shape[2] != 2:
            raise ValueError("trajectories must have shape (n, T, 2)")
        self.horizon = self.trajectories.shape[1]

    def __len__(self) -> int:
        return self.trajectories.shape[0]


def generate_demos(
    maze: MazeMap,
    num_steps: int,
    seed: int,
    horizon: int = 64,
    step_size: float | None = None,
    window_stride: int | None = None,
    goals: list[GoalRegion] | None = None,
    home_cell: tuple[int, int] | None = None,
) -> DemoDataset:
    """Collision-free navigation demos chunked into length-`horizon` windows.

    A continuous random walk is built by chaining planner paths between
    random free cells (or, if `goals` is given, from random cells to goal
    regions chosen round-robin), smoothed by collision-checked shortcutting.
    The walk is resampled at constant speed and windowed with `window_stride`.
    With `home_cell`, every other goal-directed leg starts from that cell, so
    the branch state is densely covered by demos to every goal.
    """
    if num_steps < horizon:
        raise ValueError("num_steps must be at least the horizon")
    free = maze.free_cells()
    if len(free) < 2:
        raise ValueError("maze must have at least 2 free cells")
    rng = np.random.default_rng(seed)
    step = step_size if step_size is not None else 0.15 * maze.cell_size
    stride = window_stride if window_stride is not None else max(1, horizon // 4)

    goal_cells = None
    if goals is not None:
        goal_cells = [tuple(maze.cell_of(g.center)) for g in goals]

    windows: list[np.ndarray] = []
    walk: list[np.ndarray] = []
    n_states = 0
    cur = tuple(free[rng.integers(len(free))])
    leg_index = 0
    home_leg_count = 0
    at_home = False
    while n_states < num_steps:
        if goal_cells is not None:
            # home legs cycle the goals separately so the branch state sees
            # an exactly balanced mix of continuations
            if at_home:
                goal = goal_cells[home_leg_count % len(goal_cells)]
                home_leg_count += 1
            else:
                goal = goal_cells[leg_index % len(goal_cells)]
            if goal == cur:
                goal = goal_cells[(leg_index + 1) % len(goal_cells)]
        else:
            goal = cur
            while goal == cur:
                goal = tuple(free[rng.integers(len(free))])
        cells = plan_cell_path(maze, cur, goal, rng=rng)
        if cells is None:
            raise ValueError("free-cell graph is disconnected")
        waypoints = np.stack([maze.cell_center(r, c) for r, c in cells])
        poly = shortcut_waypoints(waypoints, maze, rng)
        states = _walk_polyline(poly, step)
        if walk and len(states) > 0:
            # drop the duplicated junction state
            states = states[1:] if np.allclose(states[0], walk[-1][-1]) else states
        if len(states):
            walk.append(states)
            n_states += len(states)
        cur = goal
        leg_index += 1
        if goals is not None:
            # restart each goal-directed leg from a fresh random cell; anchor
            # windows to the leg end so trajectories reach the goal region,
            # padding short legs by resting at the goal
            full = np.concatenate(walk)
            if len(full) < horizon:
                pad = np.repeat(full[-1:], horizon - len(full), axis=0)
                full = np.concatenate([full, pad])
            for s in range(len(full) - horizon, -1, -stride):
                windows.append(full[s : s + horizon])
            walk = []
            at_home = home_cell is not None and leg_index % 3 != 0
            cur = home_cell if at_home else tuple(free[rng.integers(len(free))])

    if walk:
        full = np.concatenate(walk)
        for s in range(0, len(full) - horizon + 1, stride):
            windows.append(full[s : s + horizon])

    trajs = np.stack(windows)
    keep = [i for i, w in enumerate(trajs) if not check_collision(w, maze)]
    trajs = trajs[keep]
    if len(trajs) == 0:
        raise ValueError("demo generation produced no collision-free windows")
    return DemoDataset(trajectories=trajs, map_id=maze.name, seed=seed)


# ---------------------------------------------------------------------------
# dataset serialization


def save_demos_jsonl(data: DemoDataset, path: str | Path) -> None:
    with open(path, "w") as f:
        for traj in data.trajectories:
            f.write(json.dumps({"states": traj.tolist(), "map_id": data.map_id}) + "\n")


def load_demos_jsonl(path: str | Path, seed: int = 0) -> DemoDataset:
    trajs, map_id = [], ""
    with open(path) as f:
        for line in f:
            rec = json.loads(line)
            trajs.append(np.asarray(rec["states"], dtype=float))
            map_id = rec["map_id"]
    return DemoDataset(trajectories=np.stack(trajs), map_id=map_id, seed=seed)


def save_demos_packed(data: DemoDataset, path: str | Path) -> None:
    """Binary variant: magic, horizon, count, map_id, seed, then f32 states."""
    map_id = data.map_id.encode()
    header = struct.pack(
        f"<8sIIQH{len(map_id)}s",
        MAGIC_DEMOS,
        data.horizon,
        len(data),
        data.seed,
        len(map_id),
        map_id,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(data.trajectories.astype("<f4").tobytes())


def load_demos_packed(path: str | Path) -> DemoDataset:
    with open(path, "rb") as f:
        buf = io.BytesIO(f.read())
    magic, horizon, count, seed, id_len = struct.unpack("<8sIIQH", buf.read(26))
    if magic != MAGIC_DEMOS:
        raise ValueError("not a packed demo dataset")
    map_id = buf.read(id_len).decode()
    flat = np.frombuffer(buf.read(), dtype="<f4").astype(float)
    trajs = flat.reshape(count, horizon, 2)
    return DemoDataset(trajectories=trajs, map_id=map_id, seed=seed)
