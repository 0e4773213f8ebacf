"""Interaction inputs and the alignment costs that steer sampling.

Costs are evaluated on workspace-coordinate trajectories; samplers chain the
gradients back through normalization themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Point:
    """A goal coordinate the trajectory should stay close to."""

    z: np.ndarray  # (2,)

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).reshape(2)
        if not np.isfinite(z).all():
            raise ValueError("point must be finite")
        object.__setattr__(self, "z", z)


@dataclass(frozen=True)
class Sketch:
    """A drawn polyline the trajectory should follow."""

    points: np.ndarray  # (L, 2), L >= 2

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ValueError("sketch needs at least two 2-d points")
        if not np.isfinite(pts).all():
            raise ValueError("sketch must be finite")
        if np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() == 0.0:
            raise ValueError("sketch has zero arc length")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class Nudge:
    """A physical correction: the first k states are overwritten."""

    prefix: np.ndarray  # (k, 2), k >= 1

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.prefix, dtype=float))
        if pts.shape[0] < 1 or pts.shape[1] != 2 or not np.isfinite(pts).all():
            raise ValueError("nudge prefix must be finite (k, 2) with k >= 1")
        object.__setattr__(self, "prefix", pts)


InteractionInput = Point | Sketch | Nudge


def interaction_to_json(inp: InteractionInput) -> dict:
    if isinstance(inp, Point):
        return {"kind": "point", "z": inp.z.tolist()}
    if isinstance(inp, Sketch):
        return {"kind": "sketch", "points": inp.points.tolist()}
    if isinstance(inp, Nudge):
        return {"kind": "nudge", "prefix": inp.prefix.tolist()}
    raise TypeError(f"not an interaction input: {inp!r}")


def interaction_from_json(obj: dict) -> InteractionInput:
    kind = obj.get("kind")
    if kind == "point":
        return Point(z=np.asarray(obj["z"], dtype=float))
    if kind == "sketch":
        return Sketch(points=np.asarray(obj["points"], dtype=float))
    if kind == "nudge":
        return Nudge(prefix=np.asarray(obj["prefix"], dtype=float))
    raise ValueError(f"unknown interaction kind: {kind!r}")


# ---------------------------------------------------------------------------
# costs and gradients


def point_cost(traj: np.ndarray, z: np.ndarray) -> float:
    """Mean L2 distance from every state to the point."""
    traj = np.asarray(traj, dtype=float)
    return float(np.linalg.norm(traj - np.asarray(z, dtype=float), axis=-1).mean())


def point_cost_grad(traj: np.ndarray, z: np.ndarray) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    diff = traj - np.asarray(z, dtype=float)
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    # subgradient 0 at exact coincidence
    return np.where(dist > 0.0, diff / np.where(dist > 0.0, dist, 1.0), 0.0) / traj.shape[0]


def sketch_cost(traj: np.ndarray, target: np.ndarray) -> float:
    """Summed per-step L2 distance to the (resampled) sketch."""
    traj = np.asarray(traj, dtype=float)
    target = np.asarray(target, dtype=float)
    if traj.shape != target.shape:
        raise ValueError(f"trajectory {traj.shape} and target {target.shape} differ")
    return float(np.linalg.norm(traj - target, axis=-1).sum())


def sketch_cost_grad(traj: np.ndarray, target: np.ndarray) -> np.ndarray:
    traj = np.asarray(traj, dtype=float)
    target = np.asarray(target, dtype=float)
    if traj.shape != target.shape:
        raise ValueError(f"trajectory {traj.shape} and target {target.shape} differ")
    diff = traj - target
    dist = np.linalg.norm(diff, axis=-1, keepdims=True)
    return np.where(dist > 0.0, diff / np.where(dist > 0.0, dist, 1.0), 0.0)


def point_min_distance(traj: np.ndarray, z: np.ndarray) -> float:
    """Closest-state distance. Reporting metric only: its gradient is not
    smooth, so it is never used to steer."""
    traj = np.asarray(traj, dtype=float)
    return float(np.linalg.norm(traj - np.asarray(z, dtype=float), axis=-1).min())


def _arc_uniform(pts: np.ndarray, horizon: int) -> np.ndarray:
    seg = np.diff(pts, axis=0)
    seglen = np.linalg.norm(seg, axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    arcs = np.linspace(0.0, cum[-1], horizon)
    idx = np.clip(np.searchsorted(cum, arcs, side="right") - 1, 0, len(seg) - 1)
    frac = (arcs - cum[idx]) / np.where(seglen[idx] > 0, seglen[idx], 1.0)
    out = pts[idx] + frac[:, None] * seg[idx]
    out[0], out[-1] = pts[0], pts[-1]
    return out


def resample_sketch(sketch: Sketch | np.ndarray, horizon: int) -> np.ndarray:
    """Resample the polyline to exactly `horizon` uniformly spaced points.

    Arc-length resampling is iterated to its fixed point, where consecutive
    output points have equal spacing; this makes the operation idempotent
    (a single arc-length pass is not: it cuts corners, so re-measuring arc
    length on its own output shifts the points). First and last sketch points
    are preserved exactly.
    """
    pts = sketch.points if isinstance(sketch, Sketch) else np.asarray(sketch, dtype=float)
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if np.linalg.norm(np.diff(pts, axis=0), axis=1).sum() == 0.0:
        raise ValueError("cannot resample a zero-length sketch")
    cur = _arc_uniform(pts, horizon)
    for _ in range(1_000):
        nxt = _arc_uniform(cur, horizon)
        done = np.abs(nxt - cur).max() < 1e-9
        cur = nxt
        if done:
            break
    return cur


def apply_nudge(traj: np.ndarray, nudge: Nudge) -> np.ndarray:
    """Overwrite the first k states with the nudge prefix."""
    traj = np.asarray(traj, dtype=float)
    k = nudge.prefix.shape[0]
    if k > traj.shape[0]:
        raise ValueError(f"nudge length {k} exceeds horizon {traj.shape[0]}")
    out = traj.copy()
    out[:k] = nudge.prefix
    return out


# ---------------------------------------------------------------------------
# bound objective


@dataclass(frozen=True)
class AlignmentObjective:
    """An interaction input bound to a policy horizon, exposing cost and its
    exact gradient on workspace trajectories."""

    input: InteractionInput
    horizon: int
    target: np.ndarray | None = None  # resampled sketch, shape (horizon, 2)

    @classmethod
    def create(cls, inp: InteractionInput, horizon: int) -> "AlignmentObjective":
        target = None
        if isinstance(inp, Sketch):
            target = resample_sketch(inp, horizon)
        return cls(input=inp, horizon=horizon, target=target)

    @property
    def kind(self) -> str:
        return {Point: "point", Sketch: "sketch", Nudge: "nudge"}[type(self.input)]

    def cost(self, traj: np.ndarray) -> float:
        if isinstance(self.input, Point):
            return point_cost(traj, self.input.z)
        if isinstance(self.input, Sketch):
            return sketch_cost(traj, self.target)
        raise ValueError("a nudge has no usable cost surface")

    def gradient(self, traj: np.ndarray) -> np.ndarray:
        """d(cost)/d(traj), trajectory-shaped, workspace coordinates."""
        if isinstance(self.input, Point):
            return point_cost_grad(traj, self.input.z)
        if isinstance(self.input, Sketch):
            return sketch_cost_grad(traj, self.target)
        raise ValueError("a nudge has no usable gradient")

    def batch_costs(self, trajs: np.ndarray) -> np.ndarray:
        return np.array([self.cost(t) for t in trajs])
