"""The six inference-time steering strategies over a frozen policy.

rs: plain sampling            pr: sample then rank by cost
op: overwrite prefix, re-roll bi: start the chain from noised user input
gd: add cost gradient to the denoiser output at every step
ss: gd plus M-1 in-place MCMC refinements per noise level
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffusion as df
from .maze import MazeMap, check_collision, clamp_to_workspace
from .objectives import AlignmentObjective, Nudge

METHODS = ("rs", "op", "pr", "bi", "gd", "ss")


@dataclass(frozen=True)
class GuidanceConfig:
    """Steering method plus its guide-ratio schedule and sampling knobs."""

    method: str = "rs"
    beta: float = 0.0
    cutoff_step: int = 0  # levels i <= cutoff get guide ratio 0
    mcmc_steps: int = 1
    batch: int = 32
    seed: int = 0
    grad_clip: float = 10.0
    beta_per_step: tuple[float, ...] | None = None  # overrides beta/cutoff
    bi_level: int | None = None  # bi corruption level; None = chain entry

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.mcmc_steps < 1:
            raise ValueError("mcmc_steps must be >= 1")
        if self.beta < 0 or (
            self.beta_per_step is not None and any(b < 0 for b in self.beta_per_step)
        ):
            raise ValueError("guide ratios must be non-negative")

    def beta_schedule(self, sched: df.NoiseSchedule) -> np.ndarray:
        """Per-inference-step guide ratios, honoring the cutoff step."""
        steps = sched.inference_steps
        if self.beta_per_step is not None:
            if len(self.beta_per_step) != len(steps):
                raise ValueError("beta_per_step length must match the inference steps")
            betas = np.asarray(self.beta_per_step, dtype=float)
        else:
            betas = np.full(len(steps), float(self.beta))
        return np.where(steps <= self.cutoff_step, 0.0, betas)

    def to_json(self) -> dict:
        out = {
            "method": self.method,
            "beta": self.beta,
            "cutoff_step": self.cutoff_step,
            "mcmc_steps": self.mcmc_steps,
            "batch": self.batch,
            "seed": self.seed,
        }
        if self.beta_per_step is not None:
            out["beta_per_step"] = list(self.beta_per_step)
        if self.bi_level is not None:
            out["bi_level"] = self.bi_level
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "GuidanceConfig":
        kwargs = {k: obj[k] for k in
                  ("method", "beta", "cutoff_step", "mcmc_steps", "batch", "seed", "bi_level")
                  if k in obj}
        if obj.get("beta_per_step") is not None:
            kwargs["beta_per_step"] = tuple(obj["beta_per_step"])
        return cls(**kwargs)


@dataclass
class SteeredBatch:
    """A steered sample batch plus the bookkeeping the benchmark needs."""

    trajectories: np.ndarray  # (B, T, 2), workspace coordinates
    costs: np.ndarray  # steering objective per member
    collisions: np.ndarray | None  # bool per member; None when no map given
    ranking: np.ndarray  # member indices sorted by ascending cost
    executed_index: int  # the sample the method would hand to execution
    method: str
    config: GuidanceConfig
    diagnostics: list[str | None] = field(default_factory=list)

    @property
    def executed(self) -> np.ndarray:
        return self.trajectories[self.executed_index]

    @property
    def best(self) -> np.ndarray:
        return self.trajectories[self.ranking[0]]


def _assemble(
    x_norm: np.ndarray,
    policy,
    cfg: GuidanceConfig,
    method: str,
    objective: AlignmentObjective | None,
    maze: MazeMap | None,
    diagnostics: list[str | None],
    executed_first: bool,
) -> SteeredBatch:
    batch = x_norm.shape[0]
    trajs = policy.normalizer.denormalize(
        x_norm.reshape(batch, policy.horizon, policy.state_dim)
    )
    if objective is not None:
        costs = np.array(
            [objective.cost(t) if np.isfinite(t).all() else np.inf for t in trajs]
        )
    else:
        costs = np.zeros(batch)
    ranking = np.argsort(costs, kind="stable")
    collisions = None
    if maze is not None:
        collisions = np.array(
            [
                bool(check_collision(clamp_to_workspace(t, maze), maze))
                if np.isfinite(t).all()
                else True
                for t in trajs
            ]
        )
    executed = int(ranking[0]) if executed_first else 0
    return SteeredBatch(
        trajectories=trajs,
        costs=costs,
        collisions=collisions,
        ranking=ranking,
        executed_index=executed,
        method=method,
        config=cfg,
        diagnostics=diagnostics,
    )


def _gradient_guidance(policy, objective: AlignmentObjective, cfg: GuidanceConfig):
    """Epsilon-space guidance term: beta_k * (clipped) cost gradient, with the
    gradient taken at the noisy trajectory and chain-ruled through
    denormalization."""
    betas = cfg.beta_schedule(policy.schedule)
    scale = policy.normalizer.scale

    def guidance(x: np.ndarray, i: int, k: int) -> np.ndarray:
        b = betas[k]
        if b == 0.0:
            return np.zeros_like(x)
        trajs = policy.normalizer.denormalize(
            x.reshape(x.shape[0], policy.horizon, policy.state_dim)
        )
        g = np.stack([objective.gradient(t) for t in trajs]) * scale
        g = g.reshape(x.shape)
        norms = np.linalg.norm(g, axis=1, keepdims=True)
        factor = np.where(norms > cfg.grad_clip, cfg.grad_clip / np.where(norms > 0, norms, 1.0), 1.0)
        return b * g * factor

    return guidance


def _require(objective: AlignmentObjective | None, method: str) -> AlignmentObjective:
    if objective is None or objective.kind not in ("point", "sketch"):
        raise ValueError(f"{method} requires a point or sketch objective")
    return objective


def sample_rs(policy, cond, cfg: GuidanceConfig, maze=None, objective=None, **chain_kw) -> SteeredBatch:
    """Random sampling: the unmodified policy; costs reported if an objective
    is supplied, but nothing is optimized."""
    x, diags = df.reverse_chain(
        policy, df._norm_cond(policy, cond), cfg.batch, cfg.seed, **chain_kw
    )
    return _assemble(x, policy, cfg, "rs", objective, maze, diags, executed_first=False)


def sample_pr(policy, cond, objective, cfg: GuidanceConfig, maze=None, **chain_kw) -> SteeredBatch:
    """Post-hoc ranking: the rs batch, executing the cost minimizer."""
    objective = _require(objective, "pr")
    x, diags = df.reverse_chain(
        policy, df._norm_cond(policy, cond), cfg.batch, cfg.seed, **chain_kw
    )
    return _assemble(x, policy, cfg, "pr", objective, maze, diags, executed_first=True)


def sample_bi(policy, cond, objective, cfg: GuidanceConfig, maze=None, **chain_kw) -> SteeredBatch:
    """Biased initialization: start the reverse chain from a forward-diffused
    copy of the target (resampled sketch, or the point tiled across the
    horizon) at the chain's entry noise level."""
    objective = _require(objective, "bi")
    sched = policy.schedule
    if objective.kind == "sketch":
        target = objective.target
    else:
        target = np.tile(objective.input.z, (policy.horizon, 1))
    t_norm = policy.normalizer.normalize(target).reshape(-1)
    level = int(cfg.bi_level) if cfg.bi_level is not None else int(sched.inference_steps[0])
    init = np.stack(
        [
            df.forward_diffuse(t_norm, level, df.member_rng(cfg.seed, b).standard_normal(policy.dim), sched)
            for b in range(cfg.batch)
        ]
    )
    x, diags = df.reverse_chain(
        policy, df._norm_cond(policy, cond), cfg.batch, cfg.seed, init=init, **chain_kw
    )
    return _assemble(x, policy, cfg, "bi", objective, maze, diags, executed_first=True)


def sample_gd(policy, cond, objective, cfg: GuidanceConfig, maze=None, **chain_kw) -> SteeredBatch:
    """Guided diffusion: the cost gradient joins the denoiser output inside
    every reverse step."""
    objective = _require(objective, "gd")
    guidance = _gradient_guidance(policy, objective, cfg)
    x, diags = df.reverse_chain(
        policy, df._norm_cond(policy, cond), cfg.batch, cfg.seed, guidance=guidance, **chain_kw
    )
    return _assemble(x, policy, cfg, "gd", objective, maze, diags, executed_first=True)


def sample_ss(policy, cond, objective, cfg: GuidanceConfig, maze=None, **chain_kw) -> SteeredBatch:
    """Stochastic sampling: annealed MCMC on the composed model. Each noise
    level runs M-1 in-place refinements (guided reverse to the clean
    prediction, forward-diffused back with fresh noise) before the guided
    step down."""
    objective = _require(objective, "ss")
    guidance = _gradient_guidance(policy, objective, cfg)
    x, diags = df.reverse_chain(
        policy,
        df._norm_cond(policy, cond),
        cfg.batch,
        cfg.seed,
        guidance=guidance,
        mcmc_steps=cfg.mcmc_steps,
        **chain_kw,
    )
    return _assemble(x, policy, cfg, "ss", objective, maze, diags, executed_first=True)


def sample_op(policy, cond, nudge: Nudge, cfg: GuidanceConfig, maze=None, **chain_kw) -> SteeredBatch:
    """Output perturbation: overwrite the first k states with the nudge, then
    re-roll the rest of the horizon conditioned on the corrected state."""
    if not isinstance(nudge, Nudge):
        raise ValueError("op requires a nudge input")
    k = nudge.prefix.shape[0]
    if k > policy.horizon:
        raise ValueError(f"nudge length {k} exceeds horizon {policy.horizon}")
    z_k = nudge.prefix[-1]
    x, diags = df.reverse_chain(
        policy, df._norm_cond(policy, z_k), cfg.batch, cfg.seed, **chain_kw
    )
    rolls = policy.normalizer.denormalize(
        x.reshape(cfg.batch, policy.horizon, policy.state_dim)
    )
    prefix = np.broadcast_to(nudge.prefix, (cfg.batch, k, policy.state_dim))
    trajs = np.concatenate([prefix, rolls[:, : policy.horizon - k]], axis=1)
    batch = _assemble(
        policy.normalizer.normalize(trajs).reshape(cfg.batch, -1),
        policy,
        cfg,
        "op",
        None,
        maze,
        diags,
        executed_first=False,
    )
    # the perturbed prefix must survive normalization round-trips bit-exactly
    batch.trajectories[:, :k] = prefix
    return batch


def steer(
    policy,
    cond,
    interaction,
    cfg: GuidanceConfig,
    maze: MazeMap | None = None,
    **chain_kw,
) -> SteeredBatch:
    """Dispatch to the configured sampling strategy.

    `interaction` is an AlignmentObjective (point/sketch) for rs/pr/bi/gd/ss
    (rs accepts None) or a Nudge for op.
    """
    if cfg.method == "op":
        if not isinstance(interaction, Nudge):
            raise ValueError("nudge interaction requires method op (and vice versa)")
        return sample_op(policy, cond, interaction, cfg, maze=maze, **chain_kw)
    if isinstance(interaction, Nudge):
        raise ValueError("nudge interaction requires method op")
    if cfg.method == "rs":
        return sample_rs(policy, cond, cfg, maze=maze, objective=interaction, **chain_kw)
    if cfg.method == "pr":
        return sample_pr(policy, cond, interaction, cfg, maze=maze, **chain_kw)
    if cfg.method == "bi":
        return sample_bi(policy, cond, interaction, cfg, maze=maze, **chain_kw)
    if cfg.method == "gd":
        return sample_gd(policy, cond, interaction, cfg, maze=maze, **chain_kw)
    if cfg.method == "ss":
        return sample_ss(policy, cond, interaction, cfg, maze=maze, **chain_kw)
    raise ValueError(f"unhandled method {cfg.method!r}")
