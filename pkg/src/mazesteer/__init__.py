"""Inference-time steering of frozen trajectory diffusion policies."""

from .diffusion import (
    AnalyticGMMPolicy,
    DiffusionPolicy,
    GaussianMixture,
    NoiseSchedule,
    Normalizer,
    cosine_schedule,
    forward_diffuse,
    load_policy,
    reverse_step,
    sample_unguided,
    save_policy,
    train,
)
from .maze import (
    DemoDataset,
    GoalRegion,
    MazeMap,
    check_collision,
    generate_demos,
    load_builtin_maze,
    load_maze,
    task_label,
)
from .objectives import (
    AlignmentObjective,
    InteractionInput,
    Nudge,
    Point,
    Sketch,
    apply_nudge,
    point_cost,
    resample_sketch,
    sketch_cost,
)
from .steering import (
    GuidanceConfig,
    SteeredBatch,
    sample_bi,
    sample_gd,
    sample_op,
    sample_pr,
    sample_rs,
    sample_ss,
    steer,
)
from .vae import LatentPolicy, load_latent_policy, sample_vae, save_latent_policy, train_vae

__version__ = "0.1.0"
