"""Noise schedule, forward/reverse diffusion, denoiser training, sampling.

All sampling arithmetic runs in normalized coordinates ([-1, 1] per
dimension); trajectories are denormalized at the API boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .maze import DemoDataset, MazeMap


@dataclass(frozen=True)
class Normalizer:
    """Affine map between workspace coordinates and the [-1, 1] box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "hi", np.asarray(self.hi, dtype=float))

    @classmethod
    def for_maze(cls, maze: MazeMap) -> "Normalizer":
        lo, hi = maze.bounds
        return cls(lo=lo, hi=hi)

    @classmethod
    def identity(cls, dim: int = 2) -> "Normalizer":
        return cls(lo=-np.ones(dim), hi=np.ones(dim))

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo) - 1.0

    def denormalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) + 1.0) * 0.5 * (self.hi - self.lo) + self.lo

    @property
    def scale(self) -> np.ndarray:
        """d(workspace)/d(normalized), per dimension."""
        return (self.hi - self.lo) * 0.5


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal levels for steps 0..N plus the inference subsequence.

    alpha_bar[i] is the squared cumulative signal at step i; alpha_bar[0] = 1
    and the sequence decreases strictly toward (near) zero at i = N.
    """

    alpha_bar: np.ndarray
    inference_steps: np.ndarray

    def __post_init__(self):
        ab = np.asarray(self.alpha_bar, dtype=float)
        ks = np.asarray(self.inference_steps, dtype=int)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "inference_steps", ks)
        if ab[0] != 1.0 or (np.diff(ab) >= 0).any() or (ab <= 0).any():
            raise ValueError("alpha_bar must start at 1 and decrease strictly")
        if (np.diff(ks) >= 0).any() or ks[-1] != 1 or ks[0] > self.n_steps:
            raise ValueError("inference steps must decrease strictly and end at 1")

    @property
    def n_steps(self) -> int:
        return len(self.alpha_bar) - 1

    def signal(self, i) -> np.ndarray:
        return np.sqrt(self.alpha_bar[i])

    def noise(self, i) -> np.ndarray:
        return np.sqrt(1.0 - self.alpha_bar[i])

    def reverse_coeffs(self, i: int, nxt: int) -> tuple[float, float]:
        """(alpha, gamma) of the deterministic reverse map from level i to nxt,
        written as tau_nxt = alpha * (tau_i - gamma * eps_hat)."""
        a = float(self.signal(nxt) / self.signal(i))
        g = float(self.noise(i) - self.signal(i) * self.noise(nxt) / self.signal(nxt))
        return a, g


def cosine_schedule(n_steps: int = 100, n_inference: int = 10, s: float = 0.008) -> NoiseSchedule:
    """Squared-cosine cumulative signal with the usual per-step ratio clamp.

    The inference subsequence starts at 0.9 * N: the cumulative signal at the
    last few training steps is so small that evaluating the chain there would
    amplify denoiser error by 1/signal (thousands); skipping them is the
    standard few-step spacing and leaves initialization statistics intact.
    """
    i = np.arange(n_steps + 1)
    f = np.cos((i / n_steps + s) / (1 + s) * np.pi / 2) ** 2
    ratios = np.clip(f[1:] / f[:-1], 1e-3, 0.9999)
    alpha_bar = np.concatenate([[1.0], np.cumprod(ratios)])
    top = max(int(round(0.9 * n_steps)), 1)
    steps = np.unique(np.round(np.linspace(top, 1, n_inference)).astype(int))[::-1]
    return NoiseSchedule(alpha_bar=alpha_bar, inference_steps=steps)


def forward_diffuse(x0: np.ndarray, i, eta: np.ndarray, sched: NoiseSchedule) -> np.ndarray:
    """Noise clean (normalized) data to level i: signal * x0 + noise * eta."""
    i_arr = np.asarray(i)
    if (i_arr < 1).any() or (i_arr > sched.n_steps).any():
        raise ValueError(f"diffusion step {i} out of range 1..{sched.n_steps}")
    sig, noi = sched.signal(i_arr), sched.noise(i_arr)
    if i_arr.ndim > 0:
        sig, noi = sig[:, None], noi[:, None]
    return sig * x0 + noi * np.asarray(eta, dtype=float)


def predict_clean(x_i: np.ndarray, eps: np.ndarray, i: int, sched: NoiseSchedule) -> np.ndarray:
    return (x_i - sched.noise(i) * eps) / sched.signal(i)


def reverse_update(tau, eps_hat, alpha: float, gamma: float, sigma: float = 0.0, eta=None):
    """One reverse step in raw coefficient form:
    tau' = alpha * (tau - gamma * eps_hat) + sigma * eta."""
    out = alpha * (np.asarray(tau, dtype=float) - gamma * np.asarray(eps_hat, dtype=float))
    if sigma != 0.0:
        out = out + sigma * np.asarray(eta, dtype=float)
    return out


def reverse_step(
    sched: NoiseSchedule,
    tau_i: np.ndarray,
    i: int,
    nxt: int,
    eps_hat: np.ndarray,
    eta: np.ndarray | None = None,
    clip_clean: float | None = None,
) -> np.ndarray:
    """Reverse update from level i to level nxt using eps_hat as direction.

    nxt < i runs the deterministic (sigma-free) update; nxt == i performs the
    in-place stochastic move used by MCMC refinement: predict the clean
    trajectory, then forward-diffuse it back to level i with fresh noise.
    """
    if not (1 <= i <= sched.n_steps) or nxt < 0 or nxt > i:
        raise ValueError(f"invalid step pair ({i} -> {nxt})")
    x0 = predict_clean(tau_i, eps_hat, i, sched)
    if clip_clean is not None:
        x0 = np.clip(x0, -clip_clean, clip_clean)
    if nxt == i:
        if eta is None:
            raise ValueError("in-place reverse step requires a noise draw")
        return forward_diffuse(x0, i, eta, sched)
    eps_eff = (tau_i - sched.signal(i) * x0) / sched.noise(i)
    return sched.signal(nxt) * x0 + sched.noise(nxt) * eps_eff


# ---------------------------------------------------------------------------
# policies


@dataclass
class DiffusionPolicy:
    """Frozen trajectory denoiser over flattened, normalized length-T windows
    conditioned on the current state.

    The network regresses either the noise ("eps") or the clean trajectory
    ("x0"); either way the policy exposes the noise-prediction convention the
    samplers are written in. x0 regression avoids the 1/signal amplification
    of network error at high noise levels and samples markedly cleaner
    trajectories with a small MLP.
    """

    net: nn.Net
    schedule: NoiseSchedule
    horizon: int
    normalizer: Normalizer
    map_id: str = ""
    emb_dim: int = 32
    clip_clean: float | None = 1.2
    predict_type: str = "x0"

    state_dim: int = 2

    @property
    def dim(self) -> int:
        return self.horizon * self.state_dim

    def _net_out(self, x: np.ndarray, i: int, cond: np.ndarray | None) -> np.ndarray:
        x = np.atleast_2d(x)
        if cond is None:
            raise ValueError("diffusion policy requires a condition state")
        cond = np.broadcast_to(np.atleast_2d(cond), (x.shape[0], self.state_dim))
        emb = np.broadcast_to(
            nn.timestep_embedding(float(i), self.emb_dim), (x.shape[0], self.emb_dim)
        )
        inp = np.concatenate([x, cond, emb], axis=1)
        return nn.forward(self.net, inp)

    def predict_eps(self, x: np.ndarray, i: int, cond: np.ndarray | None) -> np.ndarray:
        out = self._net_out(x, i, cond)
        if self.predict_type == "eps":
            return out
        sched = self.schedule
        return (np.atleast_2d(x) - sched.signal(i) * out) / sched.noise(i)


def make_policy(
    maze: MazeMap,
    horizon: int = 64,
    hidden: tuple[int, ...] = (256, 256, 256, 256),
    n_steps: int = 100,
    n_inference: int = 10,
    emb_dim: int = 32,
    seed: int = 0,
    predict_type: str = "x0",
) -> DiffusionPolicy:
    dim = horizon * 2
    widths = [dim + 2 + emb_dim, *hidden, dim]
    return DiffusionPolicy(
        net=nn.init_net(widths, seed=seed),
        schedule=cosine_schedule(n_steps, n_inference),
        horizon=horizon,
        normalizer=Normalizer.for_maze(maze),
        map_id=maze.name,
        emb_dim=emb_dim,
        predict_type=predict_type,
    )


@dataclass(frozen=True)
class GaussianMixture:
    """Isotropic 2-D mixture used as an analytic stand-in data distribution."""

    means: np.ndarray  # (K, 2)
    variances: np.ndarray  # (K,)
    weights: np.ndarray  # (K,)

    def __post_init__(self):
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        v = np.atleast_1d(np.asarray(self.variances, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "variances", v)
        object.__setattr__(self, "weights", w)
        if (v <= 0).any():
            raise ValueError("variances must be positive")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be non-negative and sum to 1")

    def log_density(
        self, x: np.ndarray, sched: NoiseSchedule | None = None, i: int = 0
    ) -> np.ndarray:
        """Exact log-density of the mixture noised to level i (level 0 = data)."""
        x = np.atleast_2d(x)
        ab = 1.0 if sched is None and i == 0 else self.alpha_bar_at(sched, i)
        m = np.sqrt(ab) * self.means
        s2 = ab * self.variances + (1.0 - ab)
        d2 = ((x[:, None, :] - m[None, :, :]) ** 2).sum(axis=2)
        logp_k = -0.5 * d2 / s2[None, :] - np.log(2 * np.pi * s2)[None, :] + np.log(self.weights)[None, :]
        mx = logp_k.max(axis=1, keepdims=True)
        return (mx + np.log(np.exp(logp_k - mx).sum(axis=1, keepdims=True)))[:, 0]

    @staticmethod
    def alpha_bar_at(sched: NoiseSchedule, i: int) -> float:
        return float(sched.alpha_bar[i])


def gmm_score(x: np.ndarray, mixture: GaussianMixture, i: int, sched: NoiseSchedule) -> np.ndarray:
    """Exact score (gradient of log-density) of the mixture noised to level i.

    A mixture convolved with the forward process's Gaussian is again a
    mixture, so the score has closed form via posterior responsibilities.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    ab = GaussianMixture.alpha_bar_at(sched, i)
    m = np.sqrt(ab) * mixture.means
    s2 = ab * mixture.variances + (1.0 - ab)
    diff = x[:, None, :] - m[None, :, :]  # (B, K, 2)
    d2 = (diff**2).sum(axis=2)
    logr = -0.5 * d2 / s2[None, :] - np.log(2 * np.pi * s2)[None, :] + np.log(mixture.weights)[None, :]
    logr -= logr.max(axis=1, keepdims=True)
    r = np.exp(logr)
    r /= r.sum(axis=1, keepdims=True)
    score = -(r[:, :, None] * diff / s2[None, :, None]).sum(axis=1)
    return score


@dataclass
class AnalyticGMMPolicy:
    """Denoiser whose epsilon-prediction is computed exactly from a mixture;
    lets the samplers run without any learned component."""

    mixture: GaussianMixture
    schedule: NoiseSchedule
    horizon: int = 1
    state_dim: int = 2
    normalizer: Normalizer = field(default_factory=Normalizer.identity)
    map_id: str = "gmm"
    clip_clean: float | None = None

    @property
    def dim(self) -> int:
        return self.horizon * self.state_dim

    def predict_eps(self, x: np.ndarray, i: int, cond: np.ndarray | None) -> np.ndarray:
        score = gmm_score(np.atleast_2d(x), self.mixture, i, self.schedule)
        return -self.schedule.noise(i) * score


# ---------------------------------------------------------------------------
# training


def training_batch_loss(
    policy: DiffusionPolicy, x0: np.ndarray, cond: np.ndarray, rng: np.random.Generator
) -> tuple[float, np.ndarray]:
    """Noise-prediction MSE and its parameter gradient on one minibatch."""
    batch = x0.shape[0]
    sched = policy.schedule
    i = rng.integers(1, sched.n_steps + 1, size=batch)
    eta = rng.standard_normal(x0.shape)
    x_i = forward_diffuse(x0, i, eta, sched)
    emb = nn.timestep_embedding(i.astype(float), policy.emb_dim)
    inp = np.concatenate([x_i, cond, emb], axis=1)
    pred, cache = nn.forward_cached(policy.net, inp)
    target = eta if policy.predict_type == "eps" else x0
    resid = pred - target
    loss = float(np.mean(resid**2))
    cot = (2.0 / resid.size) * resid
    pgrad, _ = nn.backward(policy.net, inp, cot, cache=cache)
    return loss, pgrad


def train(
    policy: DiffusionPolicy,
    data: DemoDataset,
    steps: int,
    seed: int,
    batch: int = 256,
    lr: float = 1e-3,
    lr_min: float = 1e-5,
    warmup: int = 100,
    ema_decay: float | None = 0.999,
    log_every: int = 500,
) -> tuple[DiffusionPolicy, dict]:
    """Train the denoiser; returns the (then frozen) policy and a history dict.

    lr ramps up linearly over `warmup` steps, then follows a cosine decay to
    lr_min; the returned parameters are an exponential moving average unless
    ema_decay is None. Deterministic given (seed, dataset, config): one RNG
    drives batch selection, step levels, and noise draws in a fixed order.
    """
    if len(data) == 0:
        raise ValueError("empty demonstration dataset")
    if data.horizon != policy.horizon:
        raise ValueError("dataset horizon does not match the policy")
    x0 = policy.normalizer.normalize(data.trajectories).reshape(len(data), -1)
    cond = x0[:, : policy.state_dim]
    rng = np.random.default_rng(seed)
    state = nn.TrainState(net=policy.net, lr=lr)
    ema = policy.net.params.copy() if ema_decay is not None else None
    history: dict = {"steps": [], "loss": [], "seed": seed, "lr": lr, "batch": batch}
    for k in range(steps):
        if k < warmup:
            state.lr = lr * (k + 1) / warmup
        else:
            frac = (k - warmup) / max(steps - warmup, 1)
            state.lr = lr_min + (lr - lr_min) * 0.5 * (1.0 + np.cos(np.pi * frac))
        idx = rng.integers(0, len(data), size=batch)
        loss, pgrad = training_batch_loss(policy, x0[idx], cond[idx], rng)
        nn.opt_step(state, pgrad)
        if ema is not None:
            ema += (1.0 - ema_decay) * (policy.net.params - ema)
        if k % log_every == 0 or k == steps - 1:
            history["steps"].append(k)
            history["loss"].append(loss)
    if ema is not None:
        policy.net.params[:] = ema
    return policy, history


def eval_loss(policy: DiffusionPolicy, data: DemoDataset, seed: int, batches: int = 20) -> float:
    """Held-out noise-prediction MSE with frozen parameters."""
    x0 = policy.normalizer.normalize(data.trajectories).reshape(len(data), -1)
    cond = x0[:, : policy.state_dim]
    rng = np.random.default_rng(seed)
    losses = []
    for _ in range(batches):
        idx = rng.integers(0, len(data), size=min(256, len(data)))
        sched = policy.schedule
        i = rng.integers(1, sched.n_steps + 1, size=len(idx))
        eta = rng.standard_normal((len(idx), x0.shape[1]))
        x_i = forward_diffuse(x0[idx], i, eta, sched)
        emb = nn.timestep_embedding(i.astype(float), policy.emb_dim)
        pred = nn.forward(policy.net, np.concatenate([x_i, cond[idx], emb], axis=1))
        target = eta if policy.predict_type == "eps" else x0[idx]
        losses.append(float(np.mean((pred - target) ** 2)))
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# reverse-chain sampling


def member_rng(seed: int, member: int) -> np.random.Generator:
    """Counter-style per-batch-member stream: independent of batch size."""
    return np.random.default_rng(np.random.SeedSequence([seed, member]))


class ChainCancelled(Exception):
    pass


def reverse_chain(
    policy,
    cond: np.ndarray | None,
    batch: int,
    seed: int,
    guidance=None,
    mcmc_steps: int = 1,
    init: np.ndarray | None = None,
    snapshot_cb=None,
    cancel_cb=None,
) -> tuple[np.ndarray, list[str | None]]:
    """Run the inference-step reverse chain for a batch (normalized output).

    guidance: optional callable (x, i, k) -> additive epsilon-space term,
    evaluated alongside the denoiser at every sampling step (so M > 1 re-
    evaluates both). Members whose update turns non-finite are frozen and
    reported in the diagnostics list.
    """
    sched = policy.schedule
    rngs = [member_rng(seed, b) for b in range(batch)]
    if init is None:
        x = np.stack([r.standard_normal(policy.dim) for r in rngs])
    else:
        x = np.array(init, dtype=float)
        if x.shape != (batch, policy.dim):
            raise ValueError("init must have shape (batch, dim)")
    diagnostics: list[str | None] = [None] * batch
    alive = np.ones(batch, dtype=bool)
    steps = sched.inference_steps
    for k, i in enumerate(steps):
        if cancel_cb is not None and cancel_cb():
            raise ChainCancelled(f"cancelled before inference step {k}")
        nxt = int(steps[k + 1]) if k + 1 < len(steps) else 0
        i = int(i)
        for j in range(1, mcmc_steps + 1):
            eps = policy.predict_eps(x, i, cond)
            if guidance is not None:
                eps = eps + guidance(x, i, k)
            if j < mcmc_steps:
                eta = np.stack([r.standard_normal(policy.dim) for r in rngs])
                x_new = reverse_step(sched, x, i, i, eps, eta=eta, clip_clean=policy.clip_clean)
            else:
                x_new = reverse_step(sched, x, i, nxt, eps, clip_clean=policy.clip_clean)
            ok = np.isfinite(x_new).all(axis=1)
            newly_bad = alive & ~ok
            for b in np.nonzero(newly_bad)[0]:
                diagnostics[b] = f"non-finite update at level {i} (sampling step {j})"
            alive &= ok
            x = np.where(alive[:, None], x_new, x)
        if snapshot_cb is not None:
            snapshot_cb(k, i, x.copy())
    x = np.where(alive[:, None], x, np.nan)
    return x, diagnostics


def sample_unguided(policy, cond, batch: int, seed: int) -> np.ndarray:
    """Plain policy samples, denormalized, shape (batch, horizon, state_dim)."""
    x, _ = reverse_chain(policy, _norm_cond(policy, cond), batch, seed)
    return policy.normalizer.denormalize(x.reshape(batch, policy.horizon, policy.state_dim))


def _norm_cond(policy, cond):
    if cond is None:
        return None
    return policy.normalizer.normalize(np.asarray(cond, dtype=float))


# ---------------------------------------------------------------------------
# policy checkpoints


def save_policy(path, policy: DiffusionPolicy, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "diffusion_policy",
        "horizon": policy.horizon,
        "map_id": policy.map_id,
        "emb_dim": policy.emb_dim,
        "clip_clean": policy.clip_clean,
        "predict_type": policy.predict_type,
        "n_steps": policy.schedule.n_steps,
        "inference_steps": policy.schedule.inference_steps.tolist(),
        "bounds_lo": policy.normalizer.lo.tolist(),
        "bounds_hi": policy.normalizer.hi.tolist(),
    }
    meta.update(extra_meta or {})
    nn.save_checkpoint(path, policy.net, meta)


def load_policy(path) -> tuple[DiffusionPolicy, dict]:
    net, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "diffusion_policy":
        raise ValueError(f"{path} is not a diffusion policy checkpoint")
    sched = cosine_schedule(meta["n_steps"], len(meta["inference_steps"]))
    if sched.inference_steps.tolist() != meta["inference_steps"]:
        sched = replace(sched, inference_steps=np.asarray(meta["inference_steps"], dtype=int))
    policy = DiffusionPolicy(
        net=net,
        schedule=sched,
        horizon=meta["horizon"],
        normalizer=Normalizer(lo=np.array(meta["bounds_lo"]), hi=np.array(meta["bounds_hi"])),
        map_id=meta["map_id"],
        emb_dim=meta["emb_dim"],
        clip_clean=meta["clip_clean"],
        predict_type=meta.get("predict_type", "x0"),
    )
    return policy, meta
