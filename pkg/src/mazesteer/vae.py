"""Conditional-latent-variable baseline policy (MLP CVAE).

Deliberately weak latent capacity: with the default KL weight the posterior
carries little information, so prior samples decode near the conditional mean
and the policy behaves unimodally, unlike the diffusion policy.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .diffusion import Normalizer
from .maze import DemoDataset, MazeMap


@dataclass
class LatentPolicy:
    encoder: nn.Net  # flat trajectory + condition -> (mu, logvar)
    decoder: nn.Net  # latent + condition -> flat trajectory
    horizon: int
    normalizer: Normalizer
    latent_dim: int = 8
    kl_weight: float = 0.02
    map_id: str = ""

    state_dim: int = 2

    @property
    def dim(self) -> int:
        return self.horizon * self.state_dim


def make_latent_policy(
    maze: MazeMap,
    horizon: int = 64,
    latent_dim: int = 8,
    hidden: tuple[int, ...] = (256, 256),
    kl_weight: float = 0.02,
    seed: int = 0,
) -> LatentPolicy:
    dim = horizon * 2
    enc = nn.init_net([dim + 2, *hidden, 2 * latent_dim], seed=seed, zero_final=False)
    dec = nn.init_net([latent_dim + 2, *hidden, dim], seed=seed + 1, zero_final=False)
    return LatentPolicy(
        encoder=enc,
        decoder=dec,
        horizon=horizon,
        normalizer=Normalizer.for_maze(maze),
        latent_dim=latent_dim,
        kl_weight=kl_weight,
        map_id=maze.name,
    )


def _vae_batch(policy: LatentPolicy, x0: np.ndarray, cond: np.ndarray, rng):
    """One reconstruction+KL step; returns losses and both parameter grads."""
    batch = x0.shape[0]
    ld = policy.latent_dim
    enc_in = np.concatenate([x0, cond], axis=1)
    enc_out, enc_cache = nn.forward_cached(policy.encoder, enc_in)
    mu, logvar = enc_out[:, :ld], enc_out[:, ld:]
    eta = rng.standard_normal(mu.shape)
    z = mu + np.exp(0.5 * logvar) * eta
    dec_in = np.concatenate([z, cond], axis=1)
    x_hat, dec_cache = nn.forward_cached(policy.decoder, dec_in)

    resid = x_hat - x0
    recon = float(np.mean(resid**2))
    kl = float(0.5 * np.mean(np.sum(np.exp(logvar) + mu**2 - 1.0 - logvar, axis=1)))

    d_xhat = (2.0 / resid.size) * resid
    dec_grad, d_decin = nn.backward(policy.decoder, dec_in, d_xhat, cache=dec_cache)
    dz = d_decin[:, :ld]
    d_mu = dz + policy.kl_weight * mu / batch
    d_logvar = dz * 0.5 * np.exp(0.5 * logvar) * eta
    d_logvar += policy.kl_weight * 0.5 * (np.exp(logvar) - 1.0) / batch
    enc_grad, _ = nn.backward(
        policy.encoder, enc_in, np.concatenate([d_mu, d_logvar], axis=1), cache=enc_cache
    )
    return recon, kl, enc_grad, dec_grad


def train_vae(
    policy: LatentPolicy,
    data: DemoDataset,
    steps: int,
    seed: int,
    batch: int = 256,
    lr: float = 1e-3,
    log_every: int = 500,
) -> tuple[LatentPolicy, dict]:
    """Reconstruction + KL objective; deterministic given seed."""
    if len(data) == 0:
        raise ValueError("empty demonstration dataset")
    if data.horizon != policy.horizon:
        raise ValueError("dataset horizon does not match the policy")
    x0 = policy.normalizer.normalize(data.trajectories).reshape(len(data), -1)
    cond = x0[:, : policy.state_dim]
    rng = np.random.default_rng(seed)
    enc_state = nn.TrainState(net=policy.encoder, lr=lr)
    dec_state = nn.TrainState(net=policy.decoder, lr=lr)
    history: dict = {"steps": [], "recon": [], "kl": [], "seed": seed, "lr": lr}
    for k in range(steps):
        frac = k / max(steps, 1)
        cur = lr * (0.5 * (1.0 + np.cos(np.pi * frac)) + 1e-2)
        enc_state.lr = dec_state.lr = cur
        idx = rng.integers(0, len(data), size=batch)
        recon, kl, eg, dg = _vae_batch(policy, x0[idx], cond[idx], rng)
        nn.opt_step(enc_state, eg)
        nn.opt_step(dec_state, dg)
        if k % log_every == 0 or k == steps - 1:
            history["steps"].append(k)
            history["recon"].append(recon)
            history["kl"].append(kl)
    return policy, history


def sample_vae(policy: LatentPolicy, cond, batch: int, seed: int) -> np.ndarray:
    """Decode prior latents; output in workspace units, shape (B, T, 2).

    Latents come from per-member counter-based streams, so a member's sample
    does not depend on the batch size.
    """
    from .diffusion import member_rng

    cond_n = policy.normalizer.normalize(np.asarray(cond, dtype=float))
    z = np.stack(
        [member_rng(seed, b).standard_normal(policy.latent_dim) for b in range(batch)]
    )
    dec_in = np.concatenate([z, np.broadcast_to(cond_n, (batch, 2))], axis=1)
    flat = nn.forward(policy.decoder, dec_in)
    return policy.normalizer.denormalize(flat.reshape(batch, policy.horizon, 2))


def reconstruction_error(policy: LatentPolicy, data: DemoDataset, seed: int = 0) -> float:
    """Posterior-mean reconstruction MSE in normalized units."""
    x0 = policy.normalizer.normalize(data.trajectories).reshape(len(data), -1)
    cond = x0[:, : policy.state_dim]
    enc_out = nn.forward(policy.encoder, np.concatenate([x0, cond], axis=1))
    mu = enc_out[:, : policy.latent_dim]
    x_hat = nn.forward(policy.decoder, np.concatenate([mu, cond], axis=1))
    return float(np.mean((x_hat - x0) ** 2))


def save_latent_policy(path, policy: LatentPolicy, extra_meta: dict | None = None) -> None:
    """Two checkpoint files sharing one sidecar-carrying base path."""
    path = Path(path)
    meta = {
        "kind": "latent_policy",
        "horizon": policy.horizon,
        "map_id": policy.map_id,
        "latent_dim": policy.latent_dim,
        "kl_weight": policy.kl_weight,
        "bounds_lo": policy.normalizer.lo.tolist(),
        "bounds_hi": policy.normalizer.hi.tolist(),
    }
    meta.update(extra_meta or {})
    nn.save_checkpoint(path, policy.encoder, meta)
    nn.save_checkpoint(path.with_suffix(path.suffix + ".dec"), policy.decoder, {})


def load_latent_policy(path) -> tuple[LatentPolicy, dict]:
    path = Path(path)
    enc, meta = nn.load_checkpoint(path)
    if meta.get("kind") != "latent_policy":
        raise ValueError(f"{path} is not a latent policy checkpoint")
    dec, _ = nn.load_checkpoint(path.with_suffix(path.suffix + ".dec"))
    policy = LatentPolicy(
        encoder=enc,
        decoder=dec,
        horizon=meta["horizon"],
        normalizer=Normalizer(
            lo=np.array(meta["bounds_lo"]), hi=np.array(meta["bounds_hi"])
        ),
        latent_dim=meta["latent_dim"],
        kl_weight=meta["kl_weight"],
        map_id=meta["map_id"],
    )
    return policy, meta
