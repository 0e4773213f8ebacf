"""Small feed-forward approximator with hand-written reverse-mode gradients.

Only the fixed MLP family used by the policies is supported; parameters live
in one flat float64 vector so the optimizer and checkpoints stay trivial.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC_CKPT = b"MZNET001"


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def silu_grad(x: np.ndarray) -> np.ndarray:
    s = sigmoid(x)
    return s * (1.0 + x * (1.0 - s))


def timestep_embedding(t: np.ndarray | float, dim: int, max_period: float = 10_000.0) -> np.ndarray:
    """Sinusoidal embedding of (possibly fractional) diffusion steps."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(ang), np.cos(ang)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((len(t), 1))], axis=1)
    return emb


def _param_count(widths: list[int]) -> int:
    return sum((widths[i] + 1) * widths[i + 1] for i in range(len(widths) - 1))


@dataclass
class Net:
    """MLP with SiLU hidden activations and a linear output layer."""

    widths: list[int]
    params: np.ndarray

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=np.float64)
        if self.params.shape != (_param_count(self.widths),):
            raise ValueError(
                f"expected {_param_count(self.widths)} parameters for widths "
                f"{self.widths}, got {self.params.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.widths[0]

    @property
    def out_dim(self) -> int:
        return self.widths[-1]

    def layers(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(W, b) views into the flat parameter vector."""
        out = []
        off = 0
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            w = self.params[off : off + fan_in * fan_out].reshape(fan_in, fan_out)
            off += fan_in * fan_out
            b = self.params[off : off + fan_out]
            off += fan_out
            out.append((w, b))
        return out


def init_net(widths: list[int], seed: int, zero_final: bool = True) -> Net:
    """He-style init; the final layer starts at zero so an untrained denoiser
    predicts zero noise."""
    rng = np.random.default_rng(seed)
    chunks = []
    n_layers = len(widths) - 1
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        if zero_final and i == n_layers - 1:
            w = np.zeros((fan_in, fan_out))
        else:
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
        chunks.append(w.ravel())
        chunks.append(np.zeros(fan_out))
    return Net(widths=list(widths), params=np.concatenate(chunks))


def forward(net: Net, x: np.ndarray) -> np.ndarray:
    y, _ = forward_cached(net, x)
    return y


def forward_cached(net: Net, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Forward pass returning the activation cache needed by `backward`."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input dim {h.shape[1]} != net input dim {net.in_dim}")
    layers = net.layers()
    cache = []
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        cache.append((h, z))
        h = silu(z) if i < len(layers) - 1 else z
    return (h[0] if squeeze else h), cache


def backward(
    net: Net,
    x: np.ndarray,
    cotangent: np.ndarray,
    cache: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact gradients of <output, cotangent> w.r.t. parameters and input."""
    x = np.asarray(x, dtype=np.float64)
    ct = np.asarray(cotangent, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x, ct = x[None, :], ct[None, :]
    if ct.shape != (x.shape[0], net.out_dim):
        raise ValueError("cotangent shape must match the forward output")
    if cache is None:
        _, cache = forward_cached(net, x)
    layers = net.layers()
    grads: list[np.ndarray] = [np.empty(0)] * len(layers)
    delta = ct
    for i in range(len(layers) - 1, -1, -1):
        h_in, z = cache[i]
        if i < len(layers) - 1:
            delta = delta * silu_grad(z)
        gw = h_in.T @ delta
        gb = delta.sum(axis=0)
        grads[i] = np.concatenate([gw.ravel(), gb])
        delta = delta @ layers[i][0].T
    return np.concatenate(grads), (delta[0] if squeeze else delta)


@dataclass
class TrainState:
    """Adam state over a Net's flat parameter vector (single writer)."""

    net: Net
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default=None)  # type: ignore[assignment]
    v: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros_like(self.net.params)
        if self.v is None:
            self.v = np.zeros_like(self.net.params)


def opt_step(state: TrainState, grad: np.ndarray) -> TrainState:
    """Adaptive-moment update with bias correction; mutates arrays in place."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != state.net.params.shape:
        raise ValueError("gradient shape mismatch")
    if not np.isfinite(grad).all():
        raise ValueError("non-finite gradient")
    t = state.step + 1
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grad
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * grad * grad
    mhat = state.m / (1.0 - state.beta1**t)
    vhat = state.v / (1.0 - state.beta2**t)
    state.net.params -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    state.step = t
    return state


# ---------------------------------------------------------------------------
# checkpoints


def dataset_fingerprint(trajectories: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(trajectories, dtype="<f8").tobytes()).hexdigest()[:16]


def save_checkpoint(path: str | Path, net: Net, meta: dict) -> None:
    """Binary checkpoint (magic, widths, float64 params) plus a JSON sidecar."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC_CKPT)
        f.write(struct.pack("<I", len(net.widths)))
        f.write(struct.pack(f"<{len(net.widths)}I", *net.widths))
        f.write(net.params.astype("<f8").tobytes())
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def load_checkpoint(path: str | Path) -> tuple[Net, dict]:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != MAGIC_CKPT:
            raise ValueError(f"{path} is not a network checkpoint")
        (n,) = struct.unpack("<I", f.read(4))
        widths = list(struct.unpack(f"<{n}I", f.read(4 * n)))
        params = np.frombuffer(f.read(), dtype="<f8").copy()
    sidecar = path.with_suffix(path.suffix + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return Net(widths=widths, params=params), meta
