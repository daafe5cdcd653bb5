"""Residual MLP denoiser with exact analytic gradients.

The network maps a flattened motion sequence plus a timestep embedding and
a class-condition embedding to an output of the same size as the input.
Everything is float64 numpy; the backward pass is written out by hand so
it can be checked coordinate-by-coordinate against finite differences.

Architecture, for input feature size F and width H:

    h = x @ w_in + b_in + emb(t) @ w_time + b_time + cond[ci]
    repeat num_blocks times:
        h = h + silu(h @ w1 + b1) @ w2 + b2
    y = h @ w_out + b_out

The condition table has num_classes + 1 rows; the last row is the null
condition used for unconditional prediction and classifier-free guidance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .schedule import ParamKind

__all__ = [
    "DenoiserConfig", "DenoiserParams", "param_shapes", "init_params",
    "time_embedding", "denoise_forward", "denoise_batch", "mse_loss_and_grad",
    "null_index",
]


@dataclass(frozen=True)
class DenoiserConfig:
    frames: int
    dim: int
    num_classes: int
    hidden_width: int = 128
    num_blocks: int = 2
    time_embed_dim: int = 32
    t_max: int = 100
    param_kind: ParamKind = ParamKind.PREDICT_X0

    def __post_init__(self):
        if min(self.frames, self.dim, self.num_classes, self.num_blocks,
               self.t_max) < 1:
            raise ConfigError("all denoiser dimensions must be >= 1")
        if self.hidden_width < 8:
            raise ConfigError("hidden_width must be >= 8")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ConfigError("time_embed_dim must be even and >= 2")
        if not isinstance(self.param_kind, ParamKind):
            raise ConfigError("param_kind must be a ParamKind")

    @property
    def feature_size(self) -> int:
        return self.frames * self.dim

    def to_dict(self) -> dict:
        return {"frames": self.frames, "dim": self.dim,
                "num_classes": self.num_classes,
                "hidden_width": self.hidden_width,
                "num_blocks": self.num_blocks,
                "time_embed_dim": self.time_embed_dim,
                "t_max": self.t_max, "param_kind": self.param_kind.value}

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        d = dict(d)
        d["param_kind"] = ParamKind(d["param_kind"])
        return cls(**d)


def param_shapes(cfg: DenoiserConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes, in serialization order."""
    F, H, E = cfg.feature_size, cfg.hidden_width, cfg.time_embed_dim
    shapes: dict[str, tuple[int, ...]] = {"w_in": (F, H), "b_in": (H,)}
    for i in range(cfg.num_blocks):
        shapes[f"blocks.{i}.w1"] = (H, H)
        shapes[f"blocks.{i}.b1"] = (H,)
        shapes[f"blocks.{i}.w2"] = (H, H)
        shapes[f"blocks.{i}.b2"] = (H,)
    shapes["w_out"] = (H, F)
    shapes["b_out"] = (F,)
    shapes["cond"] = (cfg.num_classes + 1, H)
    shapes["w_time"] = (E, H)
    shapes["b_time"] = (H,)
    return shapes


@dataclass
class DenoiserParams:
    cfg: DenoiserConfig
    tensors: dict[str, np.ndarray]

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.cfg, {k: v.copy() for k, v in self.tensors.items()})


def null_index(cfg: DenoiserConfig) -> int:
    return cfg.num_classes


def init_params(cfg: DenoiserConfig, rng: np.random.Generator) -> DenoiserParams:
    """Fan-in-scaled uniform init for matrices, zeros for biases.

    Draws happen in serialization order so a given generator state always
    produces the same parameters.
    """
    tensors: dict[str, np.ndarray] = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            tensors[name] = np.zeros(shape)
        else:
            fan_in = shape[0] if name != "cond" else cfg.hidden_width
            bound = 1.0 / np.sqrt(fan_in)
            tensors[name] = rng.uniform(-bound, bound, size=shape)
    return DenoiserParams(cfg, tensors)


def time_embedding(cfg: DenoiserConfig, t: np.ndarray) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape [B, time_embed_dim].

    Frequencies are log-spaced so the slowest component sweeps [0, 1]
    radians over the chain and the fastest sweeps t_max radians.
    """
    half = cfg.time_embed_dim // 2
    freqs = np.geomspace(1.0, float(cfg.t_max), half)
    ang = np.asarray(t, dtype=float)[:, None] * freqs[None, :] / cfg.t_max
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = 1.0 / (1.0 + np.exp(-u))
    return u * s, s


def _forward(params: DenoiserParams, x: np.ndarray, t: np.ndarray,
             ci: np.ndarray):
    """Shared forward pass; returns output plus the cache backward needs."""
    cfg, p = params.cfg, params.tensors
    if x.ndim != 2 or x.shape[1] != cfg.feature_size:
        raise ConfigError(f"expected input [B, {cfg.feature_size}], got {x.shape}")
    ci = np.asarray(ci)
    if ci.min() < 0 or ci.max() > cfg.num_classes:
        raise ConfigError("condition index outside [0, num_classes]")
    emb = time_embedding(cfg, t)
    h = x @ p["w_in"] + p["b_in"] + emb @ p["w_time"] + p["b_time"] + p["cond"][ci]
    cache = {"x": x, "emb": emb, "ci": ci, "h_in": [], "u": [], "a": [], "s": []}
    for i in range(cfg.num_blocks):
        u = h @ p[f"blocks.{i}.w1"] + p[f"blocks.{i}.b1"]
        a, s = _silu(u)
        cache["h_in"].append(h)
        cache["u"].append(u)
        cache["a"].append(a)
        cache["s"].append(s)
        h = h + a @ p[f"blocks.{i}.w2"] + p[f"blocks.{i}.b2"]
    cache["h_last"] = h
    y = h @ p["w_out"] + p["b_out"]
    return y, cache


def denoise_batch(params: DenoiserParams, x: np.ndarray, t: np.ndarray,
                  ci: np.ndarray) -> np.ndarray:
    """Batched prediction: x [B, F], t [B] ints, ci [B] condition rows."""
    y, _ = _forward(params, x, t, ci)
    return y


def denoise_forward(params: DenoiserParams, x_seq: np.ndarray, t: int,
                    ci: int) -> np.ndarray:
    """Single-sequence prediction: x_seq [frames, dim] in, same shape out."""
    cfg = params.cfg
    flat = x_seq.reshape(1, cfg.feature_size)
    y = denoise_batch(params, flat, np.array([t]), np.array([ci]))
    return y.reshape(cfg.frames, cfg.dim)


def mse_loss_and_grad(params: DenoiserParams, x: np.ndarray, t: np.ndarray,
                      ci: np.ndarray, target: np.ndarray):
    """Mean-squared error over all elements, with exact gradients.

    Returns (loss, grads) where grads has the same keys and shapes as the
    parameter tensors.
    """
    cfg, p = params.cfg, params.tensors
    y, cache = _forward(params, x, t, ci)
    B, F = y.shape
    diff = y - target
    loss = float(np.mean(diff * diff))

    g = {name: np.zeros_like(arr) for name, arr in p.items()}
    gy = (2.0 / (B * F)) * diff
    g["w_out"] = cache["h_last"].T @ gy
    g["b_out"] = gy.sum(axis=0)
    gh = gy @ p["w_out"].T
    for i in reversed(range(cfg.num_blocks)):
        u, a, s, h_in = cache["u"][i], cache["a"][i], cache["s"][i], cache["h_in"][i]
        g[f"blocks.{i}.b2"] = gh.sum(axis=0)
        g[f"blocks.{i}.w2"] = a.T @ gh
        ga = gh @ p[f"blocks.{i}.w2"].T
        # d silu(u)/du = s * (1 + u * (1 - s))
        gu = ga * s * (1.0 + u * (1.0 - s))
        g[f"blocks.{i}.b1"] = gu.sum(axis=0)
        g[f"blocks.{i}.w1"] = h_in.T @ gu
        gh = gh + gu @ p[f"blocks.{i}.w1"].T
    g["w_in"] = cache["x"].T @ gh
    g["b_in"] = gh.sum(axis=0)
    g["w_time"] = cache["emb"].T @ gh
    g["b_time"] = gh.sum(axis=0)
    np.add.at(g["cond"], cache["ci"], gh)
    return loss, g
