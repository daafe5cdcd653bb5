"""Two-stage reverse process and editing.

Stage 1 (t from T down to t_star+1) denoises conditionally, optionally
with classifier-free guidance; stage 2 (t_star down to 1) substitutes the
null condition.  In stage 2 the guidance combination of two identical
unconditional predictions equals a single one, so the model is evaluated
once per step there.

Randomness consumption per chain is fixed: one initial draw, then one
noise draw per step (ignored by the final step), then, only when editing
with a non-empty mask, one replacement draw per step.  This makes a
no-op-mask edit bit-identical to plain sampling under the same generator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError
from .model import DenoiserParams, denoise_forward, null_index
from .schedule import NoiseSchedule, ParamKind, forward_diffuse, reverse_step

__all__ = ["SamplerConfig", "cfg_combine", "reverse_chain", "two_stage_sample",
           "edit_sample", "sample_many"]


@dataclass(frozen=True)
class SamplerConfig:
    t_star: int
    guidance: float = 2.5
    kind: ParamKind | None = None     # None: take the checkpoint's parameterization
    clamp: float | None = 4.0

    def __post_init__(self):
        if self.t_star < 0:
            raise ConfigError("t_star must be >= 0")
        if self.clamp is not None and self.clamp <= 0:
            raise ConfigError("clamp must be positive or None")


def cfg_combine(pred_cond: np.ndarray, pred_uncond: np.ndarray,
                w: float) -> np.ndarray:
    """Guidance blend w * conditional + (1 - w) * unconditional."""
    if pred_cond.shape != pred_uncond.shape:
        raise ConfigError("guidance inputs must have equal shapes")
    return w * pred_cond + (1.0 - w) * pred_uncond


def reverse_chain(pred_fn, sched: NoiseSchedule, shape, g: np.random.Generator,
                  kind: ParamKind, clamp: float | None,
                  post_step=None) -> np.ndarray:
    """Full ancestral pass from unit normal down to x_0.

    ``pred_fn(x, t)`` supplies the model output; ``post_step(x, t_next, g)``
    when given may rewrite the state after each step (t_next = t - 1).
    """
    x = g.standard_normal(shape)
    for t in range(sched.T, 0, -1):
        pred = pred_fn(x, t)
        noise = g.standard_normal(shape)
        x = reverse_step(sched, x, pred, t, kind, noise, clamp)
        if post_step is not None:
            x = post_step(x, t - 1, g)
    return x


def _resolve_kind(params: DenoiserParams, scfg: SamplerConfig) -> ParamKind:
    if scfg.kind is not None and scfg.kind is not params.cfg.param_kind:
        raise ConfigError("sampler parameterization disagrees with the model")
    return params.cfg.param_kind


def _staged_pred_fn(params: DenoiserParams, c: int | None, scfg: SamplerConfig,
                    trace: list | None):
    null_i = null_index(params.cfg)

    def pred(x, t):
        cond_used = c if (c is not None and t > scfg.t_star) else None
        if trace is not None:
            trace.append((t, cond_used))
        if cond_used is None:
            return denoise_forward(params, x, t, null_i)
        if scfg.guidance == 1.0:
            return denoise_forward(params, x, t, cond_used)
        return cfg_combine(denoise_forward(params, x, t, cond_used),
                           denoise_forward(params, x, t, null_i),
                           scfg.guidance)

    return pred


def two_stage_sample(params: DenoiserParams, sched: NoiseSchedule,
                     c: int | None, scfg: SamplerConfig,
                     g: np.random.Generator, mean=None, std=None,
                     trace: list | None = None) -> np.ndarray:
    """Sample one motion; ``trace`` collects (t, condition-passed) pairs."""
    mcfg = params.cfg
    if scfg.t_star > sched.T:
        raise ConfigError(f"t_star={scfg.t_star} exceeds T={sched.T}")
    if mcfg.t_max != sched.T:
        raise ConfigError("model t_max disagrees with schedule T")
    if c is not None and not 0 <= c < mcfg.num_classes:
        raise ConfigError(f"condition {c} outside [0, {mcfg.num_classes})")
    kind = _resolve_kind(params, scfg)
    x = reverse_chain(_staged_pred_fn(params, c, scfg, trace), sched,
                      (mcfg.frames, mcfg.dim), g, kind, scfg.clamp)
    if mean is not None:
        x = x * std + mean
    return x


def edit_sample(params: DenoiserParams, sched: NoiseSchedule,
                reference: np.ndarray, mask_fixed: np.ndarray,
                c: int | None, scfg: SamplerConfig, g: np.random.Generator,
                mean=None, std=None) -> np.ndarray:
    """Sample while holding masked coordinates to a reference motion.

    ``mask_fixed`` is a [frames, dim] boolean array.  After every reverse
    step the fixed coordinates are replaced with the reference diffused to
    the current level, and the returned motion carries the raw reference
    values there, exactly.
    """
    mcfg = params.cfg
    shape = (mcfg.frames, mcfg.dim)
    if reference.shape != shape:
        raise ConfigError(f"reference must have shape {shape}")
    mask_fixed = np.asarray(mask_fixed, dtype=bool)
    if mask_fixed.shape != shape:
        raise ConfigError(f"mask must have shape {shape}")
    if scfg.t_star > sched.T:
        raise ConfigError(f"t_star={scfg.t_star} exceeds T={sched.T}")
    kind = _resolve_kind(params, scfg)
    ref_norm = reference if mean is None else (reference - mean) / std

    post = None
    if mask_fixed.any():
        def post(x, t_next, gen):
            eps_r = gen.standard_normal(shape)
            if t_next >= 1:
                repl = forward_diffuse(sched, ref_norm, t_next, eps_r)
            else:
                repl = ref_norm
            return np.where(mask_fixed, repl, x)

    x = reverse_chain(_staged_pred_fn(params, c, scfg, None), sched, shape,
                      g, kind, scfg.clamp, post_step=post)
    if mean is not None:
        x = x * std + mean
    out = np.array(x)
    out[mask_fixed] = reference[mask_fixed]
    return out


def sample_many(params: DenoiserParams, sched: NoiseSchedule, labels,
                scfg: SamplerConfig, seed: int, mean=None,
                std=None) -> np.ndarray:
    """Independent chains, one per requested label (None = unconditional).

    Chain i uses the stream derived from (seed, chain index), so any
    execution order gives identical results.
    """
    out = []
    for i, lab in enumerate(labels):
        g = rng.stream(seed, rng.K_SAMPLE, i)
        out.append(two_stage_sample(params, sched, lab, scfg, g, mean, std))
    return np.stack(out)
