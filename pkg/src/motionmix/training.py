"""Mixed-supervision training loop and its optimizer.

The pivot t_star splits the chain into two regimes: corrupted annotated
samples only ever see timesteps in [t_star+1, T], clean unannotated ones
only [1, t_star].  Batches are stratified to the dataset's pool ratio so
both regimes receive gradient signal every step.  Condition dropout (for
classifier-free guidance) applies to annotated examples only; a null
condition passes through untouched.

Every step consumes randomness from its own derived stream in a fixed
order (batch indices, timesteps, dropout, noise), so runs are bit
reproducible for a given seed regardless of logging cadence.

Checkpoint format (extension .mmck): magic ``MMIXCK01``, little-endian u32
length prefix, JSON header {version, config, step, t_star, schedule,
mean, std}, then every parameter tensor as raw float64 little-endian in
the canonical order given by ``model.param_shapes``.
"""
from __future__ import annotations

import json
import logging
import struct
import time
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .dataset import SOURCE_CLEAN, SOURCE_NOISY, MixedDataset
from .errors import ConfigError, DataFormatError, NumericsError
from .model import (DenoiserConfig, DenoiserParams, init_params,
                    mse_loss_and_grad, null_index, param_shapes)
from .schedule import (NoiseSchedule, ParamKind, forward_diffuse,
                       schedule_from_betas)

logger = logging.getLogger(__name__)

CKPT_MAGIC = b"MMIXCK01"
CKPT_VERSION = 1


# ---------------------------------------------------------------------------
# Adam

@dataclass
class OptimizerState:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_init(tensors: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> OptimizerState:
    return OptimizerState(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                          m={k: np.zeros_like(x) for k, x in tensors.items()},
                          v={k: np.zeros_like(x) for k, x in tensors.items()})


def adam_step(tensors: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              st: OptimizerState) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One bias-corrected Adam update.  Purely functional."""
    t = st.step + 1
    c1 = 1.0 - st.beta1 ** t
    c2 = 1.0 - st.beta2 ** t
    new_t, new_m, new_v = {}, {}, {}
    for k, x in tensors.items():
        g = grads[k]
        if g.shape != x.shape:
            raise ConfigError(f"gradient shape mismatch for {k}")
        m = st.beta1 * st.m[k] + (1.0 - st.beta1) * g
        v = st.beta2 * st.v[k] + (1.0 - st.beta2) * g * g
        new_t[k] = x - st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
        new_m[k], new_v[k] = m, v
    return new_t, OptimizerState(lr=st.lr, beta1=st.beta1, beta2=st.beta2,
                                 eps=st.eps, step=t, m=new_m, v=new_v)


# ---------------------------------------------------------------------------
# Per-example training operations

def sample_timestep(source: int, t_star: int, T: int,
                    g: np.random.Generator) -> int:
    """Uniform timestep from the range the source is confined to.

    Corrupted annotated data trains the high-noise stage [t_star+1, T];
    clean unannotated data trains the refinement stage [1, t_star].
    """
    lo, hi = timestep_range(source, t_star, T)
    return int(g.integers(lo, hi + 1))


def timestep_range(source: int, t_star: int, T: int) -> tuple[int, int]:
    if source == SOURCE_NOISY:
        if t_star >= T:
            raise ConfigError(f"empty timestep range for noisy data at t_star={t_star}")
        return t_star + 1, T
    if source == SOURCE_CLEAN:
        if t_star < 1:
            raise ConfigError("empty timestep range for clean data at t_star=0")
        return 1, t_star
    raise ConfigError(f"unknown source tag {source}")


def apply_cfg_dropout(c: int | None, prob: float,
                      g: np.random.Generator) -> int | None:
    """Replace an annotated condition with null with the given probability.

    A null condition passes through unchanged and consumes no randomness.
    """
    if not 0.0 <= prob < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {prob}")
    if c is None:
        return None
    return None if g.random() < prob else c


def make_train_target(motion: np.ndarray, t: int, sched: NoiseSchedule,
                      kind: ParamKind, g: np.random.Generator):
    """Draw fresh noise, diffuse to step t, and pick the regression target."""
    eps = g.standard_normal(motion.shape)
    x_t = forward_diffuse(sched, motion, t, eps)
    target = motion if kind is ParamKind.PREDICT_X0 else eps
    return x_t, target


# ---------------------------------------------------------------------------
# Training loop

@dataclass
class TrainConfig:
    t_star: int
    steps: int
    batch_size: int = 64
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    cfg_mask_prob: float = 0.1
    param_kind: ParamKind = ParamKind.PREDICT_X0
    seed: int = 0
    log_every: int = 50
    checkpoint_every: int = 0       # 0: only the final checkpoint
    checkpoint_dir: str | None = None
    full_range: bool = False        # baseline mode: every source draws t from [1, T]

    def __post_init__(self):
        if self.t_star < 0:
            raise ConfigError("t_star must be >= 0")
        if self.steps < 1 or self.batch_size < 1 or self.log_every < 1:
            raise ConfigError("steps, batch_size and log_every must be >= 1")
        if not 0.0 <= self.cfg_mask_prob < 1.0:
            raise ConfigError("cfg_mask_prob must be in [0, 1)")


@dataclass
class TrainLog:
    """Loss curve plus the (source, t) instrumentation trail.

    ``sources``/``ts`` record every training example's pool tag and drawn
    timestep in batch order, which is what the partition audit consumes.
    """

    rows: list[tuple[int, float, float, float]] = field(default_factory=list)
    sources: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int8))
    ts: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int32))

    def write_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("step,loss,noisy_frac,wall_ms\n")
            for step, loss, frac, ms in self.rows:
                f.write(f"{step},{loss:.10g},{frac:.6g},{ms:.6g}\n")


def _batch_counts(batch_size: int, n_noisy: int, n_clean: int) -> tuple[int, int]:
    """Stratified split of one batch, honoring the pool ratio rounded."""
    n = n_noisy + n_clean
    bn = int(round(batch_size * n_noisy / n))
    if n_noisy > 0:
        bn = max(bn, 1)
    if n_clean > 0:
        bn = min(bn, batch_size - 1)
    if n_noisy == 0:
        bn = 0
    return bn, batch_size - bn


def train(cfg: TrainConfig, ds: MixedDataset, sched: NoiseSchedule,
          model_cfg: DenoiserConfig | None = None):
    """Run the mixed-supervision loop; returns (params, log)."""
    if len(ds) == 0:
        raise ConfigError("dataset is empty")
    if cfg.t_star > sched.T:
        raise ConfigError(f"t_star={cfg.t_star} exceeds T={sched.T}")
    if model_cfg is None:
        model_cfg = DenoiserConfig(frames=ds.num_frames, dim=ds.dim,
                                   num_classes=ds.num_classes,
                                   t_max=sched.T, param_kind=cfg.param_kind)
    if (model_cfg.frames, model_cfg.dim) != (ds.num_frames, ds.dim):
        raise ConfigError("model shape disagrees with dataset")
    if model_cfg.num_classes != ds.num_classes:
        raise ConfigError("model class count disagrees with dataset")
    if model_cfg.t_max != sched.T:
        raise ConfigError("model t_max disagrees with schedule T")
    if model_cfg.param_kind is not cfg.param_kind:
        raise ConfigError("model and training parameterizations disagree")

    motions = ds.motions()
    labels = ds.labels()
    sources = ds.sources()
    noisy_idx = np.flatnonzero(sources == SOURCE_NOISY)
    clean_idx = np.flatnonzero(sources == SOURCE_CLEAN)

    if not cfg.full_range:
        if cfg.t_star >= sched.T and len(noisy_idx) > 0:
            raise ConfigError(
                f"t_star={cfg.t_star} leaves no timesteps for noisy data (T={sched.T})")
        if cfg.t_star == 0 and len(clean_idx) > 0:
            logger.warning(
                "t_star=0 leaves no timesteps for clean data; excluding %d "
                "clean examples and training conditionally on the rest",
                len(clean_idx))
            clean_idx = np.zeros(0, dtype=np.int64)
            if len(noisy_idx) == 0:
                raise ConfigError("no trainable examples left at t_star=0")

    null_i = null_index(model_cfg)
    cond = np.where(labels >= 0, labels, null_i)
    B = cfg.batch_size
    N, D = ds.num_frames, ds.dim
    bn, bc = _batch_counts(B, len(noisy_idx), len(clean_idx))

    params = init_params(model_cfg, rng.stream(cfg.seed, rng.K_INIT))
    opt = adam_init(params.tensors, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    log = TrainLog()
    all_sources = np.empty(cfg.steps * B, dtype=np.int8)
    all_ts = np.empty(cfg.steps * B, dtype=np.int32)

    if cfg.full_range:
        lo_n = lo_c = 1
        hi_n = hi_c = sched.T
    else:
        lo_n, hi_n = (cfg.t_star + 1, sched.T) if bn else (1, 1)
        lo_c, hi_c = (1, cfg.t_star) if bc else (1, 1)

    for step in range(1, cfg.steps + 1):
        t0 = time.perf_counter()
        g = rng.stream(cfg.seed, rng.K_TRAIN, step)

        # Fixed consumption order: indices, timesteps, dropout, noise.
        parts_idx = []
        if bn:
            parts_idx.append(noisy_idx[g.integers(0, len(noisy_idx), bn)])
        if bc:
            parts_idx.append(clean_idx[g.integers(0, len(clean_idx), bc)])
        idx = np.concatenate(parts_idx)
        parts_t = []
        if bn:
            parts_t.append(g.integers(lo_n, hi_n + 1, bn))
        if bc:
            parts_t.append(g.integers(lo_c, hi_c + 1, bc))
        ts = np.concatenate(parts_t).astype(np.int64)

        ci = cond[idx].copy()
        lab = np.flatnonzero(ci != null_i)
        if lab.size and cfg.cfg_mask_prob > 0.0:
            drop = g.random(lab.size) < cfg.cfg_mask_prob
            ci[lab[drop]] = null_i
        eps = g.standard_normal((B, N, D))

        x0 = motions[idx]
        ab = sched.alpha_bars[ts][:, None, None]
        x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps
        target = x0 if cfg.param_kind is ParamKind.PREDICT_X0 else eps

        F = model_cfg.feature_size
        loss, grads = mse_loss_and_grad(params, x_t.reshape(B, F), ts, ci,
                                        target.reshape(B, F))
        if not np.isfinite(loss):
            raise NumericsError(
                f"non-finite loss {loss} at step {step} (lr={cfg.lr}, "
                f"t_star={cfg.t_star})")
        new_tensors, opt = adam_step(params.tensors, grads, opt)
        params = DenoiserParams(model_cfg, new_tensors)

        all_sources[(step - 1) * B:step * B] = sources[idx]
        all_ts[(step - 1) * B:step * B] = ts
        if step == 1 or step == cfg.steps or step % cfg.log_every == 0:
            ms = (time.perf_counter() - t0) * 1e3
            log.rows.append((step, loss, bn / B, ms))
        if cfg.checkpoint_dir and cfg.checkpoint_every and \
                step % cfg.checkpoint_every == 0 and step != cfg.steps:
            save_checkpoint(f"{cfg.checkpoint_dir}/ckpt_{step}.mmck", params,
                            step, cfg.t_star, sched, ds.mean, ds.std)

    log.sources = all_sources
    log.ts = all_ts
    if cfg.checkpoint_dir:
        save_checkpoint(f"{cfg.checkpoint_dir}/ckpt_{cfg.steps}.mmck", params,
                        cfg.steps, cfg.t_star, sched, ds.mean, ds.std)
    return params, log


# ---------------------------------------------------------------------------
# Checkpoints

def save_checkpoint(path, params: DenoiserParams, step: int, t_star: int,
                    sched: NoiseSchedule, mean=None, std=None) -> None:
    cfg = params.cfg
    header = {
        "version": CKPT_VERSION,
        "config": cfg.to_dict(),
        "step": int(step),
        "t_star": int(t_star),
        "schedule": {"T": sched.T, "betas": [float(b) for b in sched.betas[1:]]},
        "mean": [float(v) for v in (mean if mean is not None else np.zeros(cfg.dim))],
        "std": [float(v) for v in (std if std is not None else np.ones(cfg.dim))],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        for name in param_shapes(cfg):
            f.write(params.tensors[name].astype("<f8").tobytes())


def load_checkpoint(path) -> tuple[DenoiserParams, dict]:
    """Returns (params, meta); meta holds step, t_star, sched, mean, std."""
    with open(path, "rb") as f:
        magic = f.read(len(CKPT_MAGIC))
        if magic != CKPT_MAGIC:
            raise DataFormatError(f"{path}: bad magic, not a checkpoint")
        raw = f.read(4)
        if len(raw) != 4:
            raise DataFormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack("<I", raw)
        blob = f.read(hlen)
        if len(blob) != hlen:
            raise DataFormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: header is not valid JSON") from e
        required = {"version", "config", "step", "t_star", "schedule", "mean", "std"}
        missing = required - header.keys()
        if missing:
            raise DataFormatError(f"{path}: header missing {sorted(missing)}")
        if header["version"] != CKPT_VERSION:
            raise DataFormatError(f"{path}: unsupported version {header['version']}")
        try:
            cfg = DenoiserConfig.from_dict(header["config"])
        except (TypeError, KeyError, ValueError) as e:
            raise DataFormatError(f"{path}: bad config: {e}") from e
        shapes = param_shapes(cfg)
        body = f.read()
    expected = sum(int(np.prod(s)) for s in shapes.values()) * 8
    if len(body) != expected:
        raise DataFormatError(
            f"{path}: tensor payload is {len(body)} bytes, expected {expected}")
    tensors, off = {}, 0
    for name, shape in shapes.items():
        size = int(np.prod(shape)) * 8
        tensors[name] = np.frombuffer(body[off:off + size],
                                      dtype="<f8").reshape(shape).astype(float)
        off += size
    sched = schedule_from_betas(header["schedule"]["betas"])
    if sched.T != int(header["schedule"]["T"]):
        raise DataFormatError(f"{path}: schedule length disagrees with its betas")
    meta = {"step": int(header["step"]), "t_star": int(header["t_star"]),
            "sched": sched, "mean": np.asarray(header["mean"], float),
            "std": np.asarray(header["std"], float)}
    return DenoiserParams(cfg, tensors), meta
