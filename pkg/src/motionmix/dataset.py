"""Synthetic motion corpus, weak-supervision preparation, and file I/O.

A motion sample is a [frames, dim] float64 array.  The first two channels
are planar position, channels 2 and 3 (when present) carry first-difference
velocities with a zero leading frame, and any further channels are phase
oscillations.  Six base trajectory families are tiled across class labels;
labels beyond the sixth family reuse the family shapes at a larger spatial
scale so every class stays geometrically distinct.

Preparation splits a labeled corpus into two pools: a "noisy" pool whose
motions are corrupted by the forward diffusion kernel at a random step from
[T1, T2] (labels kept, corrupted signal becomes the ground truth), and a
"clean" pool left untouched but stripped of labels.  The naive-baseline
variant keeps labels everywhere so the two supervision regimes can be
compared on identical data.

File format (extension .mmds): magic ``MMIXDS01``, a little-endian u32
length prefix followed by a JSON header, then one length-prefixed record
per sample.  Record payload: i32 label (-1 = unannotated), u8 source
(0 = noisy pool, 1 = clean pool), i32 corruption step (-1 = uncorrupted),
then frames * dim float64 values, row-major, little-endian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import ConfigError, DataFormatError
from .schedule import NoiseSchedule, forward_diffuse

MAGIC = b"MMIXDS01"
FORMAT_VERSION = 1

SOURCE_NOISY = 0
SOURCE_CLEAN = 1

_REC_FIXED = struct.Struct("<iBi")   # label, source, corruption_step


@dataclass
class MotionExample:
    frames: np.ndarray        # [num_frames, dim] float64
    label: int                # -1 when unannotated
    source: int = SOURCE_CLEAN
    corruption_step: int = -1


@dataclass
class MixedDataset:
    """A corpus plus the preparation metadata needed to interpret it.

    ``mean``/``std`` are the per-channel statistics the motions were
    standardized with; generated or raw corpora carry zeros/ones.  T of 0
    means no diffusion semantics are attached (raw or generated data).
    """

    examples: list[MotionExample]
    num_classes: int
    num_frames: int
    dim: int
    T: int = 0
    t1: int = 0
    t2: int = 0
    noisy_ratio: float = 0.0
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    std: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.mean.size == 0:
            self.mean = np.zeros(self.dim)
        if self.std.size == 0:
            self.std = np.ones(self.dim)

    def __len__(self) -> int:
        return len(self.examples)

    def motions(self) -> np.ndarray:
        return np.stack([ex.frames for ex in self.examples])

    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def sources(self) -> np.ndarray:
        return np.array([ex.source for ex in self.examples], dtype=np.int64)


# ---------------------------------------------------------------------------
# Corpus generation

def _base_path(family: int, tau: np.ndarray, g: np.random.Generator,
               scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Planar path for one trajectory family, with per-sample jitter."""
    phase = g.uniform(0.0, 2.0 * np.pi)
    amp = scale * g.uniform(0.8, 1.2)
    speed = g.uniform(0.8, 1.2)
    heading = g.uniform(0.0, 2.0 * np.pi)
    ox, oy = g.normal(0.0, 0.1, size=2)

    if family == 0:    # straight walk with a slight perpendicular wobble
        d = amp * 2.0 * tau
        wob = 0.1 * amp * np.sin(2.0 * np.pi * speed * tau + phase)
        x = d * np.cos(heading) - wob * np.sin(heading)
        y = d * np.sin(heading) + wob * np.cos(heading)
    elif family == 1:  # circle
        ang = 2.0 * np.pi * speed * tau + phase
        x, y = amp * np.cos(ang), amp * np.sin(ang)
    elif family == 2:  # figure eight
        ang = 2.0 * np.pi * speed * tau + phase
        x, y = amp * np.sin(ang), 0.5 * amp * np.sin(2.0 * ang)
    elif family == 3:  # zigzag: one slow, wide triangle sweep
        saw = np.mod(1.2 * speed * tau + phase / (2.0 * np.pi), 1.0)
        tri = 2.0 * np.abs(2.0 * saw - 1.0) - 1.0
        x = amp * 2.0 * tau * np.cos(heading) - 0.9 * amp * tri * np.sin(heading)
        y = amp * 2.0 * tau * np.sin(heading) + 0.9 * amp * tri * np.cos(heading)
    elif family == 4:  # pacing: out-and-back sweep along a line, no net drift
        d = 1.5 * amp * np.sin(2.0 * np.pi * 0.75 * speed * tau + phase)
        x = d * np.cos(heading)
        y = d * np.sin(heading)
    else:              # outward spiral
        ang = 2.0 * np.pi * 1.5 * speed * tau + phase
        r = amp * (0.3 + 0.7 * tau)
        x, y = r * np.cos(ang), r * np.sin(ang)
    return x + ox, y + oy


def make_motion(label: int, num_frames: int, dim: int,
                g: np.random.Generator) -> np.ndarray:
    """One [num_frames, dim] motion for the given class label."""
    tau = np.linspace(0.0, 1.0, num_frames)
    family = label % 6
    scale = 1.0 + 0.35 * (label // 6)
    x, y = _base_path(family, tau, g, scale)
    out = np.zeros((num_frames, dim))
    out[:, 0] = x
    if dim >= 2:
        out[:, 1] = y
    if dim >= 3:
        out[1:, 2] = np.diff(x)
    if dim >= 4:
        out[1:, 3] = np.diff(y)
    for ch in range(4, dim):
        phase = g.uniform(0.0, 2.0 * np.pi)
        out[:, ch] = np.sin(2.0 * np.pi * (ch - 3) * tau + phase)
    return out


def generate_corpus(num_classes: int, per_class: int, num_frames: int,
                    dim: int, seed: int) -> MixedDataset:
    """Labeled clean corpus: per_class motions for each of num_classes."""
    if not 2 <= num_classes <= 16:
        raise ConfigError(f"num_classes must be in [2, 16], got {num_classes}")
    if per_class < 1:
        raise ConfigError("per_class must be >= 1")
    if num_frames < 8 or dim < 2:
        raise ConfigError("need num_frames >= 8 and dim >= 2")
    examples = []
    for k in range(num_classes):
        for j in range(per_class):
            g = rng.stream(seed, rng.K_CORPUS, k, j)
            examples.append(MotionExample(make_motion(k, num_frames, dim, g),
                                          label=k))
    return MixedDataset(examples, num_classes=num_classes,
                        num_frames=num_frames, dim=dim)


# ---------------------------------------------------------------------------
# Weak-supervision preparation

def _prepare(corpus: MixedDataset, sched: NoiseSchedule, t1: int, t2: int,
             noisy_ratio: float, seed: int, keep_clean_labels: bool) -> MixedDataset:
    if len(corpus) == 0:
        raise ConfigError("cannot prepare an empty corpus")
    if not 0.0 < noisy_ratio <= 1.0:
        raise ConfigError(f"noisy_ratio must be in (0, 1], got {noisy_ratio}")
    if not (1 <= t1 <= t2 <= sched.T):
        raise ConfigError(f"corruption range [{t1}, {t2}] invalid for T={sched.T}")
    if any(ex.label < 0 for ex in corpus.examples):
        raise ConfigError("preparation needs a fully labeled corpus")

    stacked = corpus.motions()
    mean = stacked.reshape(-1, corpus.dim).mean(axis=0)
    std = stacked.reshape(-1, corpus.dim).std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)

    n = len(corpus)
    perm = rng.stream(seed, rng.K_SHUFFLE).permutation(n)
    n_noisy = int(np.ceil(noisy_ratio * n))
    noisy_set = set(perm[:n_noisy].tolist())

    examples = []
    for i, ex in enumerate(corpus.examples):
        norm = (ex.frames - mean) / std
        if i in noisy_set:
            g = rng.stream(seed, rng.K_CORRUPT, i)
            t_c = int(g.integers(t1, t2 + 1))
            eps = g.standard_normal(norm.shape)
            corrupted = forward_diffuse(sched, norm, t_c, eps)
            examples.append(MotionExample(corrupted, label=ex.label,
                                          source=SOURCE_NOISY,
                                          corruption_step=t_c))
        else:
            label = ex.label if keep_clean_labels else -1
            examples.append(MotionExample(norm.copy(), label=label,
                                          source=SOURCE_CLEAN))
    return MixedDataset(examples, num_classes=corpus.num_classes,
                        num_frames=corpus.num_frames, dim=corpus.dim,
                        T=sched.T, t1=t1, t2=t2, noisy_ratio=noisy_ratio,
                        mean=mean, std=std)


def prepare_mixed(corpus: MixedDataset, sched: NoiseSchedule, t1: int, t2: int,
                  noisy_ratio: float, seed: int) -> MixedDataset:
    """Standard preparation: corrupted pool keeps labels, clean pool loses them."""
    return _prepare(corpus, sched, t1, t2, noisy_ratio, seed,
                    keep_clean_labels=False)


def prepare_naive_baseline(corpus: MixedDataset, sched: NoiseSchedule, t1: int,
                           t2: int, noisy_ratio: float, seed: int) -> MixedDataset:
    """Same corruption, but annotations are kept for every sample."""
    return _prepare(corpus, sched, t1, t2, noisy_ratio, seed,
                    keep_clean_labels=True)


# ---------------------------------------------------------------------------
# Binary I/O

def _header_dict(ds: MixedDataset) -> dict:
    return {
        "version": FORMAT_VERSION,
        "T": ds.T, "T1": ds.t1, "T2": ds.t2,
        "noisy_ratio": ds.noisy_ratio,
        "num_classes": ds.num_classes,
        "frames": ds.num_frames, "dim": ds.dim,
        "mean": [float(v) for v in ds.mean],
        "std": [float(v) for v in ds.std],
    }


def save_dataset(path, ds: MixedDataset) -> None:
    header = json.dumps(_header_dict(ds), sort_keys=True,
                        separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for ex in ds.examples:
            if ex.frames.shape != (ds.num_frames, ds.dim):
                raise ConfigError("example shape disagrees with dataset header")
            body = ex.frames.astype("<f8").tobytes()
            f.write(struct.pack("<I", _REC_FIXED.size + len(body)))
            f.write(_REC_FIXED.pack(ex.label, ex.source, ex.corruption_step))
            f.write(body)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise DataFormatError(f"truncated file while reading {what}")
    return buf


def load_dataset(path) -> MixedDataset:
    with open(path, "rb") as f:
        if _read_exact(f, len(MAGIC), "magic") != MAGIC:
            raise DataFormatError(f"{path}: bad magic, not a dataset file")
        (hlen,) = struct.unpack("<I", _read_exact(f, 4, "header length"))
        try:
            header = json.loads(_read_exact(f, hlen, "header"))
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: header is not valid JSON") from e
        required = {"version", "T", "T1", "T2", "noisy_ratio", "num_classes",
                    "frames", "dim", "mean", "std"}
        missing = required - header.keys()
        if missing:
            raise DataFormatError(f"{path}: header missing {sorted(missing)}")
        if header["version"] != FORMAT_VERSION:
            raise DataFormatError(f"{path}: unsupported version {header['version']}")
        nf, dim = int(header["frames"]), int(header["dim"])
        T, k = int(header["T"]), int(header["num_classes"])
        mean, std = np.asarray(header["mean"], float), np.asarray(header["std"], float)
        if mean.shape != (dim,) or std.shape != (dim,):
            raise DataFormatError(f"{path}: normalization arrays must have length dim")
        body_len = nf * dim * 8
        examples = []
        while True:
            prefix = f.read(4)
            if not prefix:
                break
            if len(prefix) != 4:
                raise DataFormatError(f"{path}: truncated record prefix")
            (rlen,) = struct.unpack("<I", prefix)
            if rlen != _REC_FIXED.size + body_len:
                raise DataFormatError(
                    f"{path}: record {len(examples)} has length {rlen}, "
                    f"expected {_REC_FIXED.size + body_len}")
            raw = _read_exact(f, rlen, f"record {len(examples)}")
            label, source, cstep = _REC_FIXED.unpack_from(raw)
            if source not in (SOURCE_NOISY, SOURCE_CLEAN):
                raise DataFormatError(f"{path}: record {len(examples)} bad source {source}")
            if not -1 <= label < k:
                raise DataFormatError(f"{path}: record {len(examples)} bad label {label}")
            if cstep != -1 and not 1 <= cstep <= T:
                raise DataFormatError(
                    f"{path}: record {len(examples)} corruption step {cstep} "
                    f"outside [1, {T}]")
            frames = np.frombuffer(raw[_REC_FIXED.size:], dtype="<f8").reshape(nf, dim)
            examples.append(MotionExample(frames.astype(float), label=label,
                                          source=source, corruption_step=cstep))
    return MixedDataset(examples, num_classes=k, num_frames=nf, dim=dim,
                        T=T, t1=int(header["T1"]), t2=int(header["T2"]),
                        noisy_ratio=float(header["noisy_ratio"]),
                        mean=mean, std=std)


def save_motions(path, motions: np.ndarray, labels, num_classes: int) -> None:
    """Store raw or generated motions with no preparation metadata."""
    motions = np.asarray(motions, float)
    if motions.ndim != 3:
        raise ConfigError("motions must have shape [n, frames, dim]")
    labels = np.asarray(labels, dtype=np.int64)
    examples = [MotionExample(m, label=int(l)) for m, l in zip(motions, labels)]
    ds = MixedDataset(examples, num_classes=num_classes,
                      num_frames=motions.shape[1], dim=motions.shape[2])
    save_dataset(path, ds)
