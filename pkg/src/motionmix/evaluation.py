"""Feature extractor and distribution metrics for generated motions.

A one-hidden-layer tanh classifier is trained on the real labeled corpus;
its hidden activations are the feature map every metric operates in.
Metrics: Fréchet distance between Gaussian fits of feature clouds,
classification accuracy of generated samples against their intended
condition, mean pairwise feature distance (diversity) and its
within-condition average (multimodality).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, NumericsError
from .training import adam_init, adam_step

__all__ = ["ExtractorParams", "MetricsReport", "train_feature_extractor",
           "extract_features", "predict_labels", "accuracy",
           "frechet_distance", "diversity", "multimodality",
           "evaluate_samples", "repeat_evaluate", "METRICS_CSV_HEADER"]


@dataclass
class ExtractorParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    in_mean: np.ndarray
    in_std: np.ndarray
    trained: bool = False

    @property
    def feature_dim(self) -> int:
        return self.w1.shape[1]


def _flatten(motions: np.ndarray) -> np.ndarray:
    motions = np.asarray(motions, float)
    if motions.ndim != 3:
        raise ConfigError("motions must have shape [n, frames, dim]")
    return motions.reshape(len(motions), -1)


def _extractor_forward(ep: ExtractorParams, flat: np.ndarray):
    xn = (flat - ep.in_mean) / ep.in_std
    h = np.tanh(xn @ ep.w1 + ep.b1)
    return h, h @ ep.w2 + ep.b2


def _fit_extractor(flat: np.ndarray, labels: np.ndarray, present: np.ndarray,
                   num_classes: int, g: np.random.Generator, hidden: int,
                   max_steps: int, lr: float, target_acc: float):
    """One stratified split + full-batch run; (params, best held-out acc)."""
    train_idx, test_idx = [], []
    for k in present:
        idx = np.flatnonzero(labels == k)
        idx = idx[g.permutation(idx.size)]
        cut = int(round(0.8 * idx.size))
        train_idx.append(idx[:cut])
        test_idx.append(idx[cut:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)

    F = flat.shape[1]
    mu = flat[train_idx].mean(axis=0)
    sd = flat[train_idx].std(axis=0)
    sd = np.where(sd < 1e-12, 1.0, sd)
    tensors = {"w1": g.uniform(-1, 1, (F, hidden)) / np.sqrt(F),
               "b1": np.zeros(hidden),
               "w2": g.uniform(-1, 1, (hidden, num_classes)) / np.sqrt(hidden),
               "b2": np.zeros(num_classes)}

    xtr, ytr = flat[train_idx], labels[train_idx]
    xte, yte = flat[test_idx], labels[test_idx]
    onehot = np.eye(num_classes)[ytr]
    opt = adam_init(tensors, lr)
    best = 0.0
    for step in range(1, max_steps + 1):
        xn = (xtr - mu) / sd
        h = np.tanh(xn @ tensors["w1"] + tensors["b1"])
        logits = h @ tensors["w2"] + tensors["b2"]
        z = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        dlogit = (p - onehot) / len(xtr)
        grads = {"w2": h.T @ dlogit, "b2": dlogit.sum(axis=0)}
        dh = dlogit @ tensors["w2"].T
        dz1 = dh * (1.0 - h * h)
        grads["w1"] = xn.T @ dz1
        grads["b1"] = dz1.sum(axis=0)
        tensors, opt = adam_step(tensors, grads, opt)
        if step % 100 == 0 or step == max_steps:
            ep = ExtractorParams(tensors["w1"], tensors["b1"], tensors["w2"],
                                 tensors["b2"], mu, sd, trained=True)
            _, lte = _extractor_forward(ep, xte)
            best = max(best, float(np.mean(lte.argmax(axis=1) == yte)))
            if best >= target_acc:
                return ep, best
    return None, best


def train_feature_extractor(motions: np.ndarray, labels: np.ndarray,
                            num_classes: int, seed: int, hidden: int = 32,
                            max_steps: int = 3000, lr: float = 0.02,
                            target_acc: float = 0.95,
                            restarts: int = 3) -> ExtractorParams:
    """Full-batch softmax training to a held-out accuracy threshold.

    A stratified 80/20 split is derived from the seed; training stops as
    soon as held-out accuracy reaches target_acc.  An occasional init
    lands in a basin the step budget cannot escape, so a run that falls
    short restarts (deterministically re-keyed) up to `restarts` times
    before failing loudly.
    """
    flat = _flatten(motions)
    labels = np.asarray(labels, dtype=np.int64)
    if len(flat) != len(labels):
        raise ConfigError("motions and labels disagree in length")
    present = np.unique(labels)
    if present.size < 2:
        raise ConfigError("need at least 2 classes to train an extractor")
    if present.min() < 0 or present.max() >= num_classes:
        raise ConfigError("labels outside [0, num_classes)")
    for k in present:
        n_k = int(np.sum(labels == k))
        if n_k < 20:
            raise ConfigError(f"class {k} has {n_k} examples, need >= 20")

    best = 0.0
    for attempt in range(max(1, restarts)):
        keys = (rng.K_EXTRACTOR,) if attempt == 0 else (rng.K_EXTRACTOR, attempt)
        ep, acc = _fit_extractor(flat, labels, present, num_classes,
                                 rng.stream(seed, *keys), hidden, max_steps,
                                 lr, target_acc)
        if ep is not None:
            return ep
        best = max(best, acc)
    raise NumericsError(
        f"extractor stalled below {target_acc:.0%} held-out accuracy "
        f"(best {best:.3f} over {max(1, restarts)} runs of {max_steps} steps)")


def extract_features(ep: ExtractorParams, motions: np.ndarray) -> np.ndarray:
    if not ep.trained:
        raise ConfigError("extractor has not been trained")
    h, _ = _extractor_forward(ep, _flatten(motions))
    return h


def predict_labels(ep: ExtractorParams, motions: np.ndarray) -> np.ndarray:
    if not ep.trained:
        raise ConfigError("extractor has not been trained")
    _, logits = _extractor_forward(ep, _flatten(motions))
    return logits.argmax(axis=1)


def accuracy(ep: ExtractorParams, motions: np.ndarray, labels) -> float:
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ConfigError("accuracy over an empty set is undefined")
    if labels.min() < 0 or labels.max() >= ep.w2.shape[1]:
        raise ConfigError("labels outside the extractor's class range")
    return float(np.mean(predict_labels(ep, motions) == labels))


# ---------------------------------------------------------------------------
# Distribution metrics

def _cov_mean(feats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n, F = feats.shape
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False)
    cov = np.atleast_2d(cov)
    # desk-scale sample counts: stabilize when the cloud is small
    if n < 4 * F:
        cov = cov + 1e-6 * np.eye(F)
    return mu, cov


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    m = (m + m.T) / 2.0
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(feats_a: np.ndarray, feats_b: np.ndarray) -> float:
    """Fréchet distance between Gaussian fits of two feature clouds."""
    feats_a, feats_b = np.asarray(feats_a, float), np.asarray(feats_b, float)
    if feats_a.ndim != 2 or feats_b.ndim != 2 or feats_a.shape[1] != feats_b.shape[1]:
        raise ConfigError("feature sets must be 2-d with equal width")
    if len(feats_a) < 2 or len(feats_b) < 2:
        raise ConfigError("need at least 2 feature rows per set")
    mu_a, cov_a = _cov_mean(feats_a)
    mu_b, cov_b = _cov_mean(feats_b)
    root_a = _psd_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    inner = (inner + inner.T) / 2.0
    eig = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    tr_sqrt = float(np.sum(np.sqrt(eig)))
    d = mu_a - mu_b
    return float(d @ d + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_sqrt)


def diversity(feats: np.ndarray, num_pairs: int, g: np.random.Generator) -> float:
    """Mean distance between num_pairs disjoint random feature pairs."""
    feats = np.asarray(feats, float)
    if num_pairs < 1:
        raise ConfigError("num_pairs must be >= 1")
    if len(feats) < 2 * num_pairs:
        raise ConfigError(
            f"need >= {2 * num_pairs} features for {num_pairs} disjoint pairs")
    perm = g.permutation(len(feats))
    a = feats[perm[:num_pairs]]
    b = feats[perm[num_pairs:2 * num_pairs]]
    return float(np.mean(np.linalg.norm(a - b, axis=1)))


def multimodality(per_condition_feats: list[np.ndarray], pairs_per_condition: int,
                  g: np.random.Generator) -> float:
    """Average within-condition diversity across condition sets."""
    if not per_condition_feats:
        raise ConfigError("need at least one condition set")
    return float(np.mean([diversity(f, pairs_per_condition, g)
                          for f in per_condition_feats]))


# ---------------------------------------------------------------------------
# Reports

METRICS_CSV_HEADER = ("seed,fid,accuracy,diversity,multimodality,"
                      "n_real,n_gen,num_pairs,pairs_per_condition")


@dataclass
class MetricsReport:
    fid: float
    accuracy: float
    diversity: float
    multimodality: float
    n_real: int
    n_gen: int
    num_pairs: int
    pairs_per_condition: int
    seed: int

    def __post_init__(self):
        vals = (self.fid, self.accuracy, self.diversity, self.multimodality)
        if not all(np.isfinite(v) for v in vals):
            raise NumericsError(f"non-finite metric in report: {vals}")

    def csv_row(self) -> str:
        return (f"{self.seed},{self.fid:.10g},{self.accuracy:.10g},"
                f"{self.diversity:.10g},{self.multimodality:.10g},"
                f"{self.n_real},{self.n_gen},{self.num_pairs},"
                f"{self.pairs_per_condition}")

    def table(self) -> str:
        rows = [("fid", f"{self.fid:.4f}"),
                ("accuracy", f"{self.accuracy:.4f}"),
                ("diversity", f"{self.diversity:.4f}"),
                ("multimodality", f"{self.multimodality:.4f}"),
                ("n_real / n_gen", f"{self.n_real} / {self.n_gen}"),
                ("seed", str(self.seed))]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


def evaluate_samples(ep: ExtractorParams, real_motions: np.ndarray,
                     gen_motions: np.ndarray, gen_labels, num_classes: int,
                     seed: int, num_pairs: int = 300,
                     pairs_per_condition: int = 20) -> MetricsReport:
    """One metrics pass; pair counts are clamped to what the sets support."""
    gen_labels = np.asarray(gen_labels, dtype=np.int64)
    feats_real = extract_features(ep, real_motions)
    feats_gen = extract_features(ep, gen_motions)
    eff_pairs = min(num_pairs, len(feats_gen) // 2)
    per_class = [feats_gen[gen_labels == k] for k in range(num_classes)]
    per_class = [f for f in per_class if len(f) >= 2]
    if not per_class:
        raise ConfigError("no condition has >= 2 generated samples")
    eff_ppc = min(pairs_per_condition, min(len(f) for f in per_class) // 2)
    return MetricsReport(
        fid=frechet_distance(feats_real, feats_gen),
        accuracy=accuracy(ep, gen_motions, gen_labels),
        diversity=diversity(feats_gen, eff_pairs, rng.stream(seed, rng.K_EVAL, 0)),
        multimodality=multimodality(per_class, eff_ppc,
                                    rng.stream(seed, rng.K_EVAL, 1)),
        n_real=len(feats_real), n_gen=len(feats_gen),
        num_pairs=eff_pairs, pairs_per_condition=eff_ppc, seed=seed)


def repeat_evaluate(ep: ExtractorParams, real_motions: np.ndarray,
                    gen_motions: np.ndarray, gen_labels, num_classes: int,
                    seed: int, repeats: int = 5, num_pairs: int = 300,
                    pairs_per_condition: int = 20,
                    subsample: float = 0.8) -> list[MetricsReport]:
    """Repeated evaluation on per-class subsamples of the generated set."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    gen_labels = np.asarray(gen_labels, dtype=np.int64)
    reports = []
    for r in range(repeats):
        g = rng.stream(seed, rng.K_EVAL, 2, r)
        keep = []
        for k in np.unique(gen_labels):
            idx = np.flatnonzero(gen_labels == k)
            m = max(2, int(round(subsample * idx.size)))
            keep.append(idx[g.permutation(idx.size)[:m]])
        keep = np.concatenate(keep)
        reports.append(evaluate_samples(
            ep, real_motions, gen_motions[keep], gen_labels[keep], num_classes,
            seed=rng.derive_seed(seed, rng.K_EVAL, 3, r),
            num_pairs=num_pairs, pairs_per_condition=pairs_per_condition))
    return reports
