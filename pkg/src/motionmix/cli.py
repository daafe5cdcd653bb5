"""Command surface: dataset generation through ablation sweeps.

Every run is driven by one flat RunConfig.  Values resolve in priority
order: command-line flag, then JSON config file (``--config``), then the
``MOTIONMIX_SEED`` environment variable for the seed, then the documented
default.  Each artifact-writing command drops a ``<name>.run.json``
sidecar recording the exact resolved config and seed.

Exit codes: 0 success, 2 configuration error, 3 numeric failure,
4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import rng
from .dataset import (generate_corpus, load_dataset, prepare_mixed,
                      prepare_naive_baseline, save_dataset, save_motions)
from .errors import ConfigError, DataFormatError, NumericsError
from .evaluation import (METRICS_CSV_HEADER, repeat_evaluate,
                         train_feature_extractor)
from .model import DenoiserConfig
from .sampling import SamplerConfig, edit_sample, sample_many
from .schedule import ParamKind, default_schedule
from .training import TrainConfig, load_checkpoint, save_checkpoint, train


@dataclass
class RunConfig:
    """Union of all pipeline settings.  Every field has a usable default."""

    seed: int | None = None          # resolved: flag > config > env > 0
    # corpus
    num_classes: int = 6
    per_class: int = 500
    frames: int = 32
    dim: int = 4
    # schedule (reference endpoints for a 1000-step chain; rescaled by 1000/T)
    T: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.02
    # preparation
    t1: int = 10
    t2: int = 30
    noisy_ratio: float = 0.5
    baseline: str = "motionmix"      # or "naive"
    # model
    hidden_width: int = 192
    num_blocks: int = 2
    time_embed_dim: int = 32
    # training
    t_star: int = 30
    steps: int = 20000
    batch_size: int = 128
    lr: float = 1e-3
    cfg_mask: float = 0.1
    predict: str = "x0"              # or "eps"
    log_every: int = 200
    checkpoint_every: int = 0
    # sampling
    guidance: float = 2.5
    clamp: float = 4.0               # 0 disables the x0 clamp
    samples_per_class: int = 100
    # evaluation
    repeats: int = 5
    num_pairs: int = 300
    pairs_per_condition: int = 20
    extractor_width: int = 32
    extractor_steps: int = 3000
    # ablation
    replicates: int = 1

    def validate(self) -> None:
        if not 1 <= self.t1 <= self.t2 <= self.T:
            raise ConfigError(f"need 1 <= T1 <= T2 <= T, got [{self.t1}, "
                              f"{self.t2}] with T={self.T}")
        if not 0 <= self.t_star <= self.T:
            raise ConfigError(f"t_star={self.t_star} outside [0, {self.T}]")
        if self.predict not in ("x0", "eps"):
            raise ConfigError(f"predict must be x0 or eps, got {self.predict!r}")
        if self.baseline not in ("motionmix", "naive"):
            raise ConfigError(f"unknown baseline {self.baseline!r}")
        if not 0.0 < self.noisy_ratio <= 1.0:
            raise ConfigError("noisy_ratio must be in (0, 1]")
        if self.clamp < 0:
            raise ConfigError("clamp must be >= 0 (0 disables)")

    @property
    def param_kind(self) -> ParamKind:
        return ParamKind(self.predict)

    @property
    def clamp_value(self) -> float | None:
        return None if self.clamp == 0 else self.clamp


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig()
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as f:
                loaded = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        unknown = set(loaded) - _CONFIG_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = dataclasses.replace(cfg, **loaded)
    overrides = {k: v for k, v in vars(args).items()
                 if k in _CONFIG_FIELDS and v is not None}
    cfg = dataclasses.replace(cfg, **overrides)
    if cfg.seed is None:
        env = os.environ.get("MOTIONMIX_SEED")
        cfg.seed = int(env) if env else 0
    cfg.validate()
    return cfg


def write_sidecar(out_path: str, command: str, cfg: RunConfig) -> None:
    side = {"command": command, "config": dataclasses.asdict(cfg),
            "seed": cfg.seed}
    with open(str(out_path) + ".run.json", "w") as f:
        json.dump(side, f, sort_keys=True, indent=1)
        f.write("\n")


def make_schedule(cfg: RunConfig):
    return default_schedule(cfg.T, cfg.beta_start, cfg.beta_end)


def model_config(cfg: RunConfig) -> DenoiserConfig:
    return DenoiserConfig(frames=cfg.frames, dim=cfg.dim,
                          num_classes=cfg.num_classes,
                          hidden_width=cfg.hidden_width,
                          num_blocks=cfg.num_blocks,
                          time_embed_dim=cfg.time_embed_dim,
                          t_max=cfg.T, param_kind=cfg.param_kind)


def motion_svg(motion: np.ndarray, size: int = 512) -> str:
    """Planar trajectory plot: polyline of dims 0-1 with a tick per frame."""
    x = motion[:, 0]
    y = motion[:, 1] if motion.shape[1] >= 2 else np.zeros_like(x)
    pad = size * 0.06
    cx, cy = (x.min() + x.max()) / 2, (y.min() + y.max()) / 2
    span = max(x.max() - x.min(), y.max() - y.min(), 1e-9)
    scale = (size - 2 * pad) / span
    px = (x - cx) * scale + size / 2
    py = size / 2 - (y - cy) * scale
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    ticks = "".join(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5"/>'
                    for a, b in zip(px, py))
    return (f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {size} {size}" '
            f'width="{size}" height="{size}">'
            f'<rect width="{size}" height="{size}" fill="white"/>'
            f'<polyline points="{pts}" fill="none" stroke="#1f77b4" '
            f'stroke-width="1.5"/>'
            f'<g fill="#d62728">{ticks}</g></svg>\n')


# ---------------------------------------------------------------------------
# Subcommands

def cmd_gen_data(cfg: RunConfig, args) -> int:
    ds = generate_corpus(cfg.num_classes, cfg.per_class, cfg.frames, cfg.dim,
                         cfg.seed)
    save_dataset(args.out, ds)
    write_sidecar(args.out, "gen-data", cfg)
    print(f"wrote {len(ds)} motions ({cfg.num_classes} classes) to {args.out}")
    return 0


def cmd_prepare(cfg: RunConfig, args) -> int:
    corpus = load_dataset(args.data)
    sched = make_schedule(cfg)
    prep = prepare_naive_baseline if cfg.baseline == "naive" else prepare_mixed
    ds = prep(corpus, sched, cfg.t1, cfg.t2, cfg.noisy_ratio, cfg.seed)
    save_dataset(args.out, ds)
    write_sidecar(args.out, "prepare", cfg)
    n_noisy = int(np.sum(ds.sources() == 0))
    print(f"prepared {len(ds)} examples ({n_noisy} corrupted in "
          f"[{cfg.t1}, {cfg.t2}], baseline={cfg.baseline}) to {args.out}")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    ds = load_dataset(args.data)
    if ds.T == 0:
        raise ConfigError(f"{args.data} is an unprepared corpus; run prepare first")
    if ds.T != cfg.T:
        raise ConfigError(f"dataset was prepared with T={ds.T}, config has T={cfg.T}")
    sched = make_schedule(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    tcfg = TrainConfig(t_star=cfg.t_star, steps=cfg.steps,
                       batch_size=cfg.batch_size, lr=cfg.lr,
                       cfg_mask_prob=cfg.cfg_mask, param_kind=cfg.param_kind,
                       seed=cfg.seed, log_every=cfg.log_every,
                       checkpoint_every=cfg.checkpoint_every,
                       checkpoint_dir=args.out_dir,
                       full_range=cfg.baseline == "naive")
    mcfg = dataclasses.replace(model_config(cfg), frames=ds.num_frames,
                               dim=ds.dim, num_classes=ds.num_classes)
    params, log = train(tcfg, ds, sched, mcfg)
    log.write_csv(os.path.join(args.out_dir, "train_log.csv"))
    ckpt = os.path.join(args.out_dir, f"ckpt_{cfg.steps}.mmck")
    write_sidecar(ckpt, "train", cfg)
    final_loss = log.rows[-1][1]
    print(f"trained {cfg.steps} steps (final loss {final_loss:.5f}); "
          f"checkpoint at {ckpt}")
    return 0


def _parse_labels(spec: str, num_classes: int) -> list[int | None]:
    out: list[int | None] = []
    for tok in spec.split(","):
        tok = tok.strip()
        if tok in ("", "-1", "null"):
            out.append(None)
        else:
            k = int(tok)
            if not 0 <= k < num_classes:
                raise ConfigError(f"label {k} outside [0, {num_classes})")
            out.append(k)
    return out


def cmd_sample(cfg: RunConfig, args) -> int:
    params, meta = load_checkpoint(args.ckpt)
    sched = meta["sched"]
    t_star = meta["t_star"] if args.t_star is None else args.t_star
    if args.labels:
        labels = _parse_labels(args.labels, params.cfg.num_classes)
    elif args.unconditional:
        labels = [None] * args.unconditional
    else:
        labels = [k for k in range(params.cfg.num_classes)
                  for _ in range(cfg.samples_per_class)]
    scfg = SamplerConfig(t_star=t_star, guidance=cfg.guidance,
                         clamp=cfg.clamp_value)
    motions = sample_many(params, sched, labels, scfg, cfg.seed,
                          mean=meta["mean"], std=meta["std"])
    stored = [-1 if l is None else l for l in labels]
    save_motions(args.out, motions, stored, params.cfg.num_classes)
    write_sidecar(args.out, "sample", cfg)
    if args.svg_dir:
        os.makedirs(args.svg_dir, exist_ok=True)
        for i, m in enumerate(motions):
            with open(os.path.join(args.svg_dir, f"sample_{i:04d}.svg"), "w") as f:
                f.write(motion_svg(m))
    print(f"wrote {len(motions)} samples to {args.out} "
          f"(t_star={t_star}, guidance={cfg.guidance})")
    return 0


def _parse_int_list(spec: str) -> list[int]:
    return [int(tok) for tok in spec.split(",") if tok.strip() != ""]


def cmd_edit(cfg: RunConfig, args) -> int:
    params, meta = load_checkpoint(args.ckpt)
    sched = meta["sched"]
    ref_ds = load_dataset(args.data)
    if not 0 <= args.index < len(ref_ds):
        raise ConfigError(f"--index {args.index} outside the dataset")
    reference = ref_ds.examples[args.index].frames
    N, D = reference.shape
    mask = np.zeros((N, D), dtype=bool)
    if args.fix_frac is not None:
        k = int(round(args.fix_frac * N))
        mask[:k, :] = True
        mask[N - k:, :] = True
    if args.fix_dims:
        mask[:, _parse_int_list(args.fix_dims)] = True
    if not mask.any():
        raise ConfigError("edit mask is empty; pass --fix-frac and/or --fix-dims")
    t_star = meta["t_star"] if args.t_star is None else args.t_star
    label = None if args.label is None else args.label
    scfg = SamplerConfig(t_star=t_star, guidance=cfg.guidance,
                         clamp=cfg.clamp_value)
    g = rng.stream(cfg.seed, rng.K_SAMPLE, 0)
    out = edit_sample(params, sched, reference, mask, label, scfg, g,
                      mean=meta["mean"], std=meta["std"])
    save_motions(args.out, out[None], [args.index if label is None else label],
                 params.cfg.num_classes)
    write_sidecar(args.out, "edit", cfg)
    if args.svg_dir:
        os.makedirs(args.svg_dir, exist_ok=True)
        with open(os.path.join(args.svg_dir, "edited.svg"), "w") as f:
            f.write(motion_svg(out))
    print(f"edited motion written to {args.out} "
          f"({int(mask.sum())}/{mask.size} coordinates held fixed)")
    return 0


def cmd_eval(cfg: RunConfig, args) -> int:
    real = load_dataset(args.real)
    gen = load_dataset(args.gen)
    if (real.num_frames, real.dim) != (gen.num_frames, gen.dim):
        raise ConfigError("real and generated sets have different shapes")
    if np.any(real.labels() < 0):
        raise ConfigError("evaluation needs a fully labeled real corpus")
    ep = train_feature_extractor(real.motions(), real.labels(),
                                 real.num_classes, seed=cfg.seed,
                                 hidden=cfg.extractor_width,
                                 max_steps=cfg.extractor_steps)
    reports = repeat_evaluate(ep, real.motions(), gen.motions(), gen.labels(),
                              real.num_classes, seed=cfg.seed,
                              repeats=cfg.repeats, num_pairs=cfg.num_pairs,
                              pairs_per_condition=cfg.pairs_per_condition)
    with open(args.out, "w") as f:
        f.write(METRICS_CSV_HEADER + "\n")
        for rep in reports:
            f.write(rep.csv_row() + "\n")
    write_sidecar(args.out, "eval", cfg)
    mean = {k: float(np.mean([getattr(r, k) for r in reports]))
            for k in ("fid", "accuracy", "diversity", "multimodality")}
    spread = {k: float(np.std([getattr(r, k) for r in reports]))
              for k in mean}
    for k in mean:
        print(f"{k:<14} {mean[k]:.4f} +/- {spread[k]:.4f}")
    print(f"metrics ({len(reports)} repeats) written to {args.out}")
    return 0


def cmd_oracle_check(cfg: RunConfig, args) -> int:
    from .oracle import GaussianWorld, oracle_sample
    mu = np.array([float(v) for v in args.mu.split(",")])
    world = GaussianWorld(mu=mu, sigma=args.sigma)
    sched = make_schedule(cfg)
    samples = oracle_sample(sched, world, args.n, rng.stream(cfg.seed, rng.K_SAMPLE))
    lines = ["coord,mean,std,target_mean,target_std,mean_err,std_rel_err"]
    for j in range(world.d):
        m, s = float(samples[:, j].mean()), float(samples[:, j].std())
        lines.append(f"{j},{m:.10g},{s:.10g},{mu[j]:.10g},{args.sigma:.10g},"
                     f"{abs(m - mu[j]):.3g},{abs(s - args.sigma) / args.sigma:.3g}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
        write_sidecar(args.out, "oracle-check", cfg)
    return 0


# ---------------------------------------------------------------------------
# Ablation

ABLATION_CSV_HEADER = ("axis,value,replicate,seed,fid_mean,fid_std,"
                       "accuracy_mean,accuracy_std,diversity_mean,"
                       "diversity_std,multimodality_mean,multimodality_std,"
                       "error")


def _grid_config(base: RunConfig, axis: str, value) -> RunConfig:
    if axis == "pivot":
        return dataclasses.replace(base, t_star=int(value))
    if axis == "ratio":
        return dataclasses.replace(base, noisy_ratio=float(value))
    if axis == "range":
        lo, hi = str(value).split("-")
        return dataclasses.replace(base, t1=int(lo), t2=int(hi))
    raise ConfigError(f"unknown ablation axis {axis!r}")


def run_ablation(base: RunConfig, axis: str, grid: list, replicates: int,
                 corpus=None) -> list[dict]:
    """Full pipeline per (grid value, replicate); returns one row dict each.

    The corpus is generated once and shared; each run derives its own seed
    from (base seed, grid index, replicate) covering split, training,
    sampling and evaluation.  A failing grid point contributes an error
    row and the sweep continues.
    """
    if not grid:
        raise ConfigError("ablation grid is empty")
    if corpus is None:
        corpus = generate_corpus(base.num_classes, base.per_class, base.frames,
                                 base.dim, base.seed)
    extractor = train_feature_extractor(corpus.motions(), corpus.labels(),
                                        corpus.num_classes, seed=base.seed,
                                        hidden=base.extractor_width,
                                        max_steps=base.extractor_steps)
    rows = []
    for gi, value in enumerate(grid):
        for r in range(replicates):
            seed = rng.derive_seed(base.seed, rng.K_ABLATE, gi, r)
            row = {"axis": axis, "value": value, "replicate": r, "seed": seed,
                   "error": ""}
            try:
                cfg = dataclasses.replace(_grid_config(base, axis, value),
                                          seed=seed)
                cfg.validate()
                reports = _pipeline_once(cfg, corpus, extractor)
                for k in ("fid", "accuracy", "diversity", "multimodality"):
                    vals = [getattr(rep, k) for rep in reports]
                    row[f"{k}_mean"] = float(np.mean(vals))
                    row[f"{k}_std"] = float(np.std(vals))
            except (ConfigError, NumericsError, ValueError) as e:
                row["error"] = str(e).replace("\n", " ").replace(",", ";")
            rows.append(row)
    return rows


def _pipeline_once(cfg: RunConfig, corpus, extractor):
    """prepare -> train -> sample -> repeated evaluation, all in memory."""
    sched = make_schedule(cfg)
    prep = prepare_naive_baseline if cfg.baseline == "naive" else prepare_mixed
    ds = prep(corpus, sched, cfg.t1, cfg.t2, cfg.noisy_ratio, cfg.seed)
    tcfg = TrainConfig(t_star=cfg.t_star, steps=cfg.steps,
                       batch_size=cfg.batch_size, lr=cfg.lr,
                       cfg_mask_prob=cfg.cfg_mask, param_kind=cfg.param_kind,
                       seed=cfg.seed, log_every=cfg.log_every,
                       full_range=cfg.baseline == "naive")
    params, _ = train(tcfg, ds, sched, model_config(cfg))
    labels = [k for k in range(cfg.num_classes)
              for _ in range(cfg.samples_per_class)]
    scfg = SamplerConfig(t_star=cfg.t_star, guidance=cfg.guidance,
                         clamp=cfg.clamp_value)
    motions = sample_many(params, sched, labels, scfg, cfg.seed,
                          mean=ds.mean, std=ds.std)
    return repeat_evaluate(extractor, corpus.motions(), motions, labels,
                           cfg.num_classes, seed=cfg.seed, repeats=cfg.repeats,
                           num_pairs=cfg.num_pairs,
                           pairs_per_condition=cfg.pairs_per_condition)


def _ablation_row_csv(row: dict) -> str:
    if row["error"]:
        stats = ",".join([""] * 8)
    else:
        stats = ",".join(f"{row[k]:.10g}" for k in (
            "fid_mean", "fid_std", "accuracy_mean", "accuracy_std",
            "diversity_mean", "diversity_std", "multimodality_mean",
            "multimodality_std"))
    return (f"{row['axis']},{row['value']},{row['replicate']},{row['seed']},"
            f"{stats},{row['error']}")


def render_ablation_table(rows: list[dict]) -> str:
    header = ["value", "rep", "fid", "accuracy", "diversity", "multimod."]
    lines = ["  ".join(f"{h:>12}" for h in header)]
    for row in rows:
        if row["error"]:
            cells = [str(row["value"]), str(row["replicate"]),
                     f"error: {row['error'][:40]}"]
            lines.append("  ".join(f"{c:>12}" for c in cells))
            continue
        cells = [str(row["value"]), str(row["replicate"])]
        for k in ("fid", "accuracy", "diversity", "multimodality"):
            cells.append(f"{row[k + '_mean']:.3f}±{row[k + '_std']:.3f}")
        lines.append("  ".join(f"{c:>12}" for c in cells))
    return "\n".join(lines) + "\n"


def cmd_ablate(cfg: RunConfig, args) -> int:
    grid = [tok.strip() for tok in args.grid.split(",") if tok.strip()]
    if args.axis == "pivot":
        grid = [int(v) for v in grid]
    elif args.axis == "ratio":
        grid = [float(v) for v in grid]
    rows = run_ablation(cfg, args.axis, grid, cfg.replicates)
    os.makedirs(args.out_dir, exist_ok=True)
    csv_path = os.path.join(args.out_dir, "ablation.csv")
    with open(csv_path, "w") as f:
        f.write(ABLATION_CSV_HEADER + "\n")
        for row in rows:
            f.write(_ablation_row_csv(row) + "\n")
    table = render_ablation_table(rows)
    with open(os.path.join(args.out_dir, "ablation.txt"), "w") as f:
        f.write(table)
    write_sidecar(csv_path, "ablate", cfg)
    sys.stdout.write(table)
    print(f"ablation results written to {csv_path}")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    with open(args.data) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines:
        raise DataFormatError(f"{args.data} is empty")
    cols = [c.split(",") for c in lines]
    widths = [max(len(row[i]) if i < len(row) else 0 for row in cols)
              for i in range(len(cols[0]))]
    for row in cols:
        print("  ".join(f"{(row[i] if i < len(row) else ''):>{w}}"
                        for i, w in enumerate(widths)))
    return 0


# ---------------------------------------------------------------------------
# Argument parsing

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="motionmix",
                                description="Weakly supervised motion "
                                            "diffusion toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int)

    def schedule_flags(sp):
        sp.add_argument("--T", dest="T", type=int)
        sp.add_argument("--beta-start", dest="beta_start", type=float)
        sp.add_argument("--beta-end", dest="beta_end", type=float)

    sp = sub.add_parser("gen-data", help="generate a labeled synthetic corpus")
    common(sp)
    sp.add_argument("--out", required=True)
    for name in ("num-classes", "per-class", "frames", "dim"):
        sp.add_argument(f"--{name}", dest=name.replace("-", "_"), type=int)

    sp = sub.add_parser("prepare", help="corrupt/split a corpus for training")
    common(sp)
    schedule_flags(sp)
    sp.add_argument("--data", required=True, help="corpus from gen-data")
    sp.add_argument("--out", required=True)
    sp.add_argument("--t1", type=int)
    sp.add_argument("--t2", type=int)
    sp.add_argument("--noisy-ratio", dest="noisy_ratio", type=float)
    sp.add_argument("--baseline", choices=["motionmix", "naive"])

    sp = sub.add_parser("train", help="train the denoiser")
    common(sp)
    schedule_flags(sp)
    sp.add_argument("--data", required=True, help="prepared dataset")
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--t-star", dest="t_star", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--cfg-mask", dest="cfg_mask", type=float)
    sp.add_argument("--predict", choices=["x0", "eps"])
    sp.add_argument("--hidden-width", dest="hidden_width", type=int)
    sp.add_argument("--num-blocks", dest="num_blocks", type=int)
    sp.add_argument("--log-every", dest="log_every", type=int)
    sp.add_argument("--checkpoint-every", dest="checkpoint_every", type=int)
    sp.add_argument("--baseline", choices=["motionmix", "naive"])

    sp = sub.add_parser("sample", help="generate motions from a checkpoint")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--t-star", dest="t_star", type=int,
                    help="override the checkpoint's pivot")
    sp.add_argument("--guidance", type=float)
    sp.add_argument("--clamp", type=float)
    sp.add_argument("--samples-per-class", dest="samples_per_class", type=int)
    sp.add_argument("--labels", help="comma list; 'null' for unconditional")
    sp.add_argument("--unconditional", type=int, metavar="N",
                    help="N unconditional samples")
    sp.add_argument("--svg-dir", dest="svg_dir")

    sp = sub.add_parser("edit", help="regenerate a motion with fixed parts")
    common(sp)
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True, help="dataset holding the reference")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.add_argument("--fix-frac", dest="fix_frac", type=float,
                    help="fraction of frames fixed at each end")
    sp.add_argument("--fix-dims", dest="fix_dims",
                    help="comma list of channels held fixed")
    sp.add_argument("--label", type=int)
    sp.add_argument("--t-star", dest="t_star", type=int)
    sp.add_argument("--guidance", type=float)
    sp.add_argument("--clamp", type=float)
    sp.add_argument("--svg-dir", dest="svg_dir")

    sp = sub.add_parser("eval", help="score generated motions against a corpus")
    common(sp)
    sp.add_argument("--real", required=True, help="labeled corpus (gen-data)")
    sp.add_argument("--gen", required=True, help="generated motions (sample)")
    sp.add_argument("--out", required=True, help="metrics CSV path")
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--num-pairs", dest="num_pairs", type=int)
    sp.add_argument("--pairs-per-condition", dest="pairs_per_condition", type=int)
    sp.add_argument("--extractor-width", dest="extractor_width", type=int)
    sp.add_argument("--extractor-steps", dest="extractor_steps", type=int)

    sp = sub.add_parser("oracle-check",
                        help="closed-form sampler statistics (no network)")
    common(sp)
    schedule_flags(sp)
    sp.add_argument("--mu", default="1,-1", help="comma list, world mean")
    sp.add_argument("--sigma", type=float, default=0.5)
    sp.add_argument("--n", type=int, default=20000)
    sp.add_argument("--out", help="also write the CSV here")

    sp = sub.add_parser("ablate", help="sweep pivot / ratio / range")
    common(sp)
    schedule_flags(sp)
    sp.add_argument("--axis", required=True, choices=["pivot", "ratio", "range"])
    sp.add_argument("--grid", required=True,
                    help="comma list (range axis: lo-hi pairs)")
    sp.add_argument("--out-dir", dest="out_dir", required=True)
    sp.add_argument("--replicates", type=int)
    sp.add_argument("--per-class", dest="per_class", type=int)
    sp.add_argument("--steps", type=int)
    sp.add_argument("--samples-per-class", dest="samples_per_class", type=int)
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--noisy-ratio", dest="noisy_ratio", type=float)
    sp.add_argument("--t1", type=int)
    sp.add_argument("--t2", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--hidden-width", dest="hidden_width", type=int)
    sp.add_argument("--num-blocks", dest="num_blocks", type=int)
    sp.add_argument("--batch-size", dest="batch_size", type=int)
    sp.add_argument("--guidance", type=float)
    sp.add_argument("--cfg-mask", dest="cfg_mask", type=float)
    sp.add_argument("--predict", choices=["x0", "eps"])

    sp = sub.add_parser("report", help="pretty-print a results CSV")
    common(sp)
    sp.add_argument("--data", required=True, help="CSV file to render")
    return p


_HANDLERS = {
    "gen-data": cmd_gen_data, "prepare": cmd_prepare, "train": cmd_train,
    "sample": cmd_sample, "edit": cmd_edit, "eval": cmd_eval,
    "oracle-check": cmd_oracle_check, "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        return _HANDLERS[args.command](cfg, args)
    except DataFormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except NumericsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
