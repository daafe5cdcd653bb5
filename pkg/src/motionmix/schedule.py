"""Forward/reverse diffusion kernel on a discrete variance schedule.

Timesteps are 1-based: t runs over [1, T].  Arrays carried by
``NoiseSchedule`` have length T+1 with index 0 holding the empty-product
sentinel (alpha_bars[0] == 1), so alpha_bars[t] is the product of
(1 - beta) up to and including step t.

The reverse step consumes a model prediction in one of two
parameterizations: the clean signal directly, or the noise that was mixed
in.  Both collapse to the same posterior once converted to an x0 estimate.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

# Below this, the terminal signal level is small enough that starting the
# reverse chain from pure noise is justified.
TERMINAL_ALPHA_BAR = 1e-2


class ParamKind(enum.Enum):
    """What the denoiser's output means."""

    PREDICT_X0 = "x0"
    PREDICT_EPS = "eps"


@dataclass(frozen=True)
class NoiseSchedule:
    """Precomputed schedule constants, all float64 and read-only."""

    T: int
    betas: np.ndarray        # [T+1], betas[0] unused (0.0)
    alphas: np.ndarray       # [T+1], alphas[0] == 1.0
    alpha_bars: np.ndarray   # [T+1], alpha_bars[0] == 1.0

    def __post_init__(self):
        if self.T < 2:
            raise ConfigError(f"schedule needs T >= 2, got {self.T}")
        for name in ("betas", "alphas", "alpha_bars"):
            arr = getattr(self, name)
            if arr.shape != (self.T + 1,):
                raise ConfigError(f"{name} must have shape ({self.T + 1},)")
            arr.flags.writeable = False
        b = self.betas[1:]
        if not np.all((b > 0.0) & (b < 1.0)):
            raise ConfigError("betas must lie strictly inside (0, 1)")
        if self.alpha_bars[0] != 1.0:
            raise ConfigError("alpha_bars[0] must be 1")
        ab = self.alpha_bars[1:]
        if not (np.all((ab > 0.0) & (ab < 1.0))
                and np.all(np.diff(self.alpha_bars) < 0.0)):
            raise ConfigError("alpha_bars must be strictly decreasing in (0, 1)")


def _from_betas(betas_1_to_T: np.ndarray) -> NoiseSchedule:
    T = len(betas_1_to_T)
    betas = np.zeros(T + 1)
    betas[1:] = betas_1_to_T
    alphas = 1.0 - betas
    alpha_bars = np.cumprod(alphas)
    sched = NoiseSchedule(T=T, betas=betas, alphas=alphas, alpha_bars=alpha_bars)
    if sched.alpha_bars[T] >= TERMINAL_ALPHA_BAR:
        logger.warning(
            "terminal alpha_bar is %.3g (>= %.0e); sampling from pure noise "
            "will be biased at T=%d", sched.alpha_bars[T], TERMINAL_ALPHA_BAR, T,
        )
    return sched


def schedule_from_betas(betas_1_to_T) -> NoiseSchedule:
    """Rebuild a schedule from its per-step betas (e.g. from a checkpoint)."""
    return _from_betas(np.asarray(betas_1_to_T, dtype=float))


def build_linear_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Schedule with betas linearly spaced from beta_start to beta_end.

    The endpoints are used exactly as given.
    """
    if T < 2:
        raise ConfigError(f"T must be >= 2, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError("need 0 < beta_start <= beta_end < 1")
    return _from_betas(np.linspace(beta_start, beta_end, T))


def default_schedule(T: int = 100, beta_start: float = 1e-4,
                     beta_end: float = 0.02) -> NoiseSchedule:
    """Linear schedule with endpoints rescaled by 1000/T.

    The reference endpoints are tuned for a 1000-step chain; scaling them
    inversely with T keeps the total injected noise roughly constant, so
    the terminal alpha_bar stays below TERMINAL_ALPHA_BAR for any usable
    chain length instead of only for T == 1000.
    """
    if T < 2:
        raise ConfigError(f"schedule needs T >= 2, got {T}")
    scale = 1000.0 / T
    if beta_end * scale >= 1.0:
        raise ConfigError(
            f"endpoint scaling 1000/T pushes beta_end to {beta_end * scale:.3g} "
            f"at T={T}; pass explicit endpoints via build_linear_schedule for "
            "chains this short")
    return build_linear_schedule(T, beta_start * scale, beta_end * scale)


def forward_diffuse(sched: NoiseSchedule, x0: np.ndarray, t: int,
                    eps: np.ndarray) -> np.ndarray:
    """Sample x_t given x0 and the noise draw: sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    if not 1 <= t <= sched.T:
        raise ConfigError(f"t={t} outside [1, {sched.T}]")
    ab = sched.alpha_bars[t]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps


def pred_to_x0(sched: NoiseSchedule, x_t: np.ndarray, pred: np.ndarray,
               t: int, kind: ParamKind) -> np.ndarray:
    """Convert a model output into an estimate of the clean signal."""
    if kind is ParamKind.PREDICT_X0:
        return pred
    ab = sched.alpha_bars[t]
    return (x_t - np.sqrt(1.0 - ab) * pred) / np.sqrt(ab)


def posterior_mean_variance(sched: NoiseSchedule, x_t: np.ndarray,
                            x0_hat: np.ndarray, t: int):
    """Mean and scalar variance of q(x_{t-1} | x_t, x0 = x0_hat).

    At t == 1 the previous alpha_bar is 1, the x0 coefficient is exactly 1
    and the variance is 0, so the step returns the clean estimate.
    """
    if not 1 <= t <= sched.T:
        raise ConfigError(f"t={t} outside [1, {sched.T}]")
    ab_t = sched.alpha_bars[t]
    ab_prev = sched.alpha_bars[t - 1]
    beta_t = sched.betas[t]
    alpha_t = sched.alphas[t]
    coef_x0 = np.sqrt(ab_prev) * beta_t / (1.0 - ab_t)
    coef_xt = np.sqrt(alpha_t) * (1.0 - ab_prev) / (1.0 - ab_t)
    mean = coef_x0 * x0_hat + coef_xt * x_t
    var = beta_t * (1.0 - ab_prev) / (1.0 - ab_t)
    return mean, var


def reverse_step(sched: NoiseSchedule, x_t: np.ndarray, pred: np.ndarray,
                 t: int, kind: ParamKind, noise: np.ndarray,
                 clamp: float | None = None) -> np.ndarray:
    """One ancestral step x_t -> x_{t-1}.

    ``noise`` must be a standard-normal draw of the same shape as x_t; it
    is ignored at t == 1, where the step is deterministic.  ``clamp``
    optionally limits the x0 estimate to [-clamp, clamp] before it enters
    the posterior (the signal is assumed standardized).
    """
    x0_hat = pred_to_x0(sched, x_t, pred, t, kind)
    if clamp is not None:
        x0_hat = np.clip(x0_hat, -clamp, clamp)
    mean, var = posterior_mean_variance(sched, x_t, x0_hat, t)
    if t == 1:
        return mean
    return mean + np.sqrt(var) * noise
