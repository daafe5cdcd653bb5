"""Analytically solvable Gaussian world for validating the kernels.

When the data distribution is N(mu, sigma^2 I), the minimum-MSE clean
estimate given a diffused observation has a one-line closed form, so the
full reverse process can run with no trained network.  This isolates the
schedule and sampler from model error: if oracle sampling reproduces the
world's mean and spread, the kernels are right.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .sampling import reverse_chain
from .schedule import NoiseSchedule, ParamKind

__all__ = ["GaussianWorld", "optimal_x0_from_alpha_bar", "gaussian_optimal_x0",
           "oracle_sample"]


@dataclass(frozen=True)
class GaussianWorld:
    mu: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "mu", np.atleast_1d(np.asarray(self.mu, float)))
        if self.sigma <= 0:
            raise ConfigError("sigma must be positive")
        if self.mu.ndim != 1 or self.mu.size < 1:
            raise ConfigError("mu must be a non-empty vector")

    @property
    def d(self) -> int:
        return self.mu.size


def optimal_x0_from_alpha_bar(x_t: np.ndarray, alpha_bar: float,
                              mu: np.ndarray, sigma: float) -> np.ndarray:
    """E[x_0 | x_t] when x_0 ~ N(mu, sigma^2 I) and x_t follows the forward kernel.

    Gaussian conjugacy gives
        ((1 - ab) * mu + sqrt(ab) * sigma^2 * x_t) / ((1 - ab) + ab * sigma^2),
    affine in x_t; for sigma <= 1 the slope stays in (0, 1].  At ab = 1 it
    returns x_t (noiseless observation) and as sigma -> 0 it returns mu.
    """
    s2 = sigma * sigma
    return ((1.0 - alpha_bar) * mu + np.sqrt(alpha_bar) * s2 * x_t) / (
        (1.0 - alpha_bar) + alpha_bar * s2)


def gaussian_optimal_x0(x_t: np.ndarray, t: int, sched: NoiseSchedule,
                        world: GaussianWorld) -> np.ndarray:
    if not 1 <= t <= sched.T:
        raise ConfigError(f"t={t} outside [1, {sched.T}]")
    return optimal_x0_from_alpha_bar(x_t, sched.alpha_bars[t], world.mu,
                                     world.sigma)


def oracle_sample(sched: NoiseSchedule, world: GaussianWorld, n: int,
                  g: np.random.Generator) -> np.ndarray:
    """n full reverse chains driven by the closed-form denoiser, no clamping."""
    if n < 1:
        raise ConfigError("n must be >= 1")
    return reverse_chain(lambda x, t: gaussian_optimal_x0(x, t, sched, world),
                         sched, (n, world.d), g, ParamKind.PREDICT_X0,
                         clamp=None)
