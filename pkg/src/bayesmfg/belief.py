"""Gaussian learning of the unknown state from the aggregated private signal.

The state ``S`` has a standard normal prior and each player observes
``dZ_t = S dt + sigma dB_t``.  Everything here is closed form; densities are
evaluated in log space so that products of tail densities stay meaningful.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianLaw:
    """Normal law ``N(mean, variance)``; ``variance == 0`` is a point mass."""

    mean: float | np.ndarray
    variance: float | np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.variance) < 0):
            raise ValueError("variance must be non-negative")

    @property
    def degenerate(self) -> bool:
        return bool(np.all(np.asarray(self.variance) == 0))

    def logpdf(self, x):
        return log_normal_pdf(x, self.mean, self.variance)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        from scipy.special import ndtr

        x = np.asarray(x, dtype=float)
        if self.degenerate:
            return (x >= self.mean).astype(float)
        return ndtr((x - self.mean) / np.sqrt(self.variance))


def log_normal_pdf(x, mean, variance):
    """Log density of ``N(mean, variance)`` at ``x`` (broadcasting)."""
    x = np.asarray(x, dtype=float)
    variance = np.asarray(variance, dtype=float)
    return -0.5 * ((x - mean) ** 2 / variance + np.log(variance) + _LOG_2PI)


@dataclass(frozen=True)
class BeliefKernel:
    """Signal noise ``sigma`` together with the fixed ``N(0, 1)`` state prior."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma!r}")

    def posterior_mean(self, t, z):
        return np.asarray(z, dtype=float) / (np.asarray(t, dtype=float) + self.sigma**2)

    def posterior_variance(self, t):
        s2 = self.sigma**2
        return s2 / (s2 + np.asarray(t, dtype=float))


def posterior(kernel: BeliefKernel, t, z) -> GaussianLaw:
    """Law of ``S | Z_t = z``: mean ``z / (t + sigma^2)``, variance ``sigma^2 / (sigma^2 + t)``."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    return GaussianLaw(kernel.posterior_mean(t, z), kernel.posterior_variance(t))


def signal_law_conditional(kernel: BeliefKernel, t, s) -> GaussianLaw:
    """Law of ``Z_t | S = s``, i.e. ``N(s t, sigma^2 t)``.

    At ``t = 0`` this is the point mass at 0 (variance exactly 0).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return GaussianLaw(np.asarray(s, dtype=float) * t, kernel.sigma**2 * t)


def signal_law_marginal(kernel: BeliefKernel, t) -> GaussianLaw:
    """Law of ``Z_t`` after integrating the prior out: ``N(0, sigma^2 t + t^2)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be non-negative")
    return GaussianLaw(np.zeros_like(t), kernel.sigma**2 * t + t**2)


def bayes_identity_residual(kernel: BeliefKernel, t, s, z):
    """Absolute gap between the two factorizations of the joint density of ``(S, Z_t)``.

    ``phi_{0,1}(s) phi_{st, sigma^2 t}(z)`` against
    ``phi_{0, sigma^2 t + t^2}(z) phi_{r_t(z), sigma_t^2}(s)``.
    """
    if np.any(np.asarray(t) <= 0):
        raise ValueError("t must be positive")
    cond = signal_law_conditional(kernel, t, s)
    marg = signal_law_marginal(kernel, t)
    post = posterior(kernel, t, z)
    lhs = log_normal_pdf(s, 0.0, 1.0) + cond.logpdf(z)
    rhs = marg.logpdf(z) + post.logpdf(s)
    return np.abs(np.exp(lhs) - np.exp(rhs))
