"""Diagonal Gaussians: proposal distributions and simple test targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .base import TargetDensity

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class DiagonalGaussian:
    """N(mean, diag(exp(2 log_std))); normalized, with analytic score."""

    mean: np.ndarray
    log_std: np.ndarray

    @classmethod
    def isotropic(cls, dim: int, scale: float = 1.0, mean: float = 0.0) -> "DiagonalGaussian":
        return cls(np.full(dim, float(mean)), np.full(dim, np.log(float(scale))))

    @property
    def dim(self) -> int:
        return len(self.mean)

    def log_density(self, x) -> np.ndarray:
        single = np.ndim(x) == 1
        x = np.atleast_2d(np.asarray(x, dtype=float))
        z = (x - self.mean) / np.exp(self.log_std)
        out = -0.5 * np.sum(z**2, axis=-1) - np.sum(self.log_std) - 0.5 * self.dim * LOG_2PI
        return out[0] if single else out

    def grad_log_density(self, x) -> np.ndarray:
        single = np.ndim(x) == 1
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = -(x - self.mean) / np.exp(2.0 * self.log_std)
        return out[0] if single else out

    def sample(self, rng, n: int) -> np.ndarray:
        return self.mean + np.exp(self.log_std) * rng.normal((n, self.dim))


def make_gaussian_target(dim: int, scale: float = 1.0, mean: float = 0.0) -> TargetDensity:
    """Normalized isotropic Gaussian as a sanity-check target (log Z = 0)."""
    dist = DiagonalGaussian.isotropic(dim, scale, mean)
    var = float(scale) ** 2

    def hvp(x, v):
        return -v / var

    return TargetDensity(
        dim=dim,
        log_unnorm=lambda x: dist.log_density(x),
        grad_log_unnorm=lambda x: dist.grad_log_density(x),
        true_log_z=0.0,
        exact_sampler=lambda rng, n: dist.sample(rng, n),
        score_hvp=hvp,
        name=f"gaussian_d{dim}",
    )


def make_unnormalized_gaussian_target(dim: int, scale: float = 1.0) -> TargetDensity:
    """gamma(x) = exp(-|x|^2 / (2 scale^2)) so Z = (2 pi scale^2)^(d/2)."""
    var = float(scale) ** 2
    log_z = 0.5 * dim * (LOG_2PI + np.log(var))

    def log_unnorm(x):
        return -0.5 * np.sum(np.atleast_2d(x) ** 2, axis=-1) / var

    def grad(x):
        return -np.atleast_2d(x) / var

    dist = DiagonalGaussian.isotropic(dim, scale)
    return TargetDensity(
        dim=dim,
        log_unnorm=log_unnorm,
        grad_log_unnorm=grad,
        true_log_z=log_z,
        exact_sampler=lambda rng, n: dist.sample(rng, n),
        score_hvp=lambda x, v: -v / var,
        name=f"unnorm_gaussian_d{dim}",
    )
