"""Funnel target: N(x1; 0, sigma_f^2) * N(x_2:d; 0, exp(x1) I)."""

from __future__ import annotations

import numpy as np

from .base import TargetDensity

LOG_2PI = np.log(2.0 * np.pi)


def make_funnel_target(dim: int = 10, sigma_f_sq: float = 9.0) -> TargetDensity:
    k = dim - 1  # number of funnel coordinates

    def log_unnorm(x):
        x = np.atleast_2d(x)
        x1 = x[:, 0]
        rest = x[:, 1:]
        lead = -0.5 * (LOG_2PI + np.log(sigma_f_sq)) - 0.5 * x1**2 / sigma_f_sq
        rest_term = -0.5 * k * (LOG_2PI + x1) - 0.5 * np.sum(rest**2, axis=1) * np.exp(-x1)
        return lead + rest_term

    def grad(x):
        x = np.atleast_2d(x)
        x1 = x[:, 0]
        rest = x[:, 1:]
        out = np.empty_like(x)
        out[:, 0] = -x1 / sigma_f_sq - 0.5 * k + 0.5 * np.sum(rest**2, axis=1) * np.exp(-x1)
        out[:, 1:] = -rest * np.exp(-x1)[:, None]
        return out

    def sampler(rng, n):
        x1 = np.sqrt(sigma_f_sq) * rng.normal(n)
        rest = np.exp(x1 / 2.0)[:, None] * rng.normal((n, k))
        return np.column_stack([x1, rest])

    return TargetDensity(
        dim=dim,
        log_unnorm=log_unnorm,
        grad_log_unnorm=grad,
        true_log_z=0.0,
        exact_sampler=sampler,
        name=f"funnel_d{dim}",
    )
