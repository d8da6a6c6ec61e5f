"""Brownian-motion smoothing target: 30 latent states plus two noise scales.

The unknowns are (log alpha_inn, log alpha_obs, x_1..x_30); both scales carry a
LogNormal(0, 2) prior, which in log-space is exactly N(0, 2^2) (the Jacobian of
the log transform is absorbed by the LogNormal density).  Observations exist
for steps {1..10} and {20..30} and are synthesized once from the generative
model at a fixed seed, then frozen into the target.
"""

from __future__ import annotations

import numpy as np

from ..numerics.rng import RngStream
from .base import TargetDensity

LOG_2PI = np.log(2.0 * np.pi)
N_STATES = 30
OBS_INDICES = np.array(sorted(set(range(1, 11)) | set(range(20, 31)))) - 1  # 0-based
PRIOR_SCALE = 2.0


def _simulate_observations(seed: int):
    rng = RngStream(seed, stream_id=0)
    alpha_inn = float(np.exp(PRIOR_SCALE * rng.normal()))
    alpha_obs = float(np.exp(PRIOR_SCALE * rng.normal()))
    steps = alpha_inn * rng.normal(N_STATES)
    states = np.cumsum(steps)
    obs = states[OBS_INDICES] + alpha_obs * rng.normal(len(OBS_INDICES))
    return obs


def make_brownian_target(observation_seed: int = 11) -> TargetDensity:
    y = _simulate_observations(observation_seed)
    n_obs = len(OBS_INDICES)

    def unpack(theta):
        theta = np.atleast_2d(theta)
        return theta[:, 0], theta[:, 1], theta[:, 2:]

    def log_unnorm(theta):
        u_inn, u_obs, x = unpack(theta)
        prior = -0.5 * (u_inn**2 + u_obs**2) / PRIOR_SCALE**2 - LOG_2PI - 2 * np.log(PRIOR_SCALE)
        inc = np.diff(np.concatenate([np.zeros((len(x), 1)), x], axis=1), axis=1)
        chain = -0.5 * np.sum(inc**2, axis=1) * np.exp(-2 * u_inn) - N_STATES * (
            0.5 * LOG_2PI + u_inn
        )
        resid = x[:, OBS_INDICES] - y
        like = -0.5 * np.sum(resid**2, axis=1) * np.exp(-2 * u_obs) - n_obs * (
            0.5 * LOG_2PI + u_obs
        )
        return prior + chain + like

    def grad(theta):
        u_inn, u_obs, x = unpack(theta)
        out = np.empty_like(np.atleast_2d(theta))
        inc = np.diff(np.concatenate([np.zeros((len(x), 1)), x], axis=1), axis=1)
        resid = x[:, OBS_INDICES] - y
        inv_inn = np.exp(-2 * u_inn)
        inv_obs = np.exp(-2 * u_obs)
        out[:, 0] = -u_inn / PRIOR_SCALE**2 + np.sum(inc**2, axis=1) * inv_inn - N_STATES
        out[:, 1] = -u_obs / PRIOR_SCALE**2 + np.sum(resid**2, axis=1) * inv_obs - n_obs
        gx = np.zeros_like(x)
        gx -= inc * inv_inn[:, None]
        gx[:, :-1] += inc[:, 1:] * inv_inn[:, None]
        gx[:, OBS_INDICES] -= resid * inv_obs[:, None]
        out[:, 2:] = gx
        return out

    return TargetDensity(
        dim=N_STATES + 2,
        log_unnorm=log_unnorm,
        grad_log_unnorm=grad,
        name="brownian_d32",
    )
