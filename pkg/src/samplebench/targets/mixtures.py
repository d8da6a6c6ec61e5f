"""Mixture targets: isotropic Gaussians (MoG) and per-dimension Student-t (MoS).

Components have uniform weights 1/K and means drawn i.i.d. per coordinate from
a uniform range, so the mixture is normalized (log Z = 0) and admits an exact
sampler.  Mode descriptors assign each point to the argmax-density component.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics.rng import RngStream
from .base import ModeModel, TargetDensity

LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class MixtureSpec:
    n_components: int
    dim: int
    kind: str = "gaussian"  # "gaussian" (unit covariance) or "student_t2"
    mean_low: float = -40.0
    mean_high: float = 40.0
    seed: int = 0

    def draw_means(self) -> np.ndarray:
        rng = RngStream(self.seed, stream_id=0)
        return rng.uniform(self.mean_low, self.mean_high, (self.n_components, self.dim))


def _component_logdensities(spec: MixtureSpec, means: np.ndarray, x: np.ndarray) -> np.ndarray:
    """(n, K) matrix of normalized per-component log-densities."""
    diff = x[:, None, :] - means[None, :, :]  # (n, K, d)
    if spec.kind == "gaussian":
        return -0.5 * np.sum(diff**2, axis=-1) - 0.5 * spec.dim * LOG_2PI
    if spec.kind == "student_t2":
        # product of independent univariate t_2 per coordinate
        log_norm = -np.log(2.0 * np.sqrt(2.0))
        return np.sum(log_norm - 1.5 * np.log1p(diff**2 / 2.0), axis=-1)
    raise ValueError(f"unknown mixture kind {spec.kind!r}")


def make_mixture_target(spec: MixtureSpec) -> TargetDensity:
    means = spec.draw_means()
    k = spec.n_components
    log_k = np.log(k)

    def log_unnorm(x):
        comp = _component_logdensities(spec, means, np.atleast_2d(x))
        m = comp.max(axis=1, keepdims=True)
        return (np.log(np.exp(comp - m).sum(axis=1)) + m[:, 0]) - log_k

    def grad(x):
        x = np.atleast_2d(x)
        comp = _component_logdensities(spec, means, x)
        w = np.exp(comp - comp.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)  # (n, K) responsibilities
        diff = means[None, :, :] - x[:, None, :]
        if spec.kind == "gaussian":
            comp_grad = diff  # d/dx log N(x|mu, I) = mu - x
        else:
            comp_grad = -3.0 * (-diff) / (2.0 + diff**2)  # t_2: -3u/(2+u^2), u = x - mu
        return np.einsum("nk,nkd->nd", w, comp_grad)

    hvp = None
    if spec.kind == "gaussian":

        def hvp(x, v):
            x = np.atleast_2d(x)
            comp = _component_logdensities(spec, means, x)
            w = np.exp(comp - comp.max(axis=1, keepdims=True))
            w /= w.sum(axis=1, keepdims=True)
            diff = means[None, :, :] - x[:, None, :]  # (n, K, d)
            g = np.einsum("nk,nkd->nd", w, diff)
            dv = np.einsum("nkd,nd->nk", diff, v)
            return np.einsum("nk,nkd->nd", w * dv, diff) - g * np.sum(g * v, axis=-1, keepdims=True) - v

    def sampler(rng: RngStream, n: int):
        comps = rng.integers(k, size=n)
        if spec.kind == "gaussian":
            noise = rng.normal((n, spec.dim))
        else:
            noise = rng.standard_t(2.0, (n, spec.dim))
        return means[comps] + noise

    def mode_probs(x):
        comp = _component_logdensities(spec, means, np.atleast_2d(x))
        idx = np.argmax(comp, axis=1)  # ties resolve to the lowest index
        out = np.zeros((len(idx), k))
        out[np.arange(len(idx)), idx] = 1.0
        return out

    return TargetDensity(
        dim=spec.dim,
        log_unnorm=log_unnorm,
        grad_log_unnorm=grad,
        true_log_z=0.0,
        exact_sampler=sampler,
        mode_model=ModeModel(k, mode_probs, np.full(k, 1.0 / k)),
        score_hvp=hvp,
        name=f"{'mog' if spec.kind == 'gaussian' else 'mos'}_d{spec.dim}_k{k}",
    )


def mode_assign(spec: MixtureSpec, x):
    """Argmax-density component index and its one-hot descriptor row."""
    means = spec.draw_means()
    comp = _component_logdensities(spec, means, np.atleast_2d(np.asarray(x, dtype=float)))
    idx = np.argmax(comp, axis=1)
    one_hot = np.zeros((len(idx), spec.n_components))
    one_hot[np.arange(len(idx)), idx] = 1.0
    if np.ndim(x) == 1:
        return int(idx[0]), one_hot[0]
    return idx, one_hot


def make_mog_target(dim: int, n_components: int = 40, seed: int = 12) -> TargetDensity:
    """Mixture of 40 unit-covariance Gaussians, means uniform on [-40, 40]^d.

    The default seed fixes the benchmark's reference layout.
    """
    return make_mixture_target(MixtureSpec(n_components, dim, "gaussian", -40.0, 40.0, seed))


def make_mos_target(dim: int, n_components: int = 10, seed: int = 0) -> TargetDensity:
    """Mixture of Student-t(2) products, means uniform on [-10, 10]^d."""
    return make_mixture_target(MixtureSpec(n_components, dim, "student_t2", -10.0, 10.0, seed))
