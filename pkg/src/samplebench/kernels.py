"""Geometric annealing path and MCMC transition kernels.

The annealed family is gamma_t(x) = pi0(x)^(1-beta_t) * gamma(x)^beta_t on a
strictly increasing beta grid with endpoints exactly 0 and 1.  Kernels are
vectorized over chains; each fused target query counts one NFE per point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError
from .numerics.rng import RngStream
from .targets.base import TargetDensity
from .targets.gaussian import DiagonalGaussian


@dataclass
class AnnealedPath:
    proposal: DiagonalGaussian
    target: TargetDensity
    betas: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.betas, dtype=float)
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise UsageError("betas must increase strictly from exactly 0 to exactly 1")
        self.betas = b

    @classmethod
    def linear(cls, proposal, target, n_steps: int) -> "AnnealedPath":
        return cls(proposal, target, np.linspace(0.0, 1.0, n_steps + 1))

    @property
    def n_steps(self) -> int:
        return len(self.betas) - 1


def annealed_logdensity(path: AnnealedPath, t: int, x, with_grad: bool = True):
    """(1-beta_t) log pi0 + beta_t log gamma and its gradient.

    The target is only queried when beta_t > 0, so tempering at the proposal
    endpoint is free.
    """
    if not 0 <= t <= path.n_steps:
        raise UsageError(f"temperature index {t} outside [0, {path.n_steps}]")
    beta = path.betas[t]
    lp0 = path.proposal.log_density(x)
    g0 = path.proposal.grad_log_density(x) if with_grad else None
    if beta == 0.0:
        return (lp0, g0) if with_grad else lp0
    if with_grad:
        lg, gg = path.target.logdensity_and_grad(x)
        return (1.0 - beta) * lp0 + beta * lg, (1.0 - beta) * g0 + beta * gg
    lg = path.target.log_density(x)
    return (1.0 - beta) * lp0 + beta * lg


@dataclass
class HmcConfig:
    leapfrog_steps: int = 10
    step_size_low: float = 0.2    # used while beta_t < 0.5
    step_size_high: float = 0.2   # used once beta_t >= 0.5

    def __post_init__(self):
        if self.leapfrog_steps < 1 or self.step_size_low <= 0 or self.step_size_high <= 0:
            raise UsageError("leapfrog_steps >= 1 and positive step sizes required")

    def step_size(self, beta: float) -> float:
        return self.step_size_high if beta >= 0.5 else self.step_size_low


@dataclass
class MhConfig:
    n_substeps: int = 10          # plus the reweight query makes 11 evals per temperature
    scale_low: float = 1.0
    scale_high: float = 1.0

    def scale(self, beta: float) -> float:
        return self.scale_high if beta >= 0.5 else self.scale_low


def mh_step(x, logdensity, proposal_scale, rng: RngStream, current_logdensity=None):
    """One Gaussian random-walk Metropolis step, vectorized over rows of x.

    Returns (x', accepted, logdensity at x').
    """
    if proposal_scale <= 0:
        raise UsageError("proposal_scale must be positive")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    lp = logdensity(x) if current_logdensity is None else np.asarray(current_logdensity)
    prop = x + proposal_scale * rng.normal(x.shape)
    lp_prop = logdensity(prop)
    log_u = np.log(rng.uniform(size=len(x)))
    accepted = log_u < (lp_prop - lp)
    new_x = np.where(accepted[:, None], prop, x)
    new_lp = np.where(accepted, lp_prop, lp)
    return new_x, accepted, new_lp


def _leapfrog(x, p, eps, n_steps, fused, val0, grad0):
    """Leapfrog integration of H = -logdensity + |p|^2/2.

    The initial (value, gradient) is supplied by the caller; fresh fused
    queries happen only at the visited positions x_1..x_L.
    """
    p = p + 0.5 * eps * grad0
    xn = x
    val, grad = val0, grad0
    for i in range(n_steps):
        xn = xn + eps * p
        val, grad = fused(xn)
        if i < n_steps - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return xn, p, val, grad


def hmc_step(x, fused_logdensity_and_grad, cfg: HmcConfig, rng: RngStream, beta: float = 1.0,
             current=None, metropolis: bool = True):
    """One HMC step with fresh momenta and a Metropolis correction on total energy.

    `current` may carry a cached (value, grad) at x to avoid re-querying.
    Returns (x', accepted, (value, grad) at x').
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eps = cfg.step_size(beta)
    if current is None:
        val0, grad0 = fused_logdensity_and_grad(x)
    else:
        val0, grad0 = current
    p0 = rng.normal(x.shape)
    xn, p, val, grad = _leapfrog(x, p0, eps, cfg.leapfrog_steps, fused_logdensity_and_grad,
                                 val0, grad0)
    if not metropolis:
        return xn, np.ones(len(x), dtype=bool), (val, grad)
    h0 = -val0 + 0.5 * np.sum(p0**2, axis=1)
    h1 = -val + 0.5 * np.sum(p**2, axis=1)
    delta = h0 - h1
    delta = np.where(np.isfinite(delta), delta, -np.inf)  # non-finite energy: reject
    accepted = np.log(rng.uniform(size=len(x))) < delta
    new_x = np.where(accepted[:, None], xn, x)
    new_val = np.where(accepted, val, val0)
    new_grad = np.where(accepted[:, None], grad, grad0)
    return new_x, accepted, (new_val, new_grad)


def ula_step(x, fused_logdensity_and_grad, step_h, rng: RngStream, current=None):
    """One uncorrected Langevin step x + h grad + sqrt(2h) xi.

    This is exactly hmc_step with L = 1, eps = sqrt(2h), and the Metropolis
    correction removed; it runs through the same leapfrog code path.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    eps = np.sqrt(2.0 * step_h)
    if current is None:
        val0, grad0 = fused_logdensity_and_grad(x)
    else:
        val0, grad0 = current
    p0 = rng.normal(x.shape)
    xn, _, _, _ = _leapfrog(x, p0, eps, 1, fused_logdensity_and_grad, val0, grad0)
    return xn


def tune_step_size(kernel_step, init_step, rng: RngStream, target_rejection: float = 0.65,
                   n_chains: int = 64, rounds: int = 60, tol: float = 0.05,
                   x0=None, dim: int = 1):
    """Robbins-Monro pilot tuning toward a target rejection rate.

    `kernel_step(x, step, rng) -> (x', accepted)` runs one transition at the
    trial step size.  Returns (step, converged); on failure the best step seen
    is returned with converged=False.
    """
    if not 0.0 < target_rejection < 1.0:
        raise UsageError("target_rejection must lie in (0, 1)")
    log_step = np.log(float(init_step))
    x = np.zeros((n_chains, dim)) if x0 is None else np.array(x0, dtype=float)
    best = (np.inf, log_step)
    converged = False
    for k in range(rounds):
        x, accepted = kernel_step(x, float(np.exp(log_step)), rng)
        rejection = 1.0 - float(np.mean(accepted))
        gap = rejection - target_rejection
        if abs(gap) < best[0]:
            best = (abs(gap), log_step)
        if k > rounds // 3 and abs(gap) <= tol:
            converged = True
            break
        # too many rejections -> shrink the step
        log_step -= (1.2 / (1.0 + 0.1 * k)) * gap
    if not converged:
        log_step = best[1]
    return float(np.exp(log_step)), converged
