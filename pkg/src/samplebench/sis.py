"""Sequential importance sampling: AIS/SMC sweeps, CRAFT flow transport,
log-Z estimation, and backward transport of target samples.

Weight bookkeeping uses a carry scheme: resampling sets every log weight to
the log-mean of the current weights, so the final log-mean-exp of the system
is exactly the product-of-epoch-averages SMC estimator, and without
resampling it reduces to the plain importance-sampling estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DegenerateWeightsError, TrainingError, UsageError
from .kernels import AnnealedPath, HmcConfig, MhConfig, annealed_logdensity, hmc_step, mh_step
from .numerics.adam import AdamState, adam_step
from .numerics.logspace import log_mean_exp, log_sum_exp
from .numerics.rng import RngStream
from .numerics.tape import Tape


@dataclass
class ParticleSystem:
    positions: np.ndarray    # (N, d)
    log_weights: np.ndarray  # (N,)
    t: int = 0
    nfe: int = 0

    @property
    def n_particles(self) -> int:
        return len(self.positions)


@dataclass
class AffineFlow:
    """Diagonal affine map x -> x * exp(log_scale) + shift; log|det| = sum(log_scale)."""

    shift: np.ndarray
    log_scale: np.ndarray

    @classmethod
    def identity(cls, dim: int) -> "AffineFlow":
        return cls(np.zeros(dim), np.zeros(dim))

    def apply(self, x):
        return x * np.exp(self.log_scale) + self.shift

    def inverse(self, y):
        return (y - self.shift) * np.exp(-self.log_scale)

    @property
    def log_det(self) -> float:
        return float(np.sum(self.log_scale))


def ess_fraction(log_weights) -> float:
    """Normalized effective sample size (sum w)^2 / (N sum w^2), in (0, 1]."""
    lw = np.asarray(log_weights, dtype=float)
    finite = np.isfinite(lw)
    if not finite.any():
        raise UsageError("ess_fraction needs at least one finite weight")
    return float(np.exp(2.0 * log_sum_exp(lw) - log_sum_exp(2.0 * lw) - np.log(len(lw))))


def resample_multinomial(ps: ParticleSystem, rng: RngStream) -> ParticleSystem:
    """Multinomial resampling; weights reset to their common log-mean (carry)."""
    lw = ps.log_weights
    carry = log_mean_exp(lw)
    probs = np.exp(lw - log_sum_exp(lw))
    probs = probs / probs.sum()
    idx = rng.choice(len(lw), size=len(lw), p=probs)
    return ParticleSystem(ps.positions[idx], np.full(len(lw), carry), ps.t, ps.nfe)


@dataclass
class SmcResult:
    particles: ParticleSystem
    log_z: float
    elbo: float
    diagnostics: list = field(default_factory=list)
    log_z_last_epoch: float = 0.0


def _mcmc_move(x, path, t, kernel_cfg, rng, cached):
    """One MCMC transition targeting pi_t, given a cached fused eval at x."""
    beta = path.betas[t]
    if isinstance(kernel_cfg, HmcConfig):
        fused = lambda pts: annealed_logdensity(path, t, pts)
        new_x, accepted, cache = hmc_step(x, fused, kernel_cfg, rng, beta=beta, current=cached)
        return new_x, accepted, cache
    if isinstance(kernel_cfg, MhConfig):
        logdensity = lambda pts: annealed_logdensity(path, t, pts, with_grad=False)
        lp = cached[0] if cached is not None else None
        accept_any = np.zeros(len(x), dtype=bool)
        for _ in range(kernel_cfg.n_substeps):
            x, accepted, lp = mh_step(x, logdensity, kernel_cfg.scale(beta), rng,
                                      current_logdensity=lp)
            accept_any |= accepted
        return x, accept_any, (lp, None)
    raise UsageError(f"unknown kernel config {type(kernel_cfg).__name__}")


def smc_run(path: AnnealedPath, kernel_cfg, n_particles: int, rng: RngStream,
            resample_threshold: float = 0.3, resampling_enabled: bool = True,
            flows: Optional[list] = None, record_diagnostics: bool = True) -> SmcResult:
    """One annealed sweep: reweight, maybe resample, then move, per temperature.

    With flows given (one AffineFlow per temperature, index 1..T), particles are
    transported before the move and the incremental weight picks up the flow
    Jacobian (AFT/CRAFT form); otherwise the AIS increment is used.
    """
    if n_particles < 2:
        raise UsageError("need at least 2 particles")
    big_t = path.n_steps
    if flows is not None and len(flows) != big_t:
        raise UsageError("need one flow per temperature")
    x = path.proposal.sample(rng, n_particles)
    log_w = np.zeros(n_particles)
    last_carry = 0.0
    diagnostics = []
    needs_grad = isinstance(kernel_cfg, HmcConfig)

    for t in range(1, big_t + 1):
        beta_prev, beta = path.betas[t - 1], path.betas[t]
        if flows is None:
            # AIS increment (beta_t - beta_{t-1}) (log gamma - log pi0) at x_{t-1};
            # fused so the gradient doubles as the HMC initial state
            lp0 = path.proposal.log_density(x)
            if needs_grad:
                lg, gg = path.target.logdensity_and_grad(x)
            else:
                lg = path.target.log_density(x)
            log_w = log_w + (beta - beta_prev) * (lg - lp0)
            if needs_grad:
                g0 = path.proposal.grad_log_density(x)
                cache_val = (1.0 - beta) * lp0 + beta * lg
                cache_grad = (1.0 - beta) * g0 + beta * gg
                cached = (cache_val, cache_grad)
            else:
                cached = ((1.0 - beta) * lp0 + beta * lg, None)
        else:
            flow = flows[t - 1]
            prev_val = _annealed_value(path, t - 1, x)
            y = flow.apply(x)
            if needs_grad:
                new_val, new_grad = annealed_logdensity(path, t, y)
                cached = (new_val, new_grad)
            else:
                new_val = _annealed_value(path, t, y)
                cached = (new_val, None)
            log_w = log_w + new_val + flow.log_det - prev_val
            x = y

        if not np.isfinite(log_w).any():
            raise DegenerateWeightsError(t)

        ess = ess_fraction(log_w)
        resampled = False
        if resampling_enabled and ess < resample_threshold:
            carry = log_mean_exp(log_w)
            probs = np.exp(log_w - log_sum_exp(log_w))
            probs = probs / probs.sum()
            idx = rng.choice(n_particles, size=n_particles, p=probs)
            x = x[idx]
            log_w = np.full(n_particles, carry)
            last_carry = carry
            cached = (cached[0][idx], cached[1][idx] if cached[1] is not None else None)
            resampled = True

        x, accepted, _ = _mcmc_move(x, path, t, kernel_cfg, rng, cached)
        if record_diagnostics:
            diagnostics.append(
                {"t": t, "ess_fraction": ess, "resampled": resampled,
                 "acceptance": float(np.mean(accepted))}
            )

    log_z = log_mean_exp(log_w)
    elbo = float(np.mean(log_w[np.isfinite(log_w)]))
    # alternative estimator: increments accumulated since the last resampling epoch
    log_z_last = log_z - last_carry
    return SmcResult(ParticleSystem(x, log_w, big_t, path.target.nfe.value),
                     float(log_z), elbo, diagnostics, float(log_z_last))


def _annealed_value(path, t, x):
    return annealed_logdensity(path, t, x, with_grad=False)


def backward_transport_logweights(path: AnnealedPath, kernel_cfg, target_samples,
                                  rng: RngStream, flows: Optional[list] = None) -> np.ndarray:
    """Reverse sweep from exact target samples accumulating forward increments.

    AIS form: log G_t = (beta_t - beta_{t-1}) (log gamma - log pi0) at x_t.
    CRAFT form inverts the flow and picks up the inverse Jacobian.  Returns the
    per-sample extended forward log-weights for EUBO / ESS_f / Z_f.
    """
    x = np.atleast_2d(np.asarray(target_samples, dtype=float))
    big_t = path.n_steps
    if flows is not None and len(flows) != big_t:
        raise UsageError("need one flow per temperature")
    log_w = np.zeros(len(x))
    for t in range(big_t, 0, -1):
        beta_prev, beta = path.betas[t - 1], path.betas[t]
        if flows is None:
            lp0 = path.proposal.log_density(x)
            lg = path.target.log_density(x)
            log_w = log_w + (beta - beta_prev) * (lg - lp0)
        else:
            flow = flows[t - 1]
            x_prev = flow.inverse(x)
            log_w = log_w + _annealed_value(path, t, x) - _annealed_value(path, t - 1, x_prev) \
                + flow.log_det
            x = x_prev
        # move targeting pi_{t-1}
        if isinstance(kernel_cfg, HmcConfig):
            fused = lambda pts, s=t - 1: annealed_logdensity(path, s, pts)
            x, _, _ = hmc_step(x, fused, kernel_cfg, rng, beta=beta_prev)
        else:
            logdensity = lambda pts, s=t - 1: _annealed_value(path, s, pts)
            lp = None
            for _ in range(kernel_cfg.n_substeps):
                x, _, lp = mh_step(x, logdensity, kernel_cfg.scale(beta_prev), rng,
                                   current_logdensity=lp)
    return log_w


def ais_increment(beta_t, beta_prev, log_gamma_x, log_pi0_x):
    """The AIS incremental log weight at a fixed point."""
    return (beta_t - beta_prev) * (log_gamma_x - log_pi0_x)


def craft_train(path: AnnealedPath, flows: list, kernel_cfg, iterations: int,
                n_particles: int, rng: RngStream, learning_rate: float = 1e-2):
    """Train one diagonal affine flow per temperature on the running SMC sweep.

    Each temperature's flow is updated by Adam on the negative expected log
    incremental weight for that temperature; gradients flow through shift and
    log_scale on the tape.  Returns (flows, elbo_trace, diagnostics).
    """
    big_t = path.n_steps
    if len(flows) != big_t:
        raise UsageError("need one flow per temperature")
    adam_states = [AdamState.init(2 * len(f.shift), learning_rate=learning_rate) for f in flows]
    elbo_trace = []

    for it in range(iterations):
        x = path.proposal.sample(rng, n_particles)
        log_w = np.zeros(n_particles)
        for t in range(1, big_t + 1):
            flow = flows[t - 1]
            beta = path.betas[t]

            # tape loss: - mean[ log gamma_t(T(x)) + log|det T| ]
            tape = Tape()
            shift = tape.leaf(flow.shift)
            log_scale = tape.leaf(flow.log_scale)
            xv = np.asarray(x)
            y = log_scale.exp() * xv + shift
            y_val = y.value
            val, grad = _annealed_fused(path, t, y_val)
            dens = tape.custom(
                np.sum(val) / n_particles, [y],
                lambda adj, g=grad: (adj * g / n_particles,), op="annealed_logdensity",
            )
            loss = -(dens + log_scale.sum())
            if not np.isfinite(loss.value):
                raise TrainingError(f"non-finite CRAFT loss at temperature {t}")
            g_shift, g_ls = tape.grad(loss, [shift, log_scale])

            packed = np.concatenate([flow.shift, flow.log_scale])
            packed_grad = np.concatenate([g_shift, g_ls])
            packed, adam_states[t - 1] = adam_step(packed, packed_grad, adam_states[t - 1])
            d = len(flow.shift)
            flow.shift, flow.log_scale = packed[:d], packed[d:]

            # sweep bookkeeping with the updated flow
            prev_val = _annealed_value(path, t - 1, x)
            y = flow.apply(x)
            new_val, new_grad = _annealed_fused(path, t, y)
            log_w = log_w + new_val + flow.log_det - prev_val
            x = y

            ess = ess_fraction(log_w)
            if ess < 0.3:
                carry = log_mean_exp(log_w)
                probs = np.exp(log_w - log_sum_exp(log_w))
                idx = rng.choice(n_particles, size=n_particles, p=probs / probs.sum())
                x = x[idx]
                log_w = np.full(n_particles, carry)
                new_val, new_grad = new_val[idx], (new_grad[idx] if new_grad is not None else None)

            x, _, _ = _mcmc_move(x, path, t, kernel_cfg, rng, (new_val, new_grad))
        elbo_trace.append(float(np.mean(log_w)))
    return flows, elbo_trace


def _annealed_fused(path, t, x):
    return annealed_logdensity(path, t, x)
