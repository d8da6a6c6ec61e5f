"""Compute one MetricReport for a sampler against a target."""

from __future__ import annotations

import math

import numpy as np

from ..errors import UnsupportedCriterionError
from ..metrics import (
    FORWARD,
    REVERSE,
    MetricReport,
    WeightedSamples,
    ejs,
    elbo,
    emc,
    ess_estimates,
    eubo,
    log_z_estimates,
    mmd,
    sinkhorn_w2,
)
from ..numerics.rng import RngStream


def evaluate_sampler(sampler, target, n_samples: int, rng: RngStream,
                     target_samples=None, ipm_subsample: int = 512,
                     sinkhorn_iters: int = 300, emc_variant: str = "aggregate") -> MetricReport:
    """Full criteria vector; criteria whose prerequisites are missing stay None."""
    x, log_w = sampler.sample_with_logweights(n_samples, rng)
    ws = WeightedSamples(x, log_w, REVERSE)
    report = MetricReport()
    report.elbo = elbo(ws)
    report.elbo_se = float(np.std(log_w, ddof=1) / math.sqrt(len(log_w)))
    report.log_z_rev, report.delta_log_z_rev = log_z_estimates(ws, target.true_log_z)
    report.ess_rev = ess_estimates(ws)

    if target.mode_model is not None:
        probs = target.mode_model.prob(x)
        report.emc = emc(probs, variant=emc_variant)
        if target.mode_model.true_mode_probs is not None:
            report.ejs = ejs(probs, target.mode_model.true_mode_probs)

    if target.exact_sampler is not None:
        y = target_samples if target_samples is not None else target.exact_sampler(rng, n_samples)
        try:
            log_w_f = sampler.backward_logweights(y, rng)
            fws = WeightedSamples(y, log_w_f, FORWARD)
            report.eubo = eubo(fws)
            report.eubo_se = float(np.std(log_w_f, ddof=1) / math.sqrt(len(log_w_f)))
            report.log_z_fwd, report.delta_log_z_fwd = log_z_estimates(fws, target.true_log_z)
            report.ess_fwd = ess_estimates(fws)
        except UnsupportedCriterionError:
            pass
        k = min(ipm_subsample, len(x), len(y))
        if k >= 2:
            report.mmd = mmd(x[:k], y[:k])
            report.w2, _ = sinkhorn_w2(x[:k], y[:k], max_iters=sinkhorn_iters)

    report.nfe_at_eval = target.nfe.value
    return report
