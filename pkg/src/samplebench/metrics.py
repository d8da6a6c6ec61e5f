"""Evaluation criteria over weighted samples, mode probabilities, and point clouds.

Reverse criteria take expectations under the model (samples drawn from q with
log importance weights); forward criteria take expectations under the target
(exact target samples pushed through the model).  Everything is computed in
log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import UsageError
from .numerics.logspace import log_mean_exp, log_sum_exp

REVERSE = "reverse"
FORWARD = "forward"


@dataclass
class WeightedSamples:
    """n points with log importance weights and the direction they were drawn in."""

    samples: np.ndarray
    log_w: np.ndarray
    direction: str

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.log_w = np.asarray(self.log_w, dtype=float)
        if len(self.samples) != len(self.log_w):
            raise UsageError("samples and log_w length mismatch")
        if self.direction not in (REVERSE, FORWARD):
            raise UsageError(f"direction must be 'reverse' or 'forward', got {self.direction!r}")


@dataclass
class MetricReport:
    """One checkpoint's criteria vector; absent criteria stay None."""

    elbo: Optional[float] = None
    eubo: Optional[float] = None
    log_z_rev: Optional[float] = None
    log_z_fwd: Optional[float] = None
    delta_log_z_rev: Optional[float] = None
    delta_log_z_fwd: Optional[float] = None
    ess_rev: Optional[float] = None
    ess_fwd: Optional[float] = None
    emc: Optional[float] = None
    ejs: Optional[float] = None
    mmd: Optional[float] = None
    w2: Optional[float] = None
    nfe_at_eval: int = 0
    elbo_se: Optional[float] = None
    eubo_se: Optional[float] = None

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    CRITERIA = (
        "elbo", "eubo", "log_z_rev", "log_z_fwd", "delta_log_z_rev",
        "delta_log_z_fwd", "ess_rev", "ess_fwd", "emc", "ejs", "mmd", "w2",
    )


# ------------------------------------------------------------- bound criteria
def elbo(ws: WeightedSamples) -> float:
    """Mean log weight under the model: a lower bound on log Z."""
    if ws.direction != REVERSE:
        raise UsageError("elbo needs reverse-direction samples (drawn from the model)")
    return float(np.mean(ws.log_w))


def eubo(ws: WeightedSamples) -> float:
    """Mean log weight under the target: an upper bound on log Z."""
    if ws.direction != FORWARD:
        raise UsageError("eubo needs forward-direction samples (drawn from the target)")
    return float(np.mean(ws.log_w))


def log_z_estimates(ws: WeightedSamples, true_log_z: Optional[float] = None):
    """Importance-weighted log Z estimate and |error| when the truth is known.

    Reverse: log mean(w).  Forward: -log mean(1/w).
    """
    if ws.direction == REVERSE:
        est = log_mean_exp(ws.log_w)
    else:
        est = -log_mean_exp(-ws.log_w)
    delta = abs(true_log_z - est) if true_log_z is not None else None
    return float(est), delta


def ess_estimates(ws: WeightedSamples) -> float:
    """Normalized effective sample size in (0, 1]."""
    lw = ws.log_w
    n = len(lw)
    if ws.direction == REVERSE:
        val = np.exp(2.0 * log_sum_exp(lw) - log_sum_exp(2.0 * lw) - np.log(n))
    else:
        # Z_f / E_pi[w] = 1 / (mean(1/w) * mean(w)); <= 1 by Cauchy-Schwarz
        val = np.exp(2.0 * np.log(n) - log_sum_exp(-lw) - log_sum_exp(lw))
    return float(val)


# ------------------------------------------------------------- mode coverage
def _validate_mode_rows(mode_probs):
    p = np.atleast_2d(np.asarray(mode_probs, dtype=float))
    if p.shape[1] < 2:
        raise UsageError("mode probabilities need at least 2 modes")
    if np.any(p < -1e-12) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
        raise UsageError("mode probability rows must be nonnegative and sum to 1")
    return np.clip(p, 0.0, None)


def _entropy(p, base):
    p = np.asarray(p, dtype=float)
    nz = p > 0
    return float(-(p[nz] * np.log(p[nz])).sum() / np.log(base))


def emc(mode_probs, variant: str = "aggregate") -> float:
    """Entropic mode coverage in [0, 1] (base-M entropy).

    aggregate: entropy of the sample-averaged mode distribution (default);
    literal: average per-sample entropy, which is 0 for any one-hot assignment.
    """
    p = _validate_mode_rows(mode_probs)
    m = p.shape[1]
    if variant == "aggregate":
        return _entropy(p.mean(axis=0), base=m)
    if variant == "literal":
        return float(np.mean([_entropy(row, base=m) for row in p]))
    raise UsageError(f"unknown emc variant {variant!r}")


def ejs(mode_probs, true_probs) -> float:
    """Expected Jensen-Shannon divergence (base 2) between rows and the truth."""
    p = _validate_mode_rows(mode_probs)
    q = np.asarray(true_probs, dtype=float)
    if q.shape != (p.shape[1],):
        raise UsageError("true_probs must be one probability vector over the modes")
    mid = 0.5 * (p + q)

    def kl(a, b):
        nz = a > 0
        return np.sum(np.where(nz, a * (np.log(np.where(nz, a, 1.0)) - np.log(b)), 0.0), axis=-1)

    js = 0.5 * kl(p, mid) + 0.5 * kl(q[None, :], mid)
    return float(np.mean(js) / np.log(2.0))


# ------------------------------------------------- integral probability metrics
def median_sq_distance(x, y) -> float:
    """Median pairwise squared distance over the pooled sample."""
    pooled = np.concatenate([np.atleast_2d(x), np.atleast_2d(y)], axis=0)
    d2 = cdist(pooled, pooled, "sqeuclidean")
    iu = np.triu_indices(len(pooled), k=1)
    return float(np.median(d2[iu]))


def mmd_squared(x, y, bandwidth: Optional[float] = None) -> float:
    """Unbiased MMD^2 estimate (may be negative) with a squared-exponential kernel."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n, m = len(x), len(y)
    if n < 2 or m < 2:
        raise UsageError("mmd needs at least 2 points in each sample")
    alpha = median_sq_distance(x, y) if bandwidth is None else float(bandwidth)
    if alpha <= 0:
        raise UsageError("mmd bandwidth must be positive")
    kxx = np.exp(-cdist(x, x, "sqeuclidean") / alpha)
    kyy = np.exp(-cdist(y, y, "sqeuclidean") / alpha)
    kxy = np.exp(-cdist(x, y, "sqeuclidean") / alpha)
    np.fill_diagonal(kxx, 0.0)
    np.fill_diagonal(kyy, 0.0)
    # order-independent sums keep the estimate bit-identical under permutations
    term_x = _sorted_sum(kxx) / (n * (n - 1))
    term_y = _sorted_sum(kyy) / (m * (m - 1))
    return float(term_x + term_y - 2.0 * _sorted_sum(kxy) / (n * m))


def _sorted_sum(mat) -> float:
    return float(np.sum(np.sort(mat.ravel())))


def mmd(x, y, bandwidth: Optional[float] = None) -> float:
    """Square root of the unbiased MMD^2 estimate, clamped at 0 before the root.

    The bandwidth defaults to the median heuristic on the pooled sample.
    """
    return float(np.sqrt(max(mmd_squared(x, y, bandwidth), 0.0)))


def sinkhorn_w2(x, y, epsilon: float = 1e-3, max_iters: int = 10_000, tol: float = 1e-6):
    """Entropy-regularized 2-Wasserstein distance via log-domain Sinkhorn.

    Uniform marginals, cost |x-y|^2; returns (sqrt(transport cost), converged).
    Epsilon is annealed geometrically down to its target so small-epsilon runs
    make progress; simultaneous potential updates plus an order-independent
    final summation keep the value exactly symmetric in (x, y).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if len(x) < 1 or len(y) < 1:
        raise UsageError("sinkhorn_w2 needs nonempty samples")
    if epsilon <= 0:
        raise UsageError("epsilon must be positive")
    # canonical argument order: swapped inputs run the identical computation
    if (x.shape, x.tobytes()) > (y.shape, y.tobytes()):
        x, y = y, x
    n, m = len(x), len(y)
    cost = cdist(x, y, "sqeuclidean")
    log_a = -np.log(n)
    log_b = -np.log(m)
    f = np.zeros(n)
    g = np.zeros(m)

    span = float(cost.max()) if cost.size else 1.0
    eps_levels = []
    eps = max(span / 8.0, epsilon)
    while eps > epsilon:
        eps_levels.append(eps)
        eps /= 2.0
    eps_levels.append(epsilon)
    warmup_iters = 10

    def sweep(eps, iters, check):
        nonlocal f, g
        for _ in range(iters):
            f = eps * (log_a - _lse_rows((g[None, :] - cost) / eps))
            g = eps * (log_b - _lse_cols((f[:, None] - cost) / eps))
            if check:
                log_plan = (f[:, None] + g[None, :] - cost) / eps
                err = np.abs(np.exp(_lse_rows(log_plan)) - 1.0 / n).sum()
                err += np.abs(np.exp(_lse_cols(log_plan)) - 1.0 / m).sum()
                if err < tol:
                    return True
        return False

    budget = max_iters
    for eps in eps_levels[:-1]:
        iters = min(warmup_iters, budget)
        sweep(eps, iters, check=False)
        budget -= iters
    converged = sweep(epsilon, max(budget, 1), check=True)

    plan = np.exp((f[:, None] + g[None, :] - cost) / epsilon)
    total = float(np.sum(np.sort((plan * cost).ravel())))
    return float(np.sqrt(max(total, 0.0))), converged


def _lse_rows(mat):
    m = mat.max(axis=1, keepdims=True)
    return (np.log(np.exp(mat - m).sum(axis=1, keepdims=True)) + m)[:, 0]


def _lse_cols(mat):
    m = mat.max(axis=0, keepdims=True)
    return (np.log(np.exp(mat - m).sum(axis=0, keepdims=True)) + m)[0, :]
