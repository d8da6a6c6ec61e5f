import itertools
import math

import numpy as np
import pytest

from samplebench.errors import DegenerateWeightsError
from samplebench.kernels import AnnealedPath, HmcConfig, MhConfig
from samplebench.numerics import RngStream
from samplebench.numerics.logspace import log_mean_exp, log_sum_exp
from samplebench.sis import (
    AffineFlow,
    ParticleSystem,
    ais_increment,
    backward_transport_logweights,
    craft_train,
    ess_fraction,
    resample_multinomial,
    smc_run,
)
from samplebench.targets import (
    DiagonalGaussian,
    make_gaussian_target,
    make_unnormalized_gaussian_target,
)


def hmc_cfg(step=0.3):
    return HmcConfig(leapfrog_steps=10, step_size_low=step, step_size_high=step)


# --------------------------------------------------------------- ess fraction
def test_ess_uniform_weights():
    assert ess_fraction(np.zeros(10)) == pytest.approx(1.0)


def test_ess_one_hot():
    lw = np.full(8, -np.inf)
    lw[3] = 0.0
    assert ess_fraction(lw) == pytest.approx(1.0 / 8.0)


def test_ess_2110():
    assert ess_fraction(np.log([2.0, 1.0, 1.0, 1e-12])) == pytest.approx(2.0 / 3.0, rel=1e-6)


# ----------------------------------------------------------------- resampling
def test_resample_uniform_keeps_uniform_weights():
    rng = RngStream(1, 0)
    ps = ParticleSystem(rng.normal((20, 2)), np.zeros(20))
    out = resample_multinomial(ps, rng)
    assert out.n_particles == 20
    np.testing.assert_allclose(out.log_weights, 0.0, atol=1e-12)
    # every output row must be one of the inputs
    for row in out.positions:
        assert any(np.array_equal(row, orig) for orig in ps.positions)


def test_resample_one_hot_copies_single_particle():
    rng = RngStream(2, 0)
    positions = np.arange(10, dtype=float)[:, None]
    lw = np.full(10, -np.inf)
    lw[4] = 0.0
    out = resample_multinomial(ParticleSystem(positions, lw), rng)
    np.testing.assert_array_equal(out.positions, np.full((10, 1), 4.0))


def test_resample_binomial_concentration():
    # N = 10^4 particles at two sites with weights (3/4, 1/4): copy counts land
    # within 4 binomial sigmas of (7500, 2500)
    rng = RngStream(3, 0)
    n = 10_000
    ps = ParticleSystem(
        np.repeat(np.array([[0.0], [1.0]]), n // 2, axis=0),
        np.repeat(np.log([0.75 / (n // 2), 0.25 / (n // 2)]), n // 2),
    )
    out = resample_multinomial(ps, rng)
    n_zero = np.sum(out.positions == 0.0)
    sigma = math.sqrt(n * 0.75 * 0.25)
    assert abs(n_zero - 0.75 * n) < 4 * sigma


def test_resample_preserves_mass_and_resets_ess():
    rng = RngStream(4, 0)
    lw = RngStream(5, 0).normal(50)
    ps = ParticleSystem(RngStream(6, 0).normal((50, 3)), lw)
    out = resample_multinomial(ps, rng)
    assert ess_fraction(out.log_weights) == pytest.approx(1.0)
    # total mass preserved: N * mean(w) carried into every weight
    assert log_sum_exp(out.log_weights) == pytest.approx(log_sum_exp(lw), abs=1e-9)


# ------------------------------------------------------------------- smc runs
def test_smc_identical_endpoints_never_resamples():
    # gamma normalized equal to pi0: all increments vanish
    target = make_gaussian_target(2)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2), target, 6)
    res = smc_run(path, hmc_cfg(0.5), 64, RngStream(7, 0))
    assert res.log_z == pytest.approx(0.0, abs=1e-12)
    assert res.elbo == pytest.approx(0.0, abs=1e-12)
    assert all(d["ess_fraction"] == pytest.approx(1.0) for d in res.diagnostics)
    assert not any(d["resampled"] for d in res.diagnostics)


def test_smc_gaussian_to_gaussian_unbiased():
    # pi0 = N(0, 2^2), gamma = exp(-x^2/2): Z = sqrt(2 pi)
    target = make_unnormalized_gaussian_target(1, scale=1.0)
    true_z = math.sqrt(2 * math.pi)
    estimates = []
    for run in range(100):
        path = AnnealedPath.linear(DiagonalGaussian.isotropic(1, 2.0), target, 8)
        res = smc_run(path, hmc_cfg(0.5), 64, RngStream(1000, run))
        estimates.append(math.exp(res.log_z))
    estimates = np.asarray(estimates)
    se = estimates.std(ddof=1) / math.sqrt(len(estimates))
    assert abs(estimates.mean() - true_z) < 3 * se + 1e-12


def test_smc_no_resampling_logz_identity():
    target = make_unnormalized_gaussian_target(2, scale=1.5)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 3.0), target, 10)
    res = smc_run(path, hmc_cfg(0.4), 128, RngStream(8, 0), resampling_enabled=False)
    lw = res.particles.log_weights
    assert res.log_z == pytest.approx(log_sum_exp(lw) - math.log(len(lw)), abs=1e-12)


def test_smc_degenerate_weights_error():
    target = make_gaussian_target(1)
    bad = make_gaussian_target(1)
    bad.log_unnorm = lambda x: np.full(len(np.atleast_2d(x)), -np.inf)
    bad.grad_log_unnorm = lambda x: np.zeros_like(np.atleast_2d(x))
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(1), bad, 4)
    with pytest.raises(DegenerateWeightsError) as err:
        smc_run(path, hmc_cfg(), 16, RngStream(9, 0))
    assert err.value.temperature_index == 1


def test_smc_weight_update_enumeration_oracle():
    # 3 temperatures on a 2-point state space: sum over paths of q * w equals
    # sum_x gamma(x) exactly, with pi_t-invariant Metropolis moves
    pi0 = np.array([0.5, 0.5])
    gamma = np.array([0.2, 1.7])
    betas = np.array([0.0, 0.35, 0.7, 1.0])
    log_pi0 = np.log(pi0)
    log_gamma = np.log(gamma)

    def gamma_t(beta):
        return np.exp((1 - beta) * log_pi0 + beta * log_gamma)

    def metropolis_kernel(beta):
        dens = gamma_t(beta)
        k = np.zeros((2, 2))
        for i in range(2):
            j = 1 - i
            move = 0.5 * min(1.0, dens[j] / dens[i])
            k[i, j] = move
            k[i, i] = 1.0 - move
        return k

    kernels = [metropolis_kernel(b) for b in betas[1:]]
    total = 0.0
    for path_states in itertools.product([0, 1], repeat=4):
        q = pi0[path_states[0]]
        log_w = 0.0
        for t in range(1, 4):
            prev = path_states[t - 1]
            log_w += ais_increment(betas[t], betas[t - 1], log_gamma[prev], log_pi0[prev])
            q *= kernels[t - 1][prev, path_states[t]]
        total += q * math.exp(log_w)
    assert total == pytest.approx(gamma.sum(), abs=1e-12)


# ---------------------------------------------------------------- affine flow
def test_affine_flow_roundtrip_1000():
    rng = RngStream(10, 0)
    for _ in range(1000):
        d = int(rng.integers(5)) + 1
        flow = AffineFlow(rng.normal(d), 0.5 * rng.normal(d))
        x = rng.normal(d)
        err = np.max(np.abs(flow.inverse(flow.apply(x)) - x))
        assert err < 1e-9


def test_affine_flow_logdet():
    flow = AffineFlow(np.zeros(3), np.full(3, math.log(2.0)))
    assert flow.log_det == pytest.approx(3 * math.log(2.0))
    ident = AffineFlow.identity(4)
    assert ident.log_det == 0.0
    np.testing.assert_array_equal(ident.apply(np.arange(4.0)), np.arange(4.0))


def test_identity_flow_reduces_to_ais_increment():
    target = make_unnormalized_gaussian_target(2, scale=1.5)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 3.0), target, 5)
    flows = [AffineFlow.identity(2) for _ in range(5)]
    res_flow = smc_run(path, hmc_cfg(0.4), 64, RngStream(11, 0), flows=flows,
                       resampling_enabled=False)
    res_ais = smc_run(path, hmc_cfg(0.4), 64, RngStream(11, 0), resampling_enabled=False)
    assert res_flow.log_z == pytest.approx(res_ais.log_z, abs=1e-9)
    np.testing.assert_allclose(res_flow.particles.log_weights,
                               res_ais.particles.log_weights, atol=1e-9)


# ---------------------------------------------------------- backward transport
def test_backward_identical_endpoints_constant_weights():
    target = make_gaussian_target(2)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2), target, 6)
    samples = target.exact_sampler(RngStream(12, 0), 200)
    lw = backward_transport_logweights(path, hmc_cfg(0.5), samples, RngStream(13, 0))
    np.testing.assert_allclose(lw, 0.0, atol=1e-12)  # log Z = 0, optimal increments


def test_backward_single_step_is_plain_importance_weight():
    target = make_unnormalized_gaussian_target(1, scale=1.3)
    path = AnnealedPath(DiagonalGaussian.isotropic(1, 2.0), target, np.array([0.0, 1.0]))
    samples = target.exact_sampler(RngStream(14, 0), 50)
    lw = backward_transport_logweights(path, hmc_cfg(0.5), samples, RngStream(15, 0))
    expected = target.log_unnorm(samples) - path.proposal.log_density(samples)
    np.testing.assert_allclose(lw, expected, atol=1e-12)


def test_backward_forward_z_identity_gaussian():
    # E_pi[1/w] = 1/Z exactly; batch means give an honest standard error
    target = make_unnormalized_gaussian_target(1, scale=1.0)
    true_z = math.sqrt(2 * math.pi)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(1, 2.0), target, 6)
    batch_means = []
    for rep in range(40):
        samples = target.exact_sampler(RngStream(16, rep), 2000)
        lw = backward_transport_logweights(path, hmc_cfg(0.5), samples, RngStream(17, rep))
        batch_means.append(np.exp(-lw).mean())
    batch_means = np.asarray(batch_means)
    se = batch_means.std(ddof=1) / math.sqrt(len(batch_means))
    assert abs(batch_means.mean() - 1.0 / true_z) < 3 * se


# ---------------------------------------------------------------- craft train
def test_craft_identity_flows_match_ais_at_init():
    target = make_unnormalized_gaussian_target(2, scale=1.5)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 2.0), target, 4)
    flows = [AffineFlow.identity(2) for _ in range(4)]
    # zero iterations of training leaves flows at identity
    trained, trace = craft_train(path, flows, hmc_cfg(0.4), 0, 32, RngStream(18, 0))
    for f in trained:
        np.testing.assert_array_equal(f.shift, np.zeros(2))
        np.testing.assert_array_equal(f.log_scale, np.zeros(2))


def test_craft_training_improves_elbo_on_shifted_gaussian():
    # proposal N(0, 1), target N(3, 0.7^2): affine flows can bridge exactly
    rng = RngStream(19, 0)
    target = make_gaussian_target(2, scale=0.7, mean=3.0)
    path = AnnealedPath.linear(DiagonalGaussian.isotropic(2, 1.0), target, 6)
    flows = [AffineFlow.identity(2) for _ in range(6)]
    trained, trace = craft_train(path, flows, hmc_cfg(0.25), 150, 128, rng,
                                 learning_rate=5e-2)
    assert np.mean(trace[-10:]) > np.mean(trace[:10]) + 0.05
    assert np.mean(trace[-10:]) > -0.2  # close to log Z = 0
