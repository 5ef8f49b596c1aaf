"""Sampler tests: determinism, call accounting, oracle moments, SDE steps."""

import math

import numpy as np
import pytest

from encdiff.encoder import NonTrainableEncoder, make_encoder
from encdiff.errors import NumericsError
from encdiff.nets import DenoiserNet
from encdiff.sampler import (
    OPTIMAL,
    SamplerConfig,
    ancestral_sample,
    decode_pixels,
    sde_coefficients,
    sde_forward_step,
    sde_step,
)
from encdiff.schedule import logistic
from encdiff.verify import GaussianPosteriorOracle, sampler_moment_oracle, sde_richardson_oracle


class _ZeroRng:
    """Stub generator producing zero noise, for deterministic-part checks."""

    def standard_normal(self, shape=None):
        return np.zeros(shape if shape is not None else ())


class _ZeroScoreModel:
    """x̂ = z/α, so ε̂ = 0 and the score term vanishes."""

    def __init__(self):
        self.calls = 0

    def predict_x(self, z, lam):
        self.calls += 1
        return np.asarray(z) / math.sqrt(logistic(lam))


class _ExplodingModel:
    def __init__(self):
        self.calls = 0

    def predict_x(self, z, lam):
        self.calls += 1
        return np.asarray(z) * 1e200


class TestAncestral:
    def test_seed_reproducibility(self, schedule):
        oracle = GaussianPosteriorOracle([0.3, -0.2], 1.0)
        config = SamplerConfig(steps=32, seed=7)
        r1 = ancestral_sample(oracle, schedule, config, n_chains=16, d=2)
        r2 = ancestral_sample(oracle, schedule, config, n_chains=16, d=2)
        assert np.array_equal(r1.x_out, r2.x_out)
        assert np.array_equal(r1.latent_final, r2.latent_final)

    def test_different_seeds_differ(self, schedule):
        oracle = GaussianPosteriorOracle([0.3, -0.2], 1.0)
        r1 = ancestral_sample(oracle, schedule, SamplerConfig(steps=16, seed=1),
                              n_chains=4, d=2)
        r2 = ancestral_sample(oracle, schedule, SamplerConfig(steps=16, seed=2),
                              n_chains=4, d=2)
        assert not np.allclose(r1.x_out, r2.x_out)

    def test_exactly_T_model_calls_zero_encoder_calls(self, schedule):
        oracle = GaussianPosteriorOracle([0.0, 0.0], 1.0)
        encoder = NonTrainableEncoder()
        for T in (1, 2, 17, 64):
            oracle.calls = 0
            ancestral_sample(oracle, schedule, SamplerConfig(steps=T, seed=0),
                             n_chains=8, d=2)
            assert oracle.calls == T
        assert encoder.calls == 0  # sampling has no encoder path at all

    def test_neural_model_one_forward_per_step(self, schedule):
        net = DenoiserNet(d=2, width=8, seed=0)
        before = net.calls
        ancestral_sample(net, schedule, SamplerConfig(steps=24, seed=1), n_chains=4, d=2)
        assert net.calls - before == 24

    def test_single_step_is_prior_readout(self, schedule):
        """T = 1: the output is the x-prediction at t = 1 from the prior draw."""
        oracle = GaussianPosteriorOracle([0.5, -0.1], 0.8)
        config = SamplerConfig(steps=1, seed=3)
        result = ancestral_sample(oracle, schedule, config, n_chains=8, d=2)
        z1 = np.random.default_rng(3).standard_normal((8, 2))
        np.testing.assert_array_equal(result.latent_final, z1)
        np.testing.assert_allclose(result.x_out,
                                   oracle.predict_x(z1, schedule.at(1.0).lam), rtol=1e-15)

    def test_oracle_moments_quick(self, schedule):
        reports = sampler_moment_oracle([0.3, -0.2], 1.0, schedule, T=128,
                                        n_chains=20_000, seed=0)
        for r in reports:
            assert r.passed, f"{r.name}: {r.measured} vs {r.expected} ± {r.tolerance}"

    @pytest.mark.filterwarnings("ignore:overflow encountered")
    def test_nonfinite_latent_aborts_with_step_index(self, schedule):
        with pytest.raises(NumericsError, match="step"):
            ancestral_sample(_ExplodingModel(), schedule, SamplerConfig(steps=8, seed=0),
                             n_chains=2, d=2)

    def test_trajectory_rows(self, schedule):
        oracle = GaussianPosteriorOracle([0.0, 0.0], 1.0)
        result = ancestral_sample(oracle, schedule, SamplerConfig(steps=32, seed=0),
                                  n_chains=4, d=2, trajectory_every=8)
        assert len(result.trajectory) > 0
        for t, norm in result.trajectory:
            assert 0.0 <= t <= 1.0 and norm >= 0.0

    def test_oracle_chain_matches_marginals_at_checkpoints(self, schedule):
        """Mid-chain latents follow the data-marginal N(α_s m, (α_s²c + σ_s²)I)
        at every snapshot time, within 4 standard errors."""
        mean, c = np.array([0.3, -0.2]), 1.0
        n = 20_000
        oracle = GaussianPosteriorOracle(mean, c)
        config = SamplerConfig(steps=128, variance_mode=OPTIMAL,
                               gap_table=oracle.gap_table, seed=2)
        result = ancestral_sample(oracle, schedule, config, n_chains=n, d=2,
                                  trajectory_every=16)
        assert len(result.moment_snapshots) >= 5
        for t, z_mean, z_var in result.moment_snapshots:
            p = schedule.at(t)
            marg_var = p.alpha_sq * c + p.sigma_sq
            se_mean = math.sqrt(marg_var / n)
            se_var = marg_var * math.sqrt(2.0 / n)
            np.testing.assert_allclose(z_mean, p.alpha * mean, atol=4 * se_mean)
            np.testing.assert_allclose(z_var, marg_var, atol=4 * se_var)

    def test_optimal_variance_requires_gap_table(self):
        with pytest.raises(ValueError):
            SamplerConfig(steps=8, variance_mode=OPTIMAL)

    def test_counterterm_changes_samples(self, schedule):
        oracle = GaussianPosteriorOracle([0.4, 0.1], 0.5)
        base = SamplerConfig(steps=16, seed=5, counterterm=False)
        ct = SamplerConfig(steps=16, seed=5, counterterm=True)
        r_base = ancestral_sample(oracle, schedule, base, n_chains=4, d=2)
        r_ct = ancestral_sample(oracle, schedule, ct, n_chains=4, d=2)
        assert not np.allclose(r_base.x_out, r_ct.x_out)


class TestDecode:
    def test_mode_decode_is_nearest_level(self):
        from encdiff.data import scale_pixels

        levels = scale_pixels(np.arange(256))
        # values chosen off the midpoints between adjacent levels (ties are
        # implementation-defined)
        x = np.array([[-1.0, -0.999, 0.01, 0.32, 1.0]])
        pixels = decode_pixels(x)
        expected = np.abs(x[..., None] - levels).argmin(axis=-1)
        np.testing.assert_array_equal(pixels, expected.astype(np.uint8))

    def test_stochastic_decode_concentrates(self, schedule, rng):
        p0 = schedule.at(0.0)
        x = np.array([[0.5]])
        pixels = decode_pixels(x, rng=rng, stochastic=True, sigma0_sq=p0.sigma_sq,
                               alpha0=p0.alpha)
        assert abs(int(pixels[0, 0]) - 191) <= 1


class TestSde:
    def test_g_squared_matches_transition_variance(self, schedule):
        """g(t)²·dt equals σ²_{t|s} to first order as dt -> 0."""
        from encdiff.process import transition_coefficients

        t = 0.5
        for dt, tol in ((1e-2, 0.1), (1e-3, 0.01), (1e-4, 1e-3)):
            sp, tp = schedule.at(t - dt), schedule.at(t)
            c = transition_coefficients(sp, tp)
            _, g_sq = sde_coefficients(tp)
            assert g_sq * dt / c.sigma2_ts == pytest.approx(1.0, abs=tol)

    def test_zero_score_pure_scaling(self, schedule):
        """With ε̂ = 0 and no noise the update is the d log α/dt drift alone."""
        model = _ZeroScoreModel()
        z = np.array([1.0, -2.0])
        t, dt = 0.5, -1e-3
        z_new, t_new = sde_step(z, t, dt, model, schedule, _ZeroRng())
        dlog_alpha_dt, _ = sde_coefficients(schedule.at(t))
        np.testing.assert_allclose(z_new, z + dlog_alpha_dt * z * dt, rtol=1e-12)
        assert t_new == pytest.approx(t + dt)

    def test_reverse_requires_negative_dt(self, schedule):
        model = _ZeroScoreModel()
        with pytest.raises(ValueError):
            sde_step(np.zeros(2), 0.5, 1e-3, model, schedule, _ZeroRng())

    def test_final_step_clamps_to_zero(self, schedule):
        model = _ZeroScoreModel()
        _, t_new = sde_step(np.ones(2), 0.0005, -1e-3, model, schedule, _ZeroRng())
        assert t_new == 0.0

    def test_forward_requires_positive_dt(self, schedule):
        with pytest.raises(ValueError):
            sde_forward_step(np.zeros(2), 0.5, -1e-3, make_encoder("identity"),
                             np.zeros(2), schedule, None)

    def test_forward_richardson(self, schedule):
        report = sde_richardson_oracle(schedule)
        assert report.passed, report.details

    def test_reverse_chain_tracks_ancestral_moments(self, schedule):
        """Euler–Maruyama from t=1 to 0 with the exact predictor lands near the
        data distribution (coarse check: mean within 5%, variance within 15%)."""
        oracle = GaussianPosteriorOracle([0.5, -0.5], 0.25)
        rng = np.random.default_rng(11)
        n, T = 20_000, 400
        z = rng.standard_normal((n, 2))
        t = 1.0
        dt = -1.0 / T
        for _ in range(T - 1):
            z, t = sde_step(z, t, dt, oracle, schedule, rng)
        x_out = oracle.predict_x(z, schedule.at(t).lam)
        np.testing.assert_allclose(x_out.mean(axis=0), [0.5, -0.5], atol=0.05)
        np.testing.assert_allclose(x_out.var(axis=0), 0.25, rtol=0.15)
