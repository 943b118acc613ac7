import numpy as np
import pytest

from mimofusion.harness import _trial_draws
from mimofusion.lmmse import (
    lmmse_estimate,
    lmmse_estimate_single,
    lmmse_mse_bound,
    mse_closed_form,
)
from mimofusion.np_detector import NpTestContext, SingleAntennaContext
from mimofusion.scenario import (
    GainVector,
    Scenario,
    derive_rng,
    sample_channel,
    sample_observation,
    sample_scenario,
)


def estimation_errors(sc, ch, gv, trials, seed):
    """Empirical squared errors and estimates of the signal over fresh trials."""
    ctx = NpTestContext.build(gv, ch, sc)
    err_sq = np.empty(trials)
    est_minus_truth = np.empty(trials, dtype=complex)
    chunk = 4096
    w = ctx.whitened_steering
    for start in range(0, trials, chunk):
        stop = min(start + chunk, trials)
        theta, v, noise = _trial_draws(sc, ch.m_antennas, seed, (0,), start, stop)
        y1 = (ch.h_matrix * gv.gains) @ v + noise + np.outer(ch.h_matrix @ gv.gains, theta)
        est = (w.conj() @ y1) / (1.0 / sc.signal_var + ctx.snr)
        err_sq[start:stop] = np.abs(theta - est) ** 2
        est_minus_truth[start:stop] = est - theta
    return ctx, err_sq, est_minus_truth


class TestClosedForm:
    def test_zero_snr_returns_prior_variance(self):
        assert mse_closed_form(0.0, 2.5) == pytest.approx(2.5, rel=1e-12)

    def test_mse_vanishes_at_large_snr(self):
        assert mse_closed_form(1e15, 1.0) < 1e-14

    def test_monotone_in_snr(self):
        values = [mse_closed_form(g, 1.0) for g in (0.0, 0.1, 1.0, 10.0, 1000.0)]
        assert np.all(np.diff(values) < 0)

    def test_rejects_negative_snr(self):
        with pytest.raises(ValueError):
            mse_closed_form(-0.1, 1.0)


class TestEstimator:
    def test_zero_gains_give_prior(self):
        sc = sample_scenario(4, derive_rng(301))
        ch = sample_channel(sc, 8, derive_rng(302))
        gv = GainVector.from_gains(np.zeros(4, complex))
        ctx = NpTestContext.build(gv, ch, sc)
        y = sample_observation(ch, GainVector.equal_power(1.0, 4), sc, "H1", derive_rng(303))
        result = lmmse_estimate(ctx, y)
        assert result.estimate == 0.0
        assert result.theoretical_mse == pytest.approx(sc.signal_var, rel=1e-12)

    def test_empirical_mse_matches_theory(self):
        sc = sample_scenario(6, derive_rng(304))
        ch = sample_channel(sc, 32, derive_rng(305))
        gv = GainVector.equal_power(5.0, 6)
        ctx, err_sq, _ = estimation_errors(sc, ch, gv, 100_000, 306)
        theory = mse_closed_form(ctx.snr, sc.signal_var)
        assert np.mean(err_sq) == pytest.approx(theory, rel=0.03)

    def test_estimator_unbiased(self):
        sc = sample_scenario(5, derive_rng(307))
        ch = sample_channel(sc, 16, derive_rng(308))
        gv = GainVector.equal_power(3.0, 5)
        ctx, err_sq, diff = estimation_errors(sc, ch, gv, 50_000, 309)
        stderr = np.std(diff.real) / np.sqrt(diff.size)
        assert abs(np.mean(diff.real)) <= 4 * stderr
        assert abs(np.mean(diff.imag)) <= 4 * np.std(diff.imag) / np.sqrt(diff.size)

    def test_bigger_snr_means_smaller_mse(self):
        sc = sample_scenario(6, derive_rng(310))
        ch = sample_channel(sc, 32, derive_rng(311))
        weak = NpTestContext.build(GainVector.equal_power(0.5, 6), ch, sc)
        strong = NpTestContext.build(GainVector.equal_power(50.0, 6), ch, sc)
        assert strong.snr > weak.snr
        assert mse_closed_form(strong.snr, 1.0) < mse_closed_form(weak.snr, 1.0)

    def test_matches_per_observation_call(self):
        sc = sample_scenario(4, derive_rng(312))
        ch = sample_channel(sc, 8, derive_rng(313))
        gv = GainVector.equal_power(2.0, 4)
        ctx = NpTestContext.build(gv, ch, sc)
        y = sample_observation(ch, gv, sc, "H1", derive_rng(314))
        result = lmmse_estimate(ctx, y)
        manual = np.vdot(ctx.whitened_steering, y.y) / (1.0 / sc.signal_var + ctx.snr)
        assert result.estimate == pytest.approx(complex(manual), rel=1e-12)


class TestSingleAntennaEstimator:
    def test_empirical_mse_matches_theory(self):
        sc = sample_scenario(5, derive_rng(320))
        h = sample_channel(sc, 1, derive_rng(321)).h_matrix[0]
        gv = GainVector.equal_power(4.0, 5)
        ctx = SingleAntennaContext.build(gv, h, sc)
        theta, v, noise = _trial_draws(sc, 1, 322, (0,), 0, 50_000)
        y1 = (h * gv.gains) @ v + noise[0] + np.sum(gv.gains * h) * theta
        results = [lmmse_estimate_single(ctx, complex(y), sc.signal_var) for y in y1[:100]]
        g_s = ctx.sigma_s_sq / (sc.signal_var * ctx.sigma_w_sq)
        theory = mse_closed_form(g_s, sc.signal_var)
        assert results[0].theoretical_mse == pytest.approx(theory, rel=1e-12)
        coherent = np.sum(gv.gains * h)
        est = (np.conj(coherent) / ctx.sigma_w_sq) * y1 / (1.0 / sc.signal_var + g_s)
        assert np.mean(np.abs(theta - est) ** 2) == pytest.approx(theory, rel=0.03)
        # the vectorized path matches the per-sample call
        assert results[3].estimate == pytest.approx(complex(est[3]), rel=1e-12)


class TestBounds:
    def test_noisy_sensors_bound_at_prior(self):
        sc = Scenario(np.array([2.0, 5.0]), np.array([1e12, 1e12]), 1.3, 0.3, 2.0)
        assert lmmse_mse_bound(sc, "low_power") == pytest.approx(1.3, rel=1e-6)
        assert lmmse_mse_bound(sc, "high_power") == pytest.approx(1.3, rel=1e-6)

    def test_floor_below_low_power_bound(self):
        sc = sample_scenario(10, derive_rng(330))
        assert lmmse_mse_bound(sc, "high_power") <= lmmse_mse_bound(sc, "low_power")

    def test_bad_regime_rejected(self):
        sc = sample_scenario(3, derive_rng(331))
        with pytest.raises(ValueError):
            lmmse_mse_bound(sc, "mid")
