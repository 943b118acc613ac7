import numpy as np
import pytest

from mimofusion import np_gains
from mimofusion.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    config_from_manifest,
    estimate_pd_pfa,
    manifest_dict,
    resolve_gains,
    run_experiment,
    simulate_statistics,
)
from mimofusion.scenario import GainVector, derive_rng, sample_channel, sample_scenario


@pytest.fixture(scope="module")
def scenario():
    return sample_scenario(5, derive_rng(601))


def small_config(scenario, **overrides):
    defaults = dict(
        experiment_id="unit",
        scenario=scenario,
        sweep=((4.0, 12),),
        trials_per_scenario=200,
        n_scenarios=4,
        target_pfa=0.05,
        master_seed=602,
        detectors=("np", "ed"),
        gain_policies=("waterfill", "equal"),
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


class TestEstimatePdPfa:
    def test_threshold_extremes(self, scenario):
        ch = sample_channel(scenario, 8, derive_rng(603))
        gv = GainVector.equal_power(2.0, 5)
        pd, pfa, _ = estimate_pd_pfa("np", 0.0, gv, ch, scenario, 500, 604)
        assert pd == 1.0 and pfa == 1.0
        pd, pfa, _ = estimate_pd_pfa("np", np.inf, gv, ch, scenario, 500, 604)
        assert pd == 0.0 and pfa == 0.0

    def test_requires_minimum_trials(self, scenario):
        ch = sample_channel(scenario, 8, derive_rng(605))
        with pytest.raises(ValueError):
            estimate_pd_pfa("np", 1.0, GainVector.equal_power(1.0, 5), ch, scenario, 50, 606)

    def test_statistics_reusable_across_thresholds(self, scenario):
        ch = sample_channel(scenario, 8, derive_rng(607))
        gv = GainVector.equal_power(2.0, 5)
        t0, t1 = simulate_statistics("np", gv, ch, scenario, 1000, 608)
        # one sampled set yields a whole operating curve
        pfas = [np.mean(t0 > thr) for thr in np.quantile(t0, [0.5, 0.9, 0.99])]
        assert pfas[0] > pfas[1] > pfas[2]

    def test_single_antenna_requires_one_antenna_channel(self, scenario):
        ch = sample_channel(scenario, 4, derive_rng(609))
        with pytest.raises(ValueError):
            simulate_statistics("np_single", GainVector.equal_power(1.0, 5), ch, scenario, 10, 610)


class TestConfigValidation:
    def test_rejects_bad_values(self, scenario):
        with pytest.raises(ValueError):
            small_config(scenario, trials_per_scenario=0)
        with pytest.raises(ValueError):
            small_config(scenario, target_pfa=1.0)
        with pytest.raises(ValueError):
            small_config(scenario, sweep=())
        with pytest.raises(ValueError):
            small_config(scenario, detectors=("bogus",))
        with pytest.raises(ValueError):
            small_config(scenario, detectors=("np_single",), gain_policies=("waterfill",))

    def test_curves_filter_compatible_pairs(self, scenario):
        cfg = small_config(
            scenario,
            detectors=("np", "np_single"),
            gain_policies=("waterfill", "single_antenna_optimal"),
        )
        assert cfg.curves() == (("np", "waterfill"), ("np_single", "single_antenna_optimal"))


class TestRunExperiment:
    def test_single_point_row_per_curve(self, scenario):
        cfg = small_config(scenario)
        result = run_experiment(cfg)
        assert len(result.rows) == len(cfg.curves())
        assert not result.errors
        for row in result.rows:
            assert row.trials == cfg.trials_per_scenario * cfg.n_scenarios
            assert 0.0 <= row.pd_emp <= 1.0
            assert 0.0 <= row.pfa_emp <= 1.0

    def test_empirical_agrees_with_theory_within_four_stderr(self, scenario):
        cfg = small_config(
            scenario,
            sweep=((6.0, 24),),
            trials_per_scenario=2000,
            n_scenarios=5,
            detectors=("np",),
            gain_policies=("waterfill",),
        )
        row = run_experiment(cfg).rows[0]
        stderr = max(row.stderr, 1e-4)
        assert abs(row.pd_emp - row.pd_theory) <= 4 * stderr
        assert abs(row.mse_emp - row.mse_theory) <= 0.05 * row.mse_theory

    def test_pd_nondecreasing_in_power(self, scenario):
        sweep = tuple((p, 16) for p in (0.5, 4.0, 32.0))
        cfg = small_config(scenario, sweep=sweep, detectors=("np",), gain_policies=("waterfill",))
        rows = run_experiment(cfg).rows
        pds = [r.pd_emp for r in rows]
        slack = 2 * max(r.stderr for r in rows)
        assert pds[1] >= pds[0] - slack
        assert pds[2] >= pds[1] - slack

    def test_deterministic_across_runs_and_threads(self, scenario):
        cfg = small_config(scenario)
        base = run_experiment(cfg).to_csv()
        assert run_experiment(cfg).to_csv() == base
        assert run_experiment(cfg, threads=3).to_csv() == base

    def test_failed_point_recorded_not_fatal(self, scenario, monkeypatch):
        cfg = small_config(
            scenario,
            sweep=((4.0, 12), (5.0, 13)),
            detectors=("np",),
            gain_policies=("waterfill",),
        )
        real_waterfill = np_gains.waterfill

        def exploding(sc, m, p, tol=1e-9):
            if m == 13:
                raise RuntimeError("forced failure")
            return real_waterfill(sc, m, p, tol)

        monkeypatch.setattr("mimofusion.harness.np_gains.waterfill", exploding)
        result = run_experiment(cfg)
        assert len(result.errors) == 1 and result.errors[0][0] == 1
        assert len(result.rows) == 2
        assert np.isnan(result.rows[1].pd_emp)
        assert result.rows[1].trials == 0

    def test_csv_schema(self, scenario):
        result = run_experiment(small_config(scenario))
        lines = result.to_csv().splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert len(lines) == 1 + len(result.rows)
        # NaN cells serialize as empty strings
        first = lines[1].split(",")
        assert len(first) == len(CSV_COLUMNS)
        assert "np.float64" not in result.to_csv()

    def test_numpy_sweep_values_serialize_plainly(self, scenario):
        cfg = small_config(
            scenario,
            sweep=((np.float64(2.0), np.int64(8)),),
            trials_per_scenario=100,
            n_scenarios=2,
            detectors=("np",),
            gain_policies=("equal",),
        )
        csv_text = run_experiment(cfg).to_csv()
        assert "np.float64" not in csv_text and "np.int64" not in csv_text


class TestManifest:
    def test_round_trip_reproduces_csv(self, scenario):
        cfg = small_config(scenario)
        replayed = config_from_manifest(manifest_dict(cfg))
        assert run_experiment(replayed).to_csv() == run_experiment(cfg).to_csv()

    def test_scenario_frozen_explicitly(self, scenario):
        data = manifest_dict(small_config(scenario))
        assert data["scenario"]["distances"] == list(scenario.distances)
        assert data["scenario"]["meas_noise_vars"] == list(scenario.meas_noise_vars)


class TestResolveGains:
    def test_policies_meet_power_budget(self, scenario):
        for policy in ("waterfill", "equal", "qclp", "closed_form_low", "closed_form_high"):
            gv = resolve_gains(policy, scenario, 32, 3.0)
            assert gv.sum_power == pytest.approx(3.0, rel=1e-9)

    def test_unknown_policy_rejected(self, scenario):
        with pytest.raises(ValueError):
            resolve_gains("bogus", scenario, 32, 3.0)
