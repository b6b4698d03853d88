"""
Unit tests for the Monte Carlo harness (harness.py).

Tests cover interval estimates, experiment setup for every algorithm
family, worker-count invariance and rate verdicts.

To run:
    pytest tests/test_harness.py -v
"""

import math

import numpy as np
import pytest

from config import AlgorithmKind, Benchmark, ConfigurationError, ExperimentConfig, GeneratorSpec
from exact_oracles import exact_state_dp
from harness import (
    Estimate,
    Experiment,
    StatSummary,
    _chunks,
    compare_to_rate,
    mean_estimate,
    monte_carlo,
    outcome_estimate,
    proportion_estimate,
    wilson_interval,
)
from instance_model import cumulative_allocation, save_instance
from config_manager import RateConfig
from rates import RateKind, curve, multiway_split
from tests.schemas.report_schemas import RateComparisonReport, SummaryReport


def _make_config(algorithm=AlgorithmKind.MATCHING, trials=200, **overrides):
    generator = overrides.pop('generator', GeneratorSpec())
    return ExperimentConfig(algorithm=algorithm, generator=generator, trials=trials, base_seed=11, **overrides)


def _make_summary(miss_mean, y, stderr=0.001, algorithm="matching"):
    estimate = Estimate(miss_mean, stderr, miss_mean - 0.003, miss_mean + 0.003, 1000)
    return StatSummary(algorithm=algorithm, benchmark_kind="lp", trials=1000, base_seed=0,
                       agents={"j1": estimate}, y={"j1": y}, alg=estimate, benchmark=1.0, ratio=estimate)


# =============================================================================
# Statistics Tests
# =============================================================================

@pytest.mark.unit
class TestEstimates:
    """Tests for interval estimates."""

    def test_wilson_half_width(self):
        low, high = wilson_interval(5000, 10000)
        assert (high - low) / 2 == pytest.approx(0.0129, abs=5e-4)
        assert low < 0.5 < high

    def test_wilson_extremes_stay_in_unit_interval(self):
        assert wilson_interval(0, 50)[0] == 0.0
        assert wilson_interval(50, 50)[1] == 1.0

    def test_wilson_needs_trials(self):
        with pytest.raises(ValueError):
            wilson_interval(0, 0)

    def test_proportion(self):
        estimate = proportion_estimate(np.array([1, 0, 0, 1]))
        assert estimate.mean == 0.5
        assert estimate.trials == 4
        assert estimate.low < 0.5 < estimate.high

    def test_mean(self):
        estimate = mean_estimate(np.array([0.2, 0.4, 0.6]))
        assert estimate.mean == pytest.approx(0.4)
        assert estimate.stderr == pytest.approx(0.2 / math.sqrt(3))

    def test_outcome_dispatch(self):
        binary = outcome_estimate(np.array([0.0, 1.0, 1.0]))
        fractional = outcome_estimate(np.array([0.0, 0.5, 1.0]))
        assert binary.low >= 0.0
        assert fractional.low < 0.0

    def test_chunks_cover_every_trial(self):
        chunks = _chunks(10, 3)
        covered = [k for start, stop in chunks for k in range(start, stop)]
        assert covered == list(range(10))


# =============================================================================
# Experiment Tests
# =============================================================================

@pytest.mark.unit
class TestExperiment:
    """Tests for experiment setup and single trials."""

    def test_matching_experiment(self, test_config):
        experiment = Experiment(_make_config(), test_config)
        assert experiment.agents == experiment.instance.agent_ids
        for j in experiment.agents:
            assert experiment.y[j] == pytest.approx(
                cumulative_allocation(experiment.instance, experiment.allocation, j))
        assert experiment.benchmark_value == pytest.approx(experiment.allocation.objective(experiment.instance))

    def test_trial_is_reproducible(self, test_config):
        experiment = Experiment(_make_config(), test_config)
        first, second = experiment.trial(3), experiment.trial(3)
        assert np.array_equal(first.miss, second.miss)
        assert first.value == second.value

    def test_instance_file(self, tmp_path, test_config, chain_instance):
        path = tmp_path / "chain.json"
        save_instance(chain_instance[0], path)
        config = ExperimentConfig(algorithm=AlgorithmKind.MATCHING, instance_path=str(path), trials=50)
        experiment = Experiment(config, test_config)
        assert experiment.agents == ["1", "2", "3"]

    def test_display_kind_needs_display_instance(self, test_config):
        config = _make_config(generator=GeneratorSpec(problem_class="display-ads"))
        with pytest.raises(ConfigurationError, match="does not round Display Ads"):
            Experiment(config, test_config)

    def test_query_commit_needs_query_commit_instance(self, tmp_path, test_config, chain_instance):
        path = tmp_path / "chain.json"
        save_instance(chain_instance[0], path)
        config = ExperimentConfig(algorithm=AlgorithmKind.QUERY_COMMIT, instance_path=str(path), trials=5)
        with pytest.raises(ConfigurationError, match="query-commit instance"):
            Experiment(config, test_config)

    def test_sequence_has_no_exact_benchmark(self, test_config):
        config = _make_config(AlgorithmKind.MULTIWAY_OCS, benchmark=Benchmark.EXACT_DP)
        with pytest.raises(ConfigurationError, match="No exact oracle"):
            Experiment(config, test_config)

    def test_sequence_benchmark_is_optimum(self, test_config):
        experiment = Experiment(_make_config(AlgorithmKind.MULTIWAY_OCS), test_config)
        assert experiment.benchmark_value == pytest.approx(experiment.sequence.optimum())


# =============================================================================
# Monte Carlo Tests
# =============================================================================

@pytest.mark.unit
class TestMonteCarlo:
    """Tests for trial aggregation."""

    def test_summary_shape(self, test_config):
        summary = monte_carlo(_make_config(), test_config)
        SummaryReport(**summary.to_dict())
        assert summary.trials == 200
        assert summary.ratio.mean == pytest.approx(summary.alg.mean / summary.benchmark)

    def test_exact_benchmark_matches_simulation(self, test_config):
        config = _make_config(trials=3000, benchmark=Benchmark.EXACT_DP)
        experiment = Experiment(config, test_config)
        exact = exact_state_dp(experiment.instance, experiment.allocation).expected_value
        summary = monte_carlo(config, experiment=experiment)
        assert summary.benchmark == pytest.approx(exact)
        assert abs(summary.alg.mean - exact) <= 4 * summary.alg.stderr + 1e-9

    def test_hindsight_benchmark_is_per_trial(self, test_config):
        summary = monte_carlo(_make_config(benchmark=Benchmark.HINDSIGHT_MC), test_config)
        assert summary.benchmark >= summary.alg.mean - 1e-12
        assert summary.ratio.mean <= 1.0 + 1e-12

    def test_same_summary_for_any_worker_count(self, test_config):
        single = monte_carlo(_make_config(trials=40), test_config)
        pooled = monte_carlo(_make_config(trials=40, workers=2), test_config)
        assert single.to_dict() == pooled.to_dict()

    @pytest.mark.parametrize("algorithm,problem_class", [
        (AlgorithmKind.INDEPENDENT, "unweighted"),
        (AlgorithmKind.RANDOM_ORDER, "vertex-weighted"),
        (AlgorithmKind.ADWORDS, "adwords"),
        (AlgorithmKind.DISPLAY, "display-ads"),
        (AlgorithmKind.QUERY_COMMIT, "unweighted"),
    ])
    def test_every_algorithm_runs(self, algorithm, problem_class, test_config):
        config = _make_config(algorithm, trials=30, generator=GeneratorSpec(problem_class=problem_class))
        summary = monte_carlo(config, test_config)
        assert all(0.0 <= e.mean <= 1.0 for e in summary.agents.values())
        if algorithm is AlgorithmKind.DISPLAY:
            assert summary.levels and summary.level_y

    def test_rates_hold_on_generated_instance(self, test_config):
        summary = monte_carlo(_make_config(trials=2000), test_config)
        comparison = compare_to_rate(summary)
        assert comparison.passed, [r.to_dict() for r in comparison.failures]


# =============================================================================
# Verdict Tests
# =============================================================================

@pytest.mark.unit
class TestCompareToRate:
    """Tests for PASS/FAIL rows."""

    def test_pass_below_rate(self):
        g = curve(RateKind.GENERAL_MATCHING)(1.0)
        comparison = compare_to_rate(_make_summary(g - 0.01, 1.0))
        assert comparison.passed
        assert comparison.rows[0].margin == pytest.approx(0.01)
        RateComparisonReport(**comparison.to_dict())

    def test_fail_reports_instead_of_raising(self):
        g = curve(RateKind.GENERAL_MATCHING)(1.0)
        comparison = compare_to_rate(_make_summary(g + 0.05, 1.0))
        assert not comparison.passed
        assert comparison.failures[0].to_dict()['verdict'] == 'FAIL'

    def test_sigma_slack(self):
        g = curve(RateKind.GENERAL_MATCHING)(1.0)
        assert compare_to_rate(_make_summary(g + 0.002, 1.0), sigma=3.0).passed
        assert not compare_to_rate(_make_summary(g + 0.002, 1.0), sigma=1.0).passed

    def test_explicit_rate(self):
        comparison = compare_to_rate(_make_summary(0.3, 1.0), kind="baseline")
        assert comparison.kind is RateKind.BASELINE
        assert comparison.rows[0].rate == pytest.approx(math.exp(-1))

    def test_agents_above_one_get_no_row(self):
        comparison = compare_to_rate(_make_summary(0.9, 1.2))
        assert comparison.rows == []
        assert comparison.passed

    def test_level_above_one_gets_no_row(self):
        summary = _make_summary(0.9, 0.5, algorithm="display")
        estimate = summary.agents["j1"]
        summary.levels = {"j1": {1.0: estimate, 2.0: estimate}}
        summary.level_y = {"j1": {1.0: 0.5, 2.0: 1.5}}
        comparison = compare_to_rate(summary, kind="baseline")
        assert [r.level for r in comparison.rows] == [1.0]

    def test_multiway_rate_follows_rate_config(self):
        coarse, _ = multiway_split(0.7, grid_step=0.1, refine=False)
        rates = RateConfig(multiway_grid=0.1, multiway_refine=False)
        comparison = compare_to_rate(_make_summary(0.1, 0.7), kind="multiway-ocs-adwords", rates=rates)
        assert comparison.rows[0].rate == pytest.approx(math.exp(-0.7) * coarse)
