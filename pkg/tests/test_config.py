"""
Unit tests for configuration (config_manager.py and config.py).

Tests cover environment overrides, the test configuration, and
ExperimentConfig validation and construction from CLI arguments.

To run:
    pytest tests/test_config.py -v
"""

from argparse import Namespace

import pytest

from config import AlgorithmKind, Benchmark, ConfigurationError, ExperimentConfig, GeneratorSpec
from config_manager import AppConfig


def _make_args(**overrides) -> Namespace:
    values = dict(algorithm="matching", benchmark=None, instance=None, problem_class="unweighted",
                  types=3, agents=3, horizon=4, density=0.5, gen_seed=0,
                  trials=None, seed=None, out=None, workers=None)
    values.update(overrides)
    return Namespace(**values)


# =============================================================================
# AppConfig Tests
# =============================================================================

@pytest.mark.unit
class TestAppConfigDefaults:
    """Tests for defaults and environment overrides."""

    def test_defaults(self, monkeypatch):
        for name in ('SOCS_LP_TOL', 'SOCS_TRIALS', 'SOCS_WORKERS', 'SOCS_GENERAL_ADWORDS_C'):
            monkeypatch.delenv(name, raising=False)
        config = AppConfig()
        assert config.solver.tolerance == 1e-9
        assert config.simulation.trials == 100000
        assert config.simulation.workers == 1
        assert config.adwords.general_c == 0.417
        assert config.adwords.large_bid_fraction == pytest.approx(2.0 / 3.0)

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv('SOCS_LP_TOL', '1e-7')
        monkeypatch.setenv('SOCS_TRIALS', '500')
        monkeypatch.setenv('SOCS_VBAR_MODE', 'exact')
        config = AppConfig()
        assert config.solver.tolerance == 1e-7
        assert config.simulation.trials == 500
        assert config.solver.vbar_mode == 'exact'

    def test_bool_env(self, monkeypatch):
        monkeypatch.setenv('SOCS_MULTIWAY_REFINE', 'FALSE')
        assert AppConfig().rates.multiway_refine is False

    def test_bad_env_value_raises(self, monkeypatch):
        monkeypatch.setenv('SOCS_TRIALS', 'many')
        with pytest.raises(ValueError):
            AppConfig()


@pytest.mark.unit
class TestAppConfigForTesting:
    """Tests for the quick test configuration."""

    def test_for_testing_is_small(self):
        config = AppConfig.for_testing()
        assert config.simulation.trials == 2000
        assert config.simulation.base_seed == 12345
        assert config.simulation.workers == 1
        assert config.solver.vbar_samples == 2000

    def test_to_dict_sections(self):
        data = AppConfig.for_testing().to_dict()
        assert set(data) == {'solver', 'simulation', 'adwords', 'balance', 'oracle', 'rates', 'output'}
        assert data['simulation']['trials'] == 2000
        assert data['oracle']['hindsight_cap'] == 14


# =============================================================================
# ExperimentConfig Tests
# =============================================================================

@pytest.mark.unit
class TestExperimentConfigValidation:
    """Tests for ExperimentConfig field validation."""

    def test_generator_experiment(self):
        config = ExperimentConfig(generator=GeneratorSpec(), trials=10)
        assert config.algorithm is AlgorithmKind.MATCHING
        assert config.benchmark is Benchmark.LP

    def test_needs_instance_source(self):
        with pytest.raises(ConfigurationError, match="instance file or a generator"):
            ExperimentConfig()

    def test_rejects_both_sources(self):
        with pytest.raises(ConfigurationError, match="not both"):
            ExperimentConfig(instance_path="inst.json", generator=GeneratorSpec())

    def test_rejects_zero_trials(self):
        with pytest.raises(ConfigurationError, match="at least 1"):
            ExperimentConfig(generator=GeneratorSpec(), trials=0)

    def test_rejects_negative_seed(self):
        with pytest.raises(ConfigurationError, match="non-negative"):
            ExperimentConfig(generator=GeneratorSpec(), base_seed=-3)

    def test_rejects_zero_workers(self):
        with pytest.raises(ConfigurationError, match="workers"):
            ExperimentConfig(generator=GeneratorSpec(), workers=0)

    @pytest.mark.parametrize("confidence", [0.0, 1.0, 1.5])
    def test_rejects_bad_confidence(self, confidence):
        with pytest.raises(ConfigurationError, match="confidence"):
            ExperimentConfig(generator=GeneratorSpec(), confidence=confidence)

    def test_to_dict_uses_enum_values(self):
        data = ExperimentConfig(algorithm=AlgorithmKind.BALANCE_OCS, instance_path="seq.json").to_dict()
        assert data['algorithm'] == "balance-ocs"
        assert data['benchmark'] == "lp"
        assert data['generator'] is None


@pytest.mark.unit
class TestExperimentConfigFromArgs:
    """Tests for building experiments from parsed CLI arguments."""

    def test_falls_back_to_app_config(self):
        app_config = AppConfig.for_testing()
        config = ExperimentConfig.from_args(_make_args(), app_config)
        assert config.trials == 2000
        assert config.base_seed == 12345
        assert config.generator == GeneratorSpec()

    def test_cli_values_win(self):
        args = _make_args(algorithm="random-order", benchmark="exact-dp", trials=50, seed=9, workers=3,
                          out="summary.json")
        config = ExperimentConfig.from_args(args, AppConfig.for_testing())
        assert config.algorithm is AlgorithmKind.RANDOM_ORDER
        assert config.benchmark is Benchmark.EXACT_DP
        assert (config.trials, config.base_seed, config.workers) == (50, 9, 3)
        assert config.output_path == "summary.json"

    def test_instance_path_disables_generator(self):
        config = ExperimentConfig.from_args(_make_args(instance="inst.json"), AppConfig.for_testing())
        assert config.instance_path == "inst.json"
        assert config.generator is None

    def test_unknown_algorithm(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_args(_make_args(algorithm="greedy"), AppConfig.for_testing())

    def test_unknown_benchmark(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig.from_args(_make_args(benchmark="oracle"), AppConfig.for_testing())
