"""
Experiment configuration for Monte Carlo runs.

This module describes a single experiment: where the instance comes from,
which algorithm rounds it, how many trials run, and what the result is
compared against. Values come from CLI arguments with fallbacks to the
environment-backed AppConfig.

Usage:
    from config import ExperimentConfig, AlgorithmKind

    config = ExperimentConfig(
        algorithm=AlgorithmKind.MATCHING,
        instance_path="instance.json",
        trials=10000,
    )
"""

import logging
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Optional, Dict, Any

from config_manager import AppConfig
from validators import InputValidator, ValidationError


class ConfigurationError(Exception):
    """Raised when required configuration is missing or invalid."""
    pass


class AlgorithmKind(Enum):
    """Rounding algorithms the harness can run."""
    INDEPENDENT = "independent"
    MATCHING = "matching"
    RANDOM_ORDER = "random-order"
    ADWORDS = "adwords"
    MULTIWAY_OCS = "multiway-ocs"
    BALANCE_OCS = "balance-ocs"
    DISPLAY = "display"
    QUERY_COMMIT = "query-commit"


class Benchmark(Enum):
    """What the algorithm's value is compared against."""
    LP = "lp"
    HINDSIGHT_MC = "hindsight-mc"
    EXACT_DP = "exact-dp"


@dataclass
class GeneratorSpec:
    """Parameters of `instance_model.generate`."""
    problem_class: str = "unweighted"
    num_types: int = 3
    num_agents: int = 3
    horizon: int = 4
    density: float = 0.5
    seed: int = 0


@dataclass
class ExperimentConfig:
    """
    One Monte Carlo experiment.

    Exactly one of `instance_path` and `generator` names the instance.

    Attributes:
        algorithm: Rounding algorithm to simulate.
        instance_path: JSON instance (or AdWords sequence) file.
        generator: Random instance parameters when no file is given.
        trials: Number of independent trials (>= 1).
        base_seed: Trial k draws from streams keyed by (base_seed, k).
        benchmark: Value benchmark for the ALG/benchmark ratio.
        output_path: Where to write the summary (None = stdout only).
        workers: Worker processes.
        sigma: Standard errors of slack in rate verdicts.
        confidence: Wilson interval confidence.
    """
    algorithm: AlgorithmKind = AlgorithmKind.MATCHING
    instance_path: Optional[str] = None
    generator: Optional[GeneratorSpec] = None
    trials: int = 10000
    base_seed: int = 0
    benchmark: Benchmark = Benchmark.LP
    output_path: Optional[str] = None
    workers: int = 1
    sigma: float = 3.0
    confidence: float = 0.99
    extra: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self._validate()

    def _validate(self):
        """Validate field ranges and the instance source."""
        try:
            self.trials = InputValidator.validate_trials(self.trials)
            self.base_seed = InputValidator.validate_seed(self.base_seed, field="base_seed")
        except ValidationError as e:
            raise ConfigurationError(str(e))
        if self.instance_path is None and self.generator is None:
            raise ConfigurationError(
                "An experiment needs an instance file or a generator"
            )
        if self.instance_path is not None and self.generator is not None:
            raise ConfigurationError(
                "Give either an instance file or a generator, not both"
            )
        if self.workers < 1:
            raise ConfigurationError("workers must be at least 1")
        if not 0 < self.confidence < 1:
            raise ConfigurationError("confidence must be in (0, 1)")

    @classmethod
    def from_args(cls, args, app_config: Optional[AppConfig] = None) -> 'ExperimentConfig':
        """
        Build an experiment from parsed CLI arguments.

        Missing arguments fall back to the environment-backed AppConfig.
        """
        app_config = app_config or AppConfig()
        sim = app_config.simulation

        try:
            algorithm = AlgorithmKind(args.algorithm)
            benchmark = Benchmark(getattr(args, 'benchmark', None) or Benchmark.LP.value)
        except ValueError as e:
            raise ConfigurationError(str(e))

        generator = None
        instance_path = getattr(args, 'instance', None)
        if instance_path is None:
            generator = GeneratorSpec(
                problem_class=getattr(args, 'problem_class', 'unweighted'),
                num_types=getattr(args, 'types', 3),
                num_agents=getattr(args, 'agents', 3),
                horizon=getattr(args, 'horizon', 4),
                density=getattr(args, 'density', 0.5),
                seed=getattr(args, 'gen_seed', 0),
            )

        trials = args.trials if getattr(args, 'trials', None) is not None else sim.trials
        seed = args.seed if getattr(args, 'seed', None) is not None else sim.base_seed

        config = cls(
            algorithm=algorithm,
            instance_path=instance_path,
            generator=generator,
            trials=trials,
            base_seed=seed,
            benchmark=benchmark,
            output_path=getattr(args, 'out', None),
            workers=getattr(args, 'workers', None) or sim.workers,
            sigma=sim.sigma,
            confidence=sim.confidence,
        )
        logging.info(f"Experiment config: {config.to_dict()}")
        return config

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['algorithm'] = self.algorithm.value
        data['benchmark'] = self.benchmark.value
        return data
