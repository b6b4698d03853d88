"""
Application configuration management.

This module provides centralized configuration for the SOCS lab: solver
tolerances, Monte Carlo defaults, algorithm constants and enumeration caps,
loaded from environment variables with sensible defaults.

Usage:
    from config_manager import AppConfig

    config = AppConfig()
    print(config.solver.tolerance)  # 1e-09
    print(config.simulation.trials)  # 100000
"""

import os
from dataclasses import dataclass
from typing import Dict, Any


def _env(name: str, default, type_fn=str):
    """Read an environment variable with type conversion.

    For bools, accepts 'true'/'false' (case-insensitive).
    """
    raw = os.getenv(name, str(default))
    if type_fn is bool:
        return raw.lower() == 'true'
    return type_fn(raw)


@dataclass
class SolverConfig:
    """
    Configuration for the LP relaxations.

    Attributes:
        tolerance: Cutting-plane convergence tolerance.
        separation_cap: Largest per-agent support enumerated exactly.
        round_factor: Cutting-plane rounds allowed per LP variable.
        vbar_exact_cap: Largest subset for exact v-bar evaluation.
        vbar_enum_cap: Largest support separated subset by subset (exact and Monte Carlo v-bar).
        vbar_mode: Default v-bar mode ('exact', 'large_bids_exact', 'monte_carlo').
        vbar_samples: Sample count for Monte Carlo v-bar.

    Environment Variables:
        SOCS_LP_TOL: Tolerance (default: 1e-9)
        SOCS_SEPARATION_CAP: Support cap (default: 22)
        SOCS_ROUND_FACTOR: Rounds per variable (default: 10)
        SOCS_VBAR_EXACT_CAP: Exact v-bar cap (default: 20)
        SOCS_VBAR_ENUM_CAP: Subset-by-subset separation cap (default: 12)
        SOCS_VBAR_MODE: v-bar mode (default: large_bids_exact)
        SOCS_VBAR_SAMPLES: Monte Carlo samples (default: 20000)
    """
    tolerance: float = 1e-9
    separation_cap: int = 22
    round_factor: int = 10
    vbar_exact_cap: int = 20
    vbar_enum_cap: int = 12
    vbar_mode: str = "large_bids_exact"
    vbar_samples: int = 20000


@dataclass
class SimulationConfig:
    """
    Configuration for Monte Carlo experiments.

    Attributes:
        trials: Default number of trials.
        base_seed: Base seed; trial k uses streams keyed by (base_seed, k).
        workers: Worker processes (1 = run inline).
        sigma: Standard errors of slack allowed by rate comparisons.
        confidence: Confidence level of Wilson intervals.

    Environment Variables:
        SOCS_TRIALS: Trial count (default: 100000)
        SOCS_SEED: Base seed (default: 0)
        SOCS_WORKERS: Worker processes (default: 1)
        SOCS_SIGMA: Sigma multiplier (default: 3.0)
        SOCS_CONFIDENCE: Interval confidence (default: 0.99)
    """
    trials: int = 100000
    base_seed: int = 0
    workers: int = 1
    sigma: float = 3.0
    confidence: float = 0.99


@dataclass
class AdWordsConfig:
    """
    Configuration for the AdWords algorithms.

    Attributes:
        large_bid_fraction: A bid is large (and marks) when b >= fraction * B.
        general_c: Offset constant of the general AdWords rate curve.

    Environment Variables:
        SOCS_LARGE_BID_FRACTION: Large-bid fraction (default: 2/3)
        SOCS_GENERAL_ADWORDS_C: Rate offset (default: 0.417)
    """
    large_bid_fraction: float = 2.0 / 3.0
    general_c: float = 0.417


@dataclass
class BalanceConfig:
    """
    Configuration for the Balance allocator curves.

    Environment Variables:
        SOCS_BALANCE_ZMAX: Quadrature truncation point (default: 40)
        SOCS_BALANCE_STEP: Tabulation step (default: 0.002)
        SOCS_BALANCE_TOL: Inversion tolerance (default: 1e-12)
    """
    z_max: float = 40.0
    step: float = 0.002
    tolerance: float = 1e-12


@dataclass
class OracleConfig:
    """
    Enumeration caps for exact oracles and brute-force benchmarks.

    Environment Variables:
        SOCS_HINDSIGHT_CAP: Realized AdWords items for brute force (default: 14)
        SOCS_RECURRENCE_CAP: Agents in a subset table (default: 16)
        SOCS_DP_STATE_CAP: States in the exact DP (default: 1000000)
        SOCS_PERMUTATION_CAP: Steps for random-order enumeration (default: 7)
        SOCS_QC_NEIGHBOR_CAP: Neighbors in a vertex decomposition (default: 6)
    """
    hindsight_cap: int = 14
    recurrence_cap: int = 16
    dp_state_cap: int = 1000000
    permutation_cap: int = 7
    qc_neighbor_cap: int = 6


@dataclass
class RateConfig:
    """
    Configuration for numerically evaluated rate curves.

    Environment Variables:
        SOCS_MULTIWAY_GRID: Split-grid step (default: 0.01)
        SOCS_MULTIWAY_REFINE: Local refinement after the grid (default: true)
    """
    multiway_grid: float = 0.01
    multiway_refine: bool = True


@dataclass
class OutputConfig:
    """
    Configuration for logs and terminal tables.

    Environment Variables:
        SOCS_LOG_DIR: Log directory (default: logs)
        SOCS_TABLE_FORMAT: tabulate format (default: simple)
        SOCS_FLOAT_DIGITS: Digits printed in tables (default: 6)
    """
    log_dir: str = "logs"
    table_format: str = "simple"
    float_digits: int = 6


class AppConfig:
    """
    Main application configuration.

    Aggregates all configuration sections.

    Usage:
        config = AppConfig()
        tol = config.solver.tolerance
        trials = config.simulation.trials

    All settings can be overridden via environment variables.
    See individual config classes for environment variable names.
    """

    def __init__(self):
        """Initialize configuration from environment variables."""
        self.solver = self._load_solver_config()
        self.simulation = self._load_simulation_config()
        self.adwords = self._load_adwords_config()
        self.balance = self._load_balance_config()
        self.oracle = self._load_oracle_config()
        self.rates = self._load_rate_config()
        self.output = self._load_output_config()

    def _load_solver_config(self) -> SolverConfig:
        """Load LP solver configuration from environment."""
        return SolverConfig(
            tolerance=_env('SOCS_LP_TOL', 1e-9, float),
            separation_cap=_env('SOCS_SEPARATION_CAP', 22, int),
            round_factor=_env('SOCS_ROUND_FACTOR', 10, int),
            vbar_exact_cap=_env('SOCS_VBAR_EXACT_CAP', 20, int),
            vbar_enum_cap=_env('SOCS_VBAR_ENUM_CAP', 12, int),
            vbar_mode=_env('SOCS_VBAR_MODE', 'large_bids_exact'),
            vbar_samples=_env('SOCS_VBAR_SAMPLES', 20000, int),
        )

    def _load_simulation_config(self) -> SimulationConfig:
        """Load Monte Carlo configuration from environment."""
        return SimulationConfig(
            trials=_env('SOCS_TRIALS', 100000, int),
            base_seed=_env('SOCS_SEED', 0, int),
            workers=_env('SOCS_WORKERS', 1, int),
            sigma=_env('SOCS_SIGMA', 3.0, float),
            confidence=_env('SOCS_CONFIDENCE', 0.99, float),
        )

    def _load_adwords_config(self) -> AdWordsConfig:
        """Load AdWords constants from environment."""
        return AdWordsConfig(
            large_bid_fraction=_env('SOCS_LARGE_BID_FRACTION', 2.0 / 3.0, float),
            general_c=_env('SOCS_GENERAL_ADWORDS_C', 0.417, float),
        )

    def _load_balance_config(self) -> BalanceConfig:
        """Load Balance curve configuration from environment."""
        return BalanceConfig(
            z_max=_env('SOCS_BALANCE_ZMAX', 40.0, float),
            step=_env('SOCS_BALANCE_STEP', 0.002, float),
            tolerance=_env('SOCS_BALANCE_TOL', 1e-12, float),
        )

    def _load_oracle_config(self) -> OracleConfig:
        """Load enumeration caps from environment."""
        return OracleConfig(
            hindsight_cap=_env('SOCS_HINDSIGHT_CAP', 14, int),
            recurrence_cap=_env('SOCS_RECURRENCE_CAP', 16, int),
            dp_state_cap=_env('SOCS_DP_STATE_CAP', 1000000, int),
            permutation_cap=_env('SOCS_PERMUTATION_CAP', 7, int),
            qc_neighbor_cap=_env('SOCS_QC_NEIGHBOR_CAP', 6, int),
        )

    def _load_rate_config(self) -> RateConfig:
        """Load rate-curve configuration from environment."""
        return RateConfig(
            multiway_grid=_env('SOCS_MULTIWAY_GRID', 0.01, float),
            multiway_refine=_env('SOCS_MULTIWAY_REFINE', True, bool),
        )

    def _load_output_config(self) -> OutputConfig:
        """Load output configuration from environment."""
        return OutputConfig(
            log_dir=_env('SOCS_LOG_DIR', 'logs'),
            table_format=_env('SOCS_TABLE_FORMAT', 'simple'),
            float_digits=_env('SOCS_FLOAT_DIGITS', 6, int),
        )

    def to_dict(self) -> Dict[str, Any]:
        """
        Convert configuration to dictionary.

        Useful for logging or for stamping experiment outputs.
        """
        return {
            'solver': {
                'tolerance': self.solver.tolerance,
                'separation_cap': self.solver.separation_cap,
                'round_factor': self.solver.round_factor,
                'vbar_exact_cap': self.solver.vbar_exact_cap,
                'vbar_enum_cap': self.solver.vbar_enum_cap,
                'vbar_mode': self.solver.vbar_mode,
                'vbar_samples': self.solver.vbar_samples
            },
            'simulation': {
                'trials': self.simulation.trials,
                'base_seed': self.simulation.base_seed,
                'workers': self.simulation.workers,
                'sigma': self.simulation.sigma,
                'confidence': self.simulation.confidence
            },
            'adwords': {
                'large_bid_fraction': self.adwords.large_bid_fraction,
                'general_c': self.adwords.general_c
            },
            'balance': {
                'z_max': self.balance.z_max,
                'step': self.balance.step,
                'tolerance': self.balance.tolerance
            },
            'oracle': {
                'hindsight_cap': self.oracle.hindsight_cap,
                'recurrence_cap': self.oracle.recurrence_cap,
                'dp_state_cap': self.oracle.dp_state_cap,
                'permutation_cap': self.oracle.permutation_cap,
                'qc_neighbor_cap': self.oracle.qc_neighbor_cap
            },
            'rates': {
                'multiway_grid': self.rates.multiway_grid,
                'multiway_refine': self.rates.multiway_refine
            },
            'output': {
                'log_dir': self.output.log_dir,
                'table_format': self.output.table_format,
                'float_digits': self.output.float_digits
            }
        }

    @classmethod
    def for_testing(cls) -> 'AppConfig':
        """
        Create a configuration suitable for testing.

        Small trial counts and a single worker for quick test execution.
        """
        config = cls()
        config.simulation = SimulationConfig(
            trials=2000,
            base_seed=12345,
            workers=1,
            sigma=config.simulation.sigma,
            confidence=config.simulation.confidence
        )
        config.solver.vbar_samples = 2000
        return config
