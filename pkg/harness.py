"""
Monte Carlo experiment driver.

An Experiment bundles the instance, its fractional allocation (or
adversarial sequence), the rounding runner and the benchmark. Trial k draws
all of its randomness from TrialStreams(base_seed, k), so summaries do not
depend on how trials are spread over worker processes: chunks are run on a
ProcessPoolExecutor and folded back in trial order.

Usage:
    from config import ExperimentConfig, AlgorithmKind, GeneratorSpec
    from harness import monte_carlo, compare_to_rate

    config = ExperimentConfig(algorithm=AlgorithmKind.MATCHING, generator=GeneratorSpec(), trials=5000)
    summary = monte_carlo(config)
    verdict = compare_to_rate(summary)
    print(verdict.passed)
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.stats import norm

from config import AlgorithmKind, Benchmark, ConfigurationError, ExperimentConfig
from config_manager import AppConfig, RateConfig
from exact_oracles import exact_state_dp
from instance_model import (
    ArrivalSequence, Instance, ProblemClass, QueryCommitInstance, cumulative_allocation, generate,
    hindsight_optimum, load_instance, sample_arrivals,
)
from lp_relaxations import VbarMode, solve_adwords_lp, solve_matching_lp
from query_commit import QueryCommitRunner, neighborhood_type, random_query_commit
from rates import RateKind, curve
from rng_streams import TrialStreams
from socs_adwords import (
    AdWordsRunner, AdWordsSequence, MultiwayRunner, balance_allocation, balance_parameters, load_sequence,
    random_sequence,
)
from socs_displayads import DisplayRunner
from socs_matching import MatchingRunner, matched_value, shuffled_order

RATE_FOR_KIND = {
    AlgorithmKind.INDEPENDENT: RateKind.BASELINE,
    AlgorithmKind.MATCHING: RateKind.GENERAL_MATCHING,
    AlgorithmKind.RANDOM_ORDER: RateKind.RANDOM_ORDER_MATCHING,
    AlgorithmKind.ADWORDS: RateKind.GENERAL_ADWORDS,
    AlgorithmKind.MULTIWAY_OCS: RateKind.MULTIWAY_OCS_ADWORDS,
    AlgorithmKind.BALANCE_OCS: RateKind.MULTIWAY_OCS_ADWORDS,
    AlgorithmKind.DISPLAY: RateKind.GENERAL_DISPLAY,
    AlgorithmKind.QUERY_COMMIT: RateKind.RANDOM_ORDER_MATCHING,
}

SEQUENCE_KINDS = (AlgorithmKind.MULTIWAY_OCS, AlgorithmKind.BALANCE_OCS)
MATCHING_KINDS = (AlgorithmKind.INDEPENDENT, AlgorithmKind.MATCHING, AlgorithmKind.RANDOM_ORDER)


# =============================================================================
# Statistics
# =============================================================================

def _z(confidence: float) -> float:
    return float(norm.ppf(1 - (1 - confidence) / 2))


def wilson_interval(successes: int, trials: int, confidence: float = 0.99) -> Tuple[float, float]:
    """
    Wilson score interval for a binomial proportion.

    Example:
        5000 of 10000 at 99% -> half-width about 0.0129
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    z = _z(confidence)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(centre - half, 0.0), min(centre + half, 1.0)


@dataclass
class Estimate:
    """Point estimate with standard error and a confidence interval."""
    mean: float
    stderr: float
    low: float
    high: float
    trials: int

    def to_dict(self) -> dict:
        return {'mean': self.mean, 'stderr': self.stderr, 'low': self.low, 'high': self.high,
                'trials': self.trials}


def proportion_estimate(outcomes: np.ndarray, confidence: float = 0.99) -> Estimate:
    """Estimate of a 0/1 outcome with a Wilson interval."""
    n = len(outcomes)
    successes = int(np.sum(outcomes))
    p = successes / n
    low, high = wilson_interval(successes, n, confidence)
    return Estimate(p, math.sqrt(p * (1 - p) / n), low, high, n)


def mean_estimate(samples: np.ndarray, confidence: float = 0.99) -> Estimate:
    """Estimate of a bounded mean with a normal interval."""
    n = len(samples)
    mean = float(math.fsum(samples)) / n
    stderr = float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    half = _z(confidence) * stderr
    return Estimate(mean, stderr, mean - half, mean + half, n)


def _is_binary(samples: np.ndarray) -> bool:
    return bool(np.all((samples == 0) | (samples == 1)))


def outcome_estimate(samples: np.ndarray, confidence: float = 0.99) -> Estimate:
    return proportion_estimate(samples, confidence) if _is_binary(samples) else mean_estimate(samples, confidence)


@dataclass
class StatSummary:
    """
    Aggregated outcome of one experiment.

    Attributes:
        agents: Per-agent miss estimate: Pr[unmatched] or E[unspent fraction].
        levels: Display Ads: per-agent, per-weight-level Pr[no edge of weight >= w].
        y: Per-agent cumulative fractional allocation.
        level_y: Display Ads: per-agent, per-level y_j(w).
        alg: Algorithm value.
        benchmark: Benchmark value (LP objective, mean hindsight optimum or exact expected value).
        ratio: ALG / benchmark.
    """
    algorithm: str
    benchmark_kind: str
    trials: int
    base_seed: int
    agents: Dict[str, Estimate]
    y: Dict[str, float]
    alg: Estimate
    benchmark: float
    ratio: Estimate
    levels: Dict[str, Dict[float, Estimate]] = field(default_factory=dict)
    level_y: Dict[str, Dict[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'algorithm': self.algorithm,
            'benchmark_kind': self.benchmark_kind,
            'trials': self.trials,
            'base_seed': self.base_seed,
            'agents': {j: e.to_dict() for j, e in self.agents.items()},
            'y': dict(self.y),
            'levels': {j: {str(w): e.to_dict() for w, e in lv.items()} for j, lv in self.levels.items()},
            'level_y': {j: {str(w): v for w, v in lv.items()} for j, lv in self.level_y.items()},
            'alg': self.alg.to_dict(),
            'benchmark': self.benchmark,
            'ratio': self.ratio.to_dict(),
        }


# =============================================================================
# Experiments
# =============================================================================

@dataclass
class TrialOutcome:
    miss: np.ndarray
    level_miss: np.ndarray
    value: float
    benchmark: float = math.nan


class Experiment:
    """
    Everything a trial needs, built once per experiment and shipped to workers.

    Raises:
        ConfigurationError: algorithm and benchmark do not fit the instance.
    """

    def __init__(self, config: ExperimentConfig, app_config: Optional[AppConfig] = None):
        self.config = config
        self.app_config = app_config or AppConfig()
        self.kind = config.algorithm
        self.instance: Optional[Instance] = None
        self.sequence: Optional[AdWordsSequence] = None
        self.qc: Optional[QueryCommitInstance] = None
        self.levels: List[Tuple[str, float]] = []
        self.level_y: Dict[str, Dict[float, float]] = {}

        source = self._load()
        if self.kind in SEQUENCE_KINDS:
            self._prepare_sequence(source)
        elif self.kind is AlgorithmKind.QUERY_COMMIT:
            self._prepare_query_commit(source)
        else:
            self._prepare_stochastic(source)
        self.benchmark_value = self._fixed_benchmark()
        logging.info(f"Experiment ready: {self.kind.value} over {len(self.agents)} agents, "
                     f"benchmark {config.benchmark.value} = {self.benchmark_value}")

    def _load(self):
        config = self.config
        if config.instance_path is not None:
            if self.kind in SEQUENCE_KINDS:
                return load_sequence(config.instance_path)
            return load_instance(config.instance_path)
        gen = config.generator
        if self.kind in SEQUENCE_KINDS:
            return random_sequence(gen.num_agents, gen.horizon, gen.density, gen.seed)
        if self.kind is AlgorithmKind.QUERY_COMMIT:
            return random_query_commit(gen.num_types, gen.num_agents, gen.density, gen.seed,
                                       self.app_config.oracle.qc_neighbor_cap)
        return generate(gen.problem_class, gen.num_types, gen.num_agents, gen.horizon,
                        gen.density, gen.seed)

    def _prepare_sequence(self, sequence: AdWordsSequence):
        if self.kind is AlgorithmKind.BALANCE_OCS:
            balance = self.app_config.balance
            rates = self.app_config.rates
            rate = curve(RateKind.MULTIWAY_OCS_ADWORDS, grid_step=rates.multiway_grid,
                         refine=rates.multiway_refine)
            params = balance_parameters(rate, balance.z_max, balance.step, balance.tolerance)
            sequence = balance_allocation(sequence, params)
        self.sequence = sequence
        self.agents = list(sequence.budgets)
        self.runner = MultiwayRunner(sequence, self.app_config.adwords.large_bid_fraction)
        self.y = {j: 0.0 for j in self.agents}
        for step in sequence.steps:
            for j, share in (step.mu or {}).items():
                self.y[j] += share * step.bids.get(j, 0.0) / sequence.budgets[j]

    def _prepare_query_commit(self, qc):
        if not isinstance(qc, QueryCommitInstance):
            raise ConfigurationError("query-commit needs a query-commit instance")
        self.qc = qc
        self.runner = QueryCommitRunner(qc, cap=self.app_config.oracle.qc_neighbor_cap)
        self.instance = self.runner.instance
        self.allocation = self.runner.allocation
        self.agents = self.instance.agent_ids
        self.y = {j: cumulative_allocation(self.instance, self.allocation, j) for j in self.agents}

    def _prepare_stochastic(self, instance):
        if not isinstance(instance, Instance):
            raise ConfigurationError(f"{self.kind.value} needs a Non-IID instance")
        self.instance = instance
        solver = self.app_config.solver
        if self.kind is AlgorithmKind.ADWORDS:
            self.allocation, _ = solve_adwords_lp(instance, solver.tolerance, VbarMode(solver.vbar_mode),
                                                  self.app_config)
            self.runner = AdWordsRunner(instance, self.allocation, self.app_config.adwords.large_bid_fraction)
        else:
            self.allocation, _ = solve_matching_lp(instance, solver.tolerance, self.app_config)
            if self.kind is AlgorithmKind.DISPLAY:
                self.runner = DisplayRunner(instance, self.allocation)
            elif instance.problem_class is ProblemClass.DISPLAY_ADS:
                raise ConfigurationError(f"{self.kind.value} does not round Display Ads instances")
            else:
                self.runner = MatchingRunner(instance, self.allocation)
        self.agents = instance.agent_ids
        self.y = {j: cumulative_allocation(instance, self.allocation, j) for j in self.agents}
        if self.kind is AlgorithmKind.DISPLAY:
            for j in self.agents:
                self.level_y[j] = {}
                for w in instance.distinct_weights(j):
                    self.levels.append((j, w))
                    self.level_y[j][w] = cumulative_allocation(instance, self.allocation, j, weight_level=w)

    def _fixed_benchmark(self) -> float:
        benchmark = self.config.benchmark
        if self.sequence is not None:
            if benchmark is Benchmark.EXACT_DP:
                raise ConfigurationError("No exact oracle for adversarial sequences")
            return self.sequence.optimum(self.app_config.oracle.hindsight_cap)
        if benchmark is Benchmark.LP:
            return self.allocation.objective(self.instance)
        if benchmark is Benchmark.EXACT_DP:
            if self.kind is AlgorithmKind.QUERY_COMMIT:
                kind = AlgorithmKind.RANDOM_ORDER
            else:
                kind = self.kind
            oracle = self.app_config.oracle
            return exact_state_dp(self.instance, self.allocation, kind, oracle.dp_state_cap,
                                  oracle.permutation_cap, self.app_config.adwords.large_bid_fraction).expected_value
        return math.nan

    def _hindsight(self, arrivals: ArrivalSequence) -> float:
        if self.config.benchmark is not Benchmark.HINDSIGHT_MC:
            return math.nan
        return hindsight_optimum(self.instance, arrivals, self.app_config.oracle.hindsight_cap)

    def trial(self, k: int) -> TrialOutcome:
        streams = TrialStreams(self.config.base_seed, k)
        if self.sequence is not None:
            state = self.runner.run(streams)
            miss = np.array([state.unspent_fraction(j) for j in self.agents])
            return TrialOutcome(miss, np.zeros(0), state.total_value(), self.benchmark_value)

        if self.kind is AlgorithmKind.QUERY_COMMIT:
            draws = streams.stream("arrival").random((len(self.qc.online), len(self.qc.offline)))
            edges = draws < np.asarray(self.qc.p)
            result = self.runner.run(streams, edges)
            matched = {r.agent for r in result.matching}
            miss = np.array([0.0 if j in matched else 1.0 for j in self.agents])
            arrivals = ArrivalSequence([
                neighborhood_type(i, [j for c, j in enumerate(self.qc.offline) if edges[t, c]])
                if edges[t].any() else None
                for t, i in enumerate(self.qc.online)
            ])
            return TrialOutcome(miss, np.zeros(0), matched_value(self.instance, result.matching),
                                self._hindsight(arrivals))

        arrivals = sample_arrivals(self.instance, streams)
        if self.kind is AlgorithmKind.ADWORDS:
            state = self.runner.run(arrivals, streams)
            miss = np.array([state.unspent_fraction(j) for j in self.agents])
            return TrialOutcome(miss, np.zeros(0), state.total_value(), self._hindsight(arrivals))
        if self.kind is AlgorithmKind.DISPLAY:
            state = self.runner.run(arrivals, streams)
            miss = np.array([0.0 if state.received[j] else 1.0 for j in self.agents])
            levels = np.array([0.0 if state.covered(j, w) else 1.0 for j, w in self.levels])
            return TrialOutcome(miss, levels, state.total_value(), self._hindsight(arrivals))

        if self.kind is AlgorithmKind.INDEPENDENT:
            state = self.runner.independent(arrivals, streams)
        elif self.kind is AlgorithmKind.RANDOM_ORDER:
            state = self.runner.run(arrivals, streams, shuffled_order(self.instance.horizon, streams))
        else:
            state = self.runner.run(arrivals, streams)
        matching = state.matching()
        miss = np.array([0.0 if j in state.matched else 1.0 for j in self.agents])
        return TrialOutcome(miss, np.zeros(0), matched_value(self.instance, matching), self._hindsight(arrivals))


def _run_chunk(experiment: Experiment, start: int, stop: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    outcomes = [experiment.trial(k) for k in range(start, stop)]
    return (
        np.vstack([o.miss for o in outcomes]),
        np.vstack([o.level_miss for o in outcomes]),
        np.array([o.value for o in outcomes]),
        np.array([o.benchmark for o in outcomes]),
    )


def _chunks(trials: int, workers: int) -> List[Tuple[int, int]]:
    size = max(1, math.ceil(trials / (4 * workers)))
    return [(start, min(start + size, trials)) for start in range(0, trials, size)]


def _ratio(values: np.ndarray, benchmarks: np.ndarray, fixed: float, confidence: float) -> Estimate:
    n = len(values)
    if np.all(np.isnan(benchmarks)):
        if fixed is None or math.isnan(fixed) or fixed <= 0:
            return Estimate(math.nan, math.nan, math.nan, math.nan, n)
        alg = mean_estimate(values, confidence)
        return Estimate(alg.mean / fixed, alg.stderr / fixed, alg.low / fixed, alg.high / fixed, n)
    mean_a = float(math.fsum(values)) / n
    mean_b = float(math.fsum(benchmarks)) / n
    if mean_b <= 0:
        return Estimate(math.nan, math.nan, math.nan, math.nan, n)
    ratio = mean_a / mean_b
    if n > 1:
        cov = np.cov(values, benchmarks, ddof=1)
        var = (cov[0, 0] / mean_b ** 2 - 2 * ratio * cov[0, 1] / mean_b ** 2 + ratio ** 2 * cov[1, 1] / mean_b ** 2)
        stderr = math.sqrt(max(var, 0.0) / n)
    else:
        stderr = 0.0
    half = _z(confidence) * stderr
    return Estimate(ratio, stderr, ratio - half, ratio + half, n)


def monte_carlo(config: ExperimentConfig, app_config: Optional[AppConfig] = None,
                experiment: Optional[Experiment] = None) -> StatSummary:
    """
    Run config.trials independent trials and summarize them.

    Trial k uses TrialStreams(base_seed, k); results are folded in trial
    order, so the summary is identical for any worker count.
    """
    experiment = experiment or Experiment(config, app_config)
    chunks = _chunks(config.trials, config.workers)
    logging.info(f"Running {config.trials} trials of {config.algorithm.value} in {len(chunks)} chunks "
                 f"on {config.workers} worker(s)")
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            futures = [executor.submit(_run_chunk, experiment, start, stop) for start, stop in chunks]
            results = [f.result() for f in futures]
    else:
        results = [_run_chunk(experiment, start, stop) for start, stop in chunks]

    miss = np.vstack([r[0] for r in results])
    level_miss = np.vstack([r[1] for r in results])
    values = np.concatenate([r[2] for r in results])
    benchmarks = np.concatenate([r[3] for r in results])
    confidence = config.confidence

    agents = {j: outcome_estimate(miss[:, k], confidence) for k, j in enumerate(experiment.agents)}
    levels: Dict[str, Dict[float, Estimate]] = {}
    for k, (j, w) in enumerate(experiment.levels):
        levels.setdefault(j, {})[w] = outcome_estimate(level_miss[:, k], confidence)

    if np.all(np.isnan(benchmarks)):
        benchmark = experiment.benchmark_value
    else:
        benchmark = float(math.fsum(benchmarks)) / len(benchmarks)
    summary = StatSummary(
        algorithm=config.algorithm.value,
        benchmark_kind=config.benchmark.value,
        trials=config.trials,
        base_seed=config.base_seed,
        agents=agents,
        y=dict(experiment.y),
        alg=mean_estimate(values, confidence),
        benchmark=benchmark,
        ratio=_ratio(values, benchmarks, experiment.benchmark_value, confidence),
        levels=levels,
        level_y=experiment.level_y,
    )
    logging.info(f"Monte Carlo done: ALG {summary.alg.mean:.6f}, benchmark {benchmark:.6f}, "
                 f"ratio {summary.ratio.mean:.6f}")
    return summary


# =============================================================================
# Rate verdicts
# =============================================================================

@dataclass
class VerdictRow:
    """One agent (or agent and weight level) checked against the rate."""
    agent: str
    level: Optional[float]
    y: float
    rate: float
    estimate: float
    stderr: float
    sigma: float

    @property
    def margin(self) -> float:
        return self.rate - self.estimate

    @property
    def passed(self) -> bool:
        return self.estimate - self.sigma * self.stderr <= self.rate

    def to_dict(self) -> dict:
        return {'agent': self.agent, 'level': self.level, 'y': self.y, 'g': self.rate,
                'estimate': self.estimate, 'stderr': self.stderr, 'margin': self.margin,
                'verdict': 'PASS' if self.passed else 'FAIL'}


@dataclass
class RateComparison:
    kind: RateKind
    rows: List[VerdictRow]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    @property
    def failures(self) -> List[VerdictRow]:
        return [r for r in self.rows if not r.passed]

    def to_dict(self) -> dict:
        return {'rate': self.kind.value, 'passed': self.passed, 'rows': [r.to_dict() for r in self.rows]}


def compare_to_rate(summary: StatSummary, kind: Union[RateKind, str, None] = None,
                    sigma: float = 3.0, c: float = 0.417,
                    rates: Optional[RateConfig] = None) -> RateComparison:
    """
    PASS when estimate - sigma * stderr <= g(y), per agent or per weight level.

    The rate defaults to the algorithm's own convergence rate. Agents (or
    levels) with y > 1 have no rate guarantee and get no row. Never raises
    on a failing row; the comparison reports it.
    """
    if kind is None:
        kind = RATE_FOR_KIND[AlgorithmKind(summary.algorithm)]
    rates = rates or RateConfig()
    rate = curve(kind, c=c, grid_step=rates.multiway_grid, refine=rates.multiway_refine)
    rows = []
    if summary.levels:
        for j, per_level in summary.levels.items():
            for w, estimate in per_level.items():
                y = summary.level_y[j][w]
                if y > 1.0 + 1e-9:
                    logging.info(f"Skipping {j} (level {w}): y = {y:.6f} exceeds 1")
                    continue
                rows.append(VerdictRow(j, w, y, rate(y), estimate.mean, estimate.stderr, sigma))
    else:
        for j, estimate in summary.agents.items():
            y = summary.y[j]
            if y > 1.0 + 1e-9:
                logging.info(f"Skipping {j}: y = {y:.6f} exceeds 1")
                continue
            rows.append(VerdictRow(j, None, y, rate(y), estimate.mean, estimate.stderr, sigma))
    comparison = RateComparison(rate.kind, rows)
    for row in comparison.failures:
        logging.warning(f"Rate check failed for {row.agent} (level {row.level}): "
                        f"estimate {row.estimate:.6f} > g({row.y:.4f}) = {row.rate:.6f}")
    return comparison
