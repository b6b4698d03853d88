"""
Statistical acceptance runs across modules.

These tests draw large trial counts and run for minutes; they are marked
slow and deselected with `-m "not slow"`.

To run:
    pytest tests/integration/test_acceptance.py -v -m slow
"""

import itertools
import math

import numpy as np
import pytest

from config import AlgorithmKind, Benchmark, ExperimentConfig, GeneratorSpec
from exact_oracles import exact_state_dp, random_two_way_instance, recurrence_table, tightness_instance
from harness import compare_to_rate, monte_carlo
from instance_model import generate, hindsight_optimum, sample_arrivals, save_instance
from lp_relaxations import check_feasibility, solve_matching_lp
from query_commit import probe_vertex, vertex_decomposition
from rates import TARGET_RATIOS, RateKind, convergence_rate
from rng_streams import TrialStreams, make_generator
from socs_matching import MatchingRunner


def _make_config(algorithm, problem_class="unweighted", seed=0, trials=3000, **overrides):
    generator = GeneratorSpec(problem_class=problem_class, num_types=4, num_agents=3, horizon=5, seed=seed)
    return ExperimentConfig(algorithm=algorithm, generator=generator, trials=trials, base_seed=100 + seed,
                            **overrides)


# =============================================================================
# Tightness
# =============================================================================

@pytest.mark.slow
@pytest.mark.integration
class TestTightness:
    """Poisson-pair instances approach the two-way lower bound."""

    @pytest.mark.parametrize("y", [0.25, 0.5, 1.0])
    def test_pair_miss_probability(self, y):
        instance, allocation = tightness_instance(y, 200)
        runner = MatchingRunner(instance, allocation)
        trials = 6000
        unmatched = 0
        for k in range(trials):
            streams = TrialStreams(77, k)
            state = runner.run(sample_arrivals(instance, streams), streams)
            unmatched += "j" not in state.matched
        assert unmatched / trials == pytest.approx(convergence_rate(RateKind.TWO_WAY_MATCHING, y), abs=0.025)


# =============================================================================
# Convergence rates
# =============================================================================

@pytest.mark.slow
@pytest.mark.integration
class TestRateDomination:
    """Every algorithm stays under its convergence rate on generated corpora."""

    @pytest.mark.parametrize("algorithm,problem_class", [
        (AlgorithmKind.INDEPENDENT, "unweighted"),
        (AlgorithmKind.MATCHING, "unweighted"),
        (AlgorithmKind.MATCHING, "vertex-weighted"),
        (AlgorithmKind.RANDOM_ORDER, "unweighted"),
        (AlgorithmKind.ADWORDS, "adwords"),
        (AlgorithmKind.DISPLAY, "display-ads"),
        (AlgorithmKind.MULTIWAY_OCS, "adwords"),
        (AlgorithmKind.BALANCE_OCS, "adwords"),
        (AlgorithmKind.QUERY_COMMIT, "unweighted"),
    ])
    def test_corpus(self, algorithm, problem_class, test_config):
        for seed in range(5):
            summary = monte_carlo(_make_config(algorithm, problem_class, seed), test_config)
            comparison = compare_to_rate(summary)
            assert comparison.passed, (seed, [r.to_dict() for r in comparison.failures])

    def test_matching_ratio_against_lp(self, test_config):
        target = TARGET_RATIOS[RateKind.GENERAL_MATCHING]
        for seed in range(5):
            summary = monte_carlo(_make_config(AlgorithmKind.MATCHING, seed=seed), test_config)
            assert summary.ratio.mean >= target - 3 * summary.ratio.stderr


# =============================================================================
# Exact oracles
# =============================================================================

@pytest.mark.slow
@pytest.mark.integration
class TestOracleEquivalence:
    """Subset recurrence, forward DP and Monte Carlo agree."""

    def test_recurrence_matches_dp(self):
        for seed in range(100):
            instance, allocation = random_two_way_instance(5, 6, seed)
            table = recurrence_table(instance, allocation)
            outcome = exact_state_dp(instance, allocation)
            agents = instance.agent_ids
            for mask in range(1, 1 << len(agents)):
                subset = [j for b, j in enumerate(agents) if mask >> b & 1]
                assert abs(float(table.u[table.horizon, mask]) - outcome.all_unmatched(agents, subset)) < 1e-12

    def test_monte_carlo_matches_dp(self):
        trials = 4000
        for seed in range(10):
            instance, allocation = random_two_way_instance(4, 6, seed)
            outcome = exact_state_dp(instance, allocation)
            runner = MatchingRunner(instance, allocation)
            unmatched = {j: 0 for j in instance.agent_ids}
            for k in range(trials):
                streams = TrialStreams(seed, k)
                state = runner.run(sample_arrivals(instance, streams), streams)
                for j in unmatched:
                    unmatched[j] += j not in state.matched
            for j, count in unmatched.items():
                p = outcome.miss[j]
                stderr = max(math.sqrt(p * (1 - p) / trials), 1.0 / trials)
                assert abs(count / trials - p) <= 4 * stderr


# =============================================================================
# LP correctness
# =============================================================================

@pytest.mark.slow
@pytest.mark.integration
class TestLpCorrectness:
    """The LP optimum upper-bounds the expected hindsight optimum."""

    def test_lp_dominates_hindsight(self, test_config):
        trials = 1000
        for seed in range(20):
            instance = generate("unweighted", 4, 3, 5, 0.5, seed)
            allocation, report = solve_matching_lp(instance, 1e-9, test_config)
            values = np.array([hindsight_optimum(instance, sample_arrivals(instance, TrialStreams(seed, k)))
                               for k in range(trials)])
            stderr = values.std(ddof=1) / math.sqrt(trials)
            assert report.objective >= values.mean() - 3 * stderr
            assert check_feasibility(instance, allocation, 1e-9, test_config).status != "infeasible"


# =============================================================================
# Query-commit
# =============================================================================

@pytest.mark.slow
@pytest.mark.integration
class TestQueryCommit:
    """Query-commit reproduces random-order matching."""

    def test_matches_random_order_value(self, tmp_path, qc_instance, test_config):
        path = tmp_path / "qc.json"
        save_instance(qc_instance, path)
        config = ExperimentConfig(algorithm=AlgorithmKind.QUERY_COMMIT, instance_path=str(path),
                                  trials=20000, base_seed=5, benchmark=Benchmark.EXACT_DP)
        summary = monte_carlo(config, test_config)
        assert abs(summary.alg.mean - summary.benchmark) <= 4 * summary.alg.stderr

    def test_mixture_marginals_reproduce_x(self):
        rng = make_generator(9, 0, "misc")
        agents = ["a", "b", "c"]
        for _ in range(200):
            p = {j: float(rng.uniform(0.1, 1.0)) for j in agents}
            orders = [o for size in range(4) for o in itertools.permutations(agents, size)]
            weights = rng.dirichlet(np.ones(len(orders)))
            x = {j: 0.0 for j in agents}
            for order, w in zip(orders, weights):
                for j, value in probe_vertex(order, p).items():
                    x[j] += w * value
            marginals = vertex_decomposition(x, p).marginals(p)
            assert max(abs(marginals[j] - x[j]) for j in agents) <= 1e-10
