"""
Unit tests for the matching SOCS (socs_matching.py).

Tests cover the two-way selection rule, the general and random-order
runners, independent rounding and matched values. Statistical checks use
per-trial streams so every run is reproducible.

To run:
    pytest tests/test_socs_matching.py -v
"""

import math

import pytest

from instance_model import Agent, ArrivalSequence, Instance, ProblemClass
from lp_relaxations import FractionalAllocation
from rng_streams import TrialStreams
from socs_matching import (
    MatchingRunner,
    MatchRecord,
    MatchState,
    matched_value,
    run_general,
    run_independent_rounding,
    run_random_order,
    shuffled_order,
    step_two_way,
    two_way_probabilities,
)
from type_decomposition import DUMMY_AGENT, SurrogateType
from validators import ValidationError

CHAIN_MISS = 1 / (2 * (math.e + 1))


def _unmatched_frequency(run, agent, trials=4000, seed=21):
    misses = 0
    for k in range(trials):
        matching = run(TrialStreams(seed, k))
        misses += all(r.agent != agent for r in matching)
    return misses / trials


# =============================================================================
# Two-way Rule Tests
# =============================================================================

@pytest.mark.unit
class TestTwoWayRule:
    """Tests for the e^{2y} selection rule."""

    def test_weights_follow_exponential(self):
        state = MatchState.fresh(["j", "k"])
        state.y["j"] = 0.5
        probs = two_way_probabilities(state, SurrogateType.two_way("j", "k"))
        assert probs["j"] == pytest.approx(math.e / (math.e + 1))
        assert probs["k"] == pytest.approx(1 / (math.e + 1))

    def test_equal_levels_split_evenly(self):
        state = MatchState.fresh(["j", "k"])
        probs = two_way_probabilities(state, SurrogateType.two_way("j", "k"))
        assert probs == {"j": pytest.approx(0.5), "k": pytest.approx(0.5)}

    def test_matched_member_is_skipped(self):
        state = MatchState.fresh(["j", "k"])
        state.commit("j", 0, "x")
        assert two_way_probabilities(state, SurrogateType.two_way("j", "k")) == {"j": 0.0, "k": 1.0}
        assert step_two_way(state, SurrogateType.two_way("j", "k"), 3, t=1, type_id="x") == "k"
        assert state.matched["k"] == MatchRecord(1, "x", "k")

    def test_both_matched_wastes_item(self):
        state = MatchState.fresh(["j", "k"])
        state.commit("j", 0, "x")
        state.commit("k", 1, "x")
        assert step_two_way(state, SurrogateType.two_way("j", "k"), 3) is None

    def test_dummy_partner_is_always_available(self):
        state = MatchState.fresh(["j"])
        state.commit("j", 0, "x")
        probs = two_way_probabilities(state, SurrogateType.two_way("j", DUMMY_AGENT))
        assert probs[DUMMY_AGENT] == 1.0
        assert state.commit(DUMMY_AGENT, 1, "x") is None

    def test_rejects_one_way(self):
        with pytest.raises(ValidationError, match="two-way"):
            step_two_way(MatchState.fresh(["j"]), SurrogateType.one_way("j"), 0)

    def test_no_pair(self):
        assert step_two_way(MatchState.fresh(["j"]), None, 0) is None

    def test_unknown_agent(self):
        with pytest.raises(ValidationError, match="Unknown agent"):
            two_way_probabilities(MatchState.fresh(["j"]), SurrogateType.two_way("j", "zz"))

    def test_empirical_choice(self):
        state = MatchState.fresh(["j", "k"])
        state.y["j"] = 0.5
        picks = 0
        for k in range(4000):
            trial = MatchState(y=dict(state.y))
            picks += step_two_way(trial, SurrogateType.two_way("j", "k"), TrialStreams(5, k)) == "j"
        assert picks / 4000 == pytest.approx(math.e / (math.e + 1), abs=0.03)


# =============================================================================
# Runner Tests
# =============================================================================

@pytest.mark.unit
class TestMatchingRunner:
    """Tests for the general SOCS runner."""

    def test_increments(self, chain_instance):
        instance, allocation = chain_instance
        runner = MatchingRunner(instance, allocation)
        assert runner.increments[0] == {"1": 0.5, "2": 0.5}
        assert runner.increments[1] == {"1": 0.5, "3": 0.5}

    def test_unknown_allocation_agent(self, chain_instance):
        instance, _ = chain_instance
        allocation = FractionalAllocation.from_x(instance, {(0, "i1_1", "zz"): 0.5})
        with pytest.raises(ValidationError, match="unknown agent"):
            MatchingRunner(instance, allocation)

    def test_length_mismatch(self, chain_instance):
        instance, allocation = chain_instance
        with pytest.raises(ValidationError, match="length"):
            run_general(instance, allocation, ArrivalSequence(["i1_1"]), seed=1)

    def test_single_pair_matches_once(self, single_pair_instance):
        instance, allocation = single_pair_instance
        matching = run_general(instance, allocation, ArrivalSequence(["i1_1"]), seed=2)
        assert len(matching) == 1
        assert matching[0].agent in ("1", "2")
        assert matching[0].to_dict()["t"] == 1

    def test_same_seed_same_matching(self, chain_instance):
        instance, allocation = chain_instance
        arrivals = ArrivalSequence(["i1_1", "i2_1"])
        assert run_general(instance, allocation, arrivals, seed=9) == run_general(instance, allocation, arrivals,
                                                                                  seed=9)

    def test_y_advances_every_step(self, chain_instance):
        instance, allocation = chain_instance
        runner = MatchingRunner(instance, allocation)
        state = runner.run(ArrivalSequence([None, None]), TrialStreams(1, 0))
        assert state.y == {"1": 1.0, "2": 0.5, "3": 0.5}
        assert state.matching() == []

    def test_chain_miss_probability(self, chain_instance):
        """Pr[1 unmatched] = 1/2 * 1/(e + 1)."""
        instance, allocation = chain_instance
        runner = MatchingRunner(instance, allocation)
        arrivals = ArrivalSequence(["i1_1", "i2_1"])
        frequency = _unmatched_frequency(lambda s: run_general(instance, allocation, arrivals, s, runner), "1")
        assert frequency == pytest.approx(CHAIN_MISS, abs=0.025)


# =============================================================================
# Random-order and Independent Rounding Tests
# =============================================================================

@pytest.mark.unit
class TestVariants:
    """Tests for random-order SOCS and independent rounding."""

    def test_shuffled_order_is_permutation(self):
        order = shuffled_order(6, TrialStreams(4, 0))
        assert sorted(order) == list(range(6))
        assert order == shuffled_order(6, TrialStreams(4, 0))

    def test_random_order_keeps_step_index(self, chain_instance):
        instance, allocation = chain_instance
        arrivals = ArrivalSequence(["i1_1", "i2_1"])
        for k in range(20):
            matching = run_random_order(instance, allocation, TrialStreams(8, k), arrivals=arrivals)
            assert len(matching) == 2
            assert {r.t for r in matching} == {0, 1}

    def test_random_order_samples_arrivals(self, unweighted_instance, unweighted_allocation):
        matching = run_random_order(unweighted_instance, unweighted_allocation, seed=3)
        assert len({r.agent for r in matching}) == len(matching)

    def test_independent_rounding_chain(self, chain_instance):
        """Independent rounding misses agent 1 with probability 1/4."""
        instance, allocation = chain_instance
        runner = MatchingRunner(instance, allocation)
        arrivals = ArrivalSequence(["i1_1", "i2_1"])
        frequency = _unmatched_frequency(
            lambda s: run_independent_rounding(instance, allocation, arrivals, s, runner), "1")
        assert frequency == pytest.approx(0.25, abs=0.03)

    def test_socs_beats_independent_on_chain(self):
        assert CHAIN_MISS < 0.25


# =============================================================================
# Matched Value Tests
# =============================================================================

@pytest.mark.unit
class TestMatchedValue:
    """Tests for cardinality and vertex-weighted values."""

    def test_cardinality(self, chain_instance):
        instance, _ = chain_instance
        matching = [MatchRecord(0, "i1_1", "1"), MatchRecord(1, "i2_1", "3")]
        assert matched_value(instance, matching) == 2.0

    def test_vertex_weighted(self, chain_instance):
        base, _ = chain_instance
        agents = [Agent("1", weight=3.0), Agent("2"), Agent("3")]
        instance = Instance(ProblemClass.VERTEX_WEIGHTED, agents, base.types, base.arrivals)
        assert matched_value(instance, [MatchRecord(0, "i1_1", "1")]) == 3.0

    def test_agent_matched_twice(self, chain_instance):
        instance, _ = chain_instance
        with pytest.raises(ValidationError, match="matched twice"):
            matched_value(instance, [MatchRecord(0, "i1_1", "1"), MatchRecord(1, "i2_1", "1")])
