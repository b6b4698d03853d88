"""
Unit tests for Display Ads correlated selection (socs_displayads.py).

To run:
    pytest tests/test_socs_displayads.py -v
"""

import math

import pytest

from instance_model import Agent, ArrivalDistribution, ArrivalSequence, Instance, OnlineType, ProblemClass
from lp_relaxations import FractionalAllocation
from rng_streams import TrialStreams
from socs_adwords import Allocation
from socs_displayads import (
    DisplayRunner,
    DisplayState,
    LevelMasses,
    MarkEverySelector,
    display_level_bounds,
    level_masses,
    profile_value,
    run_general_display,
    step_two_way_display,
    value_profile,
)
from type_decomposition import SurrogateType
from validators import ValidationError


def _make_repeated_pair():
    """Pair {a, b} with unit weights at both of two steps; mu = 1/2 each."""
    instance = Instance(ProblemClass.DISPLAY_ADS, [Agent("a"), Agent("b")],
                        {"p": OnlineType("p", {"a": 1.0, "b": 1.0})},
                        ArrivalDistribution([[("p", 1.0)], [("p", 1.0)]]))
    allocation = FractionalAllocation.from_mu(instance, {(0, "p"): {"a": 0.5, "b": 0.5},
                                                         (1, "p"): {"a": 0.5, "b": 0.5}})
    return instance, allocation


def _display_allocation(display_instance):
    return FractionalAllocation.from_mu(display_instance, {
        (0, "u"): {"a": 0.5, "b": 0.5},
        (0, "v"): {"a": 1.0},
        (1, "u"): {"a": 0.3, "b": 0.7},
    })


# =============================================================================
# Selection Tests
# =============================================================================

@pytest.mark.unit
class TestDisplaySelection:
    """Tests for mark-every-step selection and state."""

    def test_every_step_is_marked(self):
        selector = MarkEverySelector()
        streams = TrialStreams(3, 0)
        for t in range(6):
            selector.select(SurrogateType.two_way("a", "b"), {"a": 0.1, "b": 0.1}, streams, t)
        assert all(e.marked_with in ("a", "b") and e.nth_mark >= 1 for e in selector.trace)

    def test_value_is_best_edge(self):
        state = DisplayState.fresh(["a", "b"])
        state.allocate("a", 0.3, 0)
        state.allocate("a", 0.8, 1)
        assert state.value("a") == 0.8
        assert state.value("b") == 0.0
        assert state.covered("a", 0.5)
        assert not state.covered("a", 0.9)
        assert state.total_value() == 0.8

    def test_unknown_agent(self):
        with pytest.raises(ValidationError, match="Unknown agent"):
            DisplayState.fresh(["a"]).allocate("z", 1.0, 0)

    def test_rejects_one_way(self):
        with pytest.raises(ValidationError, match="two-way"):
            step_two_way_display(DisplayState.fresh(["a"]), SurrogateType.one_way("a"), {"a": 1.0}, 1)

    def test_repeated_pair_miss_probability(self):
        """Every step is marked, so a twice-arriving pair misses one agent with probability 1/8."""
        instance, allocation = _make_repeated_pair()
        runner = DisplayRunner(instance, allocation)
        arrivals = ArrivalSequence(["p", "p"])
        misses = sum(not run_general_display(instance, allocation, arrivals, TrialStreams(17, k), runner)
                     .received["a"] for k in range(4000))
        assert misses / 4000 == pytest.approx(0.125, abs=0.025)


# =============================================================================
# Runner Tests
# =============================================================================

@pytest.mark.unit
class TestDisplayRunner:
    """Tests for the general Display Ads SOCS."""

    def test_rejects_other_classes(self, adwords_instance):
        with pytest.raises(ValidationError, match="Display Ads"):
            DisplayRunner(adwords_instance, FractionalAllocation.zeros(adwords_instance))

    def test_length_mismatch(self, display_instance):
        with pytest.raises(ValidationError, match="length"):
            run_general_display(display_instance, _display_allocation(display_instance),
                                ArrivalSequence(["u"]), seed=1)

    def test_values_and_levels(self, display_instance):
        allocation = _display_allocation(display_instance)
        for k in range(50):
            state = run_general_display(display_instance, allocation, ArrivalSequence(["v", "u", None]),
                                        TrialStreams(6, k))
            assert state.received["a"][0] == 1.0
            assert state.total_value() <= 2.0
            assert state.y == pytest.approx({"a": 0.5 + 0.5 * 0.5 + 0.4 * 0.3, "b": 0.5 * 0.5 + 0.4 * 0.7})


# =============================================================================
# Level Accounting Tests
# =============================================================================

@pytest.mark.unit
class TestLevels:
    """Tests for per-level value accounting and bounds."""

    def test_value_profile(self, display_instance):
        profile = value_profile(display_instance, [Allocation(0, "u", "a", 0.5)], "a")
        assert profile == [(0.5, True), (1.0, False)]
        assert profile_value(profile) == pytest.approx(0.5)

    def test_profile_value_sums_covered_increments(self):
        assert profile_value([(0.5, True), (1.0, True)]) == pytest.approx(1.0)
        assert profile_value([(0.5, False), (1.0, True)]) == pytest.approx(1.0)
        assert profile_value([]) == 0.0

    def test_value_profile_unknown_agent(self, display_instance):
        with pytest.raises(ValidationError):
            value_profile(display_instance, [], "zz")

    def test_level_masses(self, display_instance):
        allocation = _display_allocation(display_instance)
        top = level_masses(display_instance, allocation, "a", 1.0)
        assert (top.one_way, top.two_way, top.interfering) == pytest.approx((0.5, 0.0, 0.37))
        low = level_masses(display_instance, allocation, "a", 0.5)
        assert isinstance(low, LevelMasses)
        assert (low.one_way, low.two_way, low.interfering) == pytest.approx((0.5, 0.37, 0.0))
        assert low.y == pytest.approx(0.87)

    def test_bounds(self):
        plain, sharpened = display_level_bounds(0.2, 0.3)
        assert plain == pytest.approx(math.exp(-0.5))
        assert sharpened == pytest.approx(math.exp(-0.65) * 1.15 + 0.5 / 15)

    def test_sharpened_bound_improves_on_pure_two_way(self):
        plain, sharpened = display_level_bounds(0.0, 1.0)
        assert sharpened == pytest.approx(1.5 * math.exp(-1.5))
        assert sharpened < plain
