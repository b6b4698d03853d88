"""
Pytest configuration and shared fixtures.

This file contains fixtures that are automatically discovered by pytest
and can be used in any test file: small hand-built instances whose
outcomes are known in closed form, configuration for quick runs, and
in-memory result storage.

For more information on pytest fixtures:
https://docs.pytest.org/en/stable/fixture.html
"""

import pytest

from config_manager import AppConfig
from exact_oracles import two_way_instance
from instance_model import Agent, ArrivalDistribution, Instance, OnlineType, ProblemClass, QueryCommitInstance
from lp_relaxations import FractionalAllocation
from socs_adwords import AdWordsSequence, BidStep
from storage import StorageFactory


# =============================================================================
# Configuration Fixtures
# =============================================================================

@pytest.fixture
def test_config():
    """
    Configuration for quick tests: small trial counts, one worker.

    Returns:
        AppConfig from AppConfig.for_testing().
    """
    return AppConfig.for_testing()


# =============================================================================
# Storage Fixtures
# =============================================================================

@pytest.fixture
def memory_storage():
    """
    Fresh in-memory result storage.

    Usage in tests:
        def test_save(memory_storage):
            memory_storage.save_json("summary", {"alg": 1.0})
            assert memory_storage.load_json("summary") == {"alg": 1.0}
    """
    return StorageFactory.create_in_memory()


@pytest.fixture
def temp_results_dir(tmp_path):
    """Directory for file-based storage and CLI output."""
    path = tmp_path / "results"
    path.mkdir()
    return path


# =============================================================================
# Instance Fixtures
# =============================================================================

@pytest.fixture
def chain_instance():
    """
    Two steps, each with one certain two-way type: {1,2} then {1,3}.

    Pr[1 unmatched] = 1/(2(e+1)) under the matching SOCS.

    Returns:
        (Instance, FractionalAllocation) with mu = 1/2 on each pair member.
    """
    return two_way_instance([[(("1", "2"), 1.0)], [(("1", "3"), 1.0)]])


@pytest.fixture
def single_pair_instance():
    """One step, pair {1,2} arriving with probability 1."""
    return two_way_instance([[(("1", "2"), 1.0)]])


@pytest.fixture
def unweighted_instance():
    """
    Three agents, three types, three steps; every arrival mass is below 1.
    """
    agents = [Agent("a"), Agent("b"), Agent("c")]
    types = {
        "x": OnlineType("x", {"a": 1.0, "b": 1.0}),
        "y": OnlineType("y", {"b": 1.0, "c": 1.0}),
        "z": OnlineType("z", {"a": 1.0, "c": 1.0}),
    }
    steps = [
        [("x", 0.5), ("y", 0.3)],
        [("y", 0.6), ("z", 0.2)],
        [("z", 0.7)],
    ]
    return Instance(ProblemClass.UNWEIGHTED, agents, types, ArrivalDistribution(steps))


@pytest.fixture
def unweighted_allocation(unweighted_instance):
    """A feasible hand-made allocation for `unweighted_instance`."""
    return FractionalAllocation.from_mu(unweighted_instance, {
        (0, "x"): {"a": 0.5, "b": 0.5},
        (0, "y"): {"c": 1.0},
        (1, "y"): {"b": 0.5},
        (1, "z"): {"a": 1.0},
        (2, "z"): {"a": 0.2, "c": 0.3},
    })


@pytest.fixture
def adwords_instance():
    """Two agents with budget 1; one type bids (0.8, 0.4), another (0.3, 0.9)."""
    agents = [Agent("a", budget=1.0), Agent("b", budget=1.0)]
    types = {
        "p": OnlineType("p", {"a": 0.8, "b": 0.4}),
        "q": OnlineType("q", {"a": 0.3, "b": 0.9}),
    }
    steps = [[("p", 0.6), ("q", 0.4)], [("p", 0.5)], [("q", 0.7)]]
    return Instance(ProblemClass.ADWORDS, agents, types, ArrivalDistribution(steps))


@pytest.fixture
def display_instance():
    """Two agents; edge weights on two levels."""
    agents = [Agent("a"), Agent("b")]
    types = {
        "u": OnlineType("u", {"a": 0.5, "b": 1.0}),
        "v": OnlineType("v", {"a": 1.0, "b": 0.5}),
    }
    steps = [[("u", 0.5), ("v", 0.5)], [("u", 0.4)], [("v", 0.6)]]
    return Instance(ProblemClass.DISPLAY_ADS, agents, types, ArrivalDistribution(steps))


@pytest.fixture
def qc_instance():
    """2 x 2 query-commit instance with every edge present with probability 1/2."""
    return QueryCommitInstance(online=["i1", "i2"], offline=["j1", "j2"], p=[[0.5, 0.5], [0.5, 0.5]])


@pytest.fixture
def small_sequence():
    """Two agents with budget 1; three adversarial steps with fractional allocations."""
    return AdWordsSequence(
        budgets={"a": 1.0, "b": 1.0},
        steps=[
            BidStep(bids={"a": 0.5, "b": 0.5}, mu={"a": 0.5, "b": 0.5}),
            BidStep(bids={"a": 0.9, "b": 0.2}, mu={"a": 0.7, "b": 0.3}),
            BidStep(bids={"b": 0.6}, mu={"b": 1.0}),
        ],
    )
