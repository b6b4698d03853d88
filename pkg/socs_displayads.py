"""
Correlated selection for Display Ads (free disposal).

Every two-way step is marked with a uniformly chosen member m; the second
step marked with m makes the opposite selection w.r.t. m from the first.
An agent's value is the largest edge-weight it received, so accounting is
done per weight level w: does the agent get any edge of weight >= w?

Usage:
    from socs_displayads import run_general_display, value_profile

    state = run_general_display(instance, allocation, arrivals, seed=7)
    for level, covered in value_profile(instance, state.assignment, "j1"):
        print(level, covered)
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Tuple, Union

from instance_model import ArrivalSequence, Instance, ProblemClass
from lp_relaxations import FractionalAllocation
from rng_streams import TrialStreams, as_streams
from socs_adwords import Allocation, MarkOpposeSelector
from type_decomposition import DUMMY_AGENT, SurrogateSampler, SurrogateType, one_way_probability
from validators import ValidationError

Seed = Union[int, TrialStreams, None]


class MarkEverySelector(MarkOpposeSelector):
    """Mark-and-oppose without a size condition."""

    def should_mark(self, agent: str, payload: float) -> bool:
        return True


@dataclass
class DisplayState:
    """Allocated edge-weights per agent; value is their maximum (0 if none)."""
    received: Dict[str, List[float]]
    y: Dict[str, float]
    selector: MarkOpposeSelector = field(default_factory=MarkEverySelector)
    assignment: List[Allocation] = field(default_factory=list)

    @classmethod
    def fresh(cls, agents: Iterable[str]) -> 'DisplayState':
        agents = list(agents)
        return cls(received={j: [] for j in agents}, y={j: 0.0 for j in agents})

    def allocate(self, agent: str, weight: float, t: int, type_id: str = "") -> Optional[str]:
        if agent == DUMMY_AGENT:
            return None
        if agent not in self.received:
            raise ValidationError(f"Unknown agent '{agent}'", field="agent", value=agent)
        self.received[agent].append(weight)
        self.assignment.append(Allocation(t, type_id, agent, weight))
        return agent

    def value(self, agent: str) -> float:
        return max(self.received[agent], default=0.0)

    def total_value(self) -> float:
        return sum(self.value(j) for j in self.received)

    def covered(self, agent: str, level: float) -> bool:
        return any(w >= level for w in self.received[agent])


def step_two_way_display(state: DisplayState, surrogate: SurrogateType, weights: Mapping[str, float],
                         rng: Seed, t: int = 0, type_id: str = "") -> Optional[str]:
    """
    Mark-and-oppose step with every step marked.

    Returns:
        The receiving agent, or None when the dummy agent was selected.
    """
    if surrogate.is_one_way:
        raise ValidationError("Two-way step needs a two-way surrogate", field="surrogate", value=str(surrogate))
    selected = state.selector.select(surrogate, weights, as_streams(rng), t)
    return state.allocate(selected, weights.get(selected, 0.0), t, type_id)


class DisplayRunner:
    """Surrogate tables of one Display Ads allocation, reused across trials."""

    def __init__(self, instance: Instance, allocation: FractionalAllocation):
        if instance.problem_class is not ProblemClass.DISPLAY_ADS:
            raise ValidationError("Display runner needs a Display Ads instance", field="class",
                                  value=instance.problem_class.value)
        self.instance = instance
        self.allocation = allocation
        self.sampler = SurrogateSampler(allocation)
        self.increments: List[Dict[str, float]] = [dict() for _ in range(instance.horizon)]
        for (t, i, j), x in allocation.entries():
            self.increments[t][j] = self.increments[t].get(j, 0.0) + x

    def run(self, arrivals: ArrivalSequence, streams: TrialStreams) -> DisplayState:
        if len(arrivals) != self.instance.horizon:
            raise ValidationError("Arrival sequence length does not match the horizon", field="arrivals")
        state = DisplayState.fresh(self.instance.agent_ids)
        for t, type_id in enumerate(arrivals.types):
            if type_id is not None:
                weights = self.instance.types[type_id].values
                surrogate = self.sampler.sample(t, type_id, streams.uniform("eta"))
                if surrogate.is_one_way:
                    state.allocate(surrogate.first, weights.get(surrogate.first, 0.0), t, type_id)
                else:
                    step_two_way_display(state, surrogate, weights, streams, t, type_id)
            for j, amount in self.increments[t].items():
                state.y[j] += amount
        return state


def run_general_display(instance: Instance, allocation: FractionalAllocation, arrivals: ArrivalSequence,
                        seed: Seed = None, runner: Optional[DisplayRunner] = None) -> DisplayState:
    """General SOCS for Display Ads over realized arrivals."""
    runner = runner or DisplayRunner(instance, allocation)
    return runner.run(arrivals, as_streams(seed))


def value_profile(instance: Instance, assignment: List[Allocation], agent: str) -> List[Tuple[float, bool]]:
    """
    (level, covered) at each distinct positive edge-weight of the agent.

    The agent's value is sum_k (w_k - w_{k-1}) * covered_k with w_0 = 0.

    Example:
        weights {0.3, 1}, one edge of weight 0.3 -> [(0.3, True), (1.0, False)]
    """
    instance.agent(agent)
    best = max((a.bid for a in assignment if a.agent == agent), default=0.0)
    return [(w, best >= w) for w in instance.distinct_weights(agent)]


def profile_value(profile: List[Tuple[float, bool]]) -> float:
    total = 0.0
    previous = 0.0
    for level, covered in profile:
        if covered:
            total += level - previous
        previous = level
    return total


@dataclass(frozen=True)
class LevelMasses:
    """
    Allocation masses of an agent at weight level w.

    one_way: one-way surrogate mass on edges with weight >= w.
    two_way: half the two-way mass on edges with weight >= w.
    interfering: half the two-way mass on edges below w.
    """
    level: float
    one_way: float
    two_way: float
    interfering: float

    @property
    def y(self) -> float:
        return self.one_way + self.two_way


def level_masses(instance: Instance, allocation: FractionalAllocation, agent: str, level: float) -> LevelMasses:
    """y_1, y_2 and y_- of `agent` at `level` under Type Decomposition of each mu^t_i."""
    one = two = low = 0.0
    for t in range(instance.horizon):
        for type_id, prob in instance.arrivals.steps[t]:
            if prob <= 0:
                continue
            share = allocation.mu(t, type_id).get(agent, 0.0)
            if share <= 0:
                continue
            forced = one_way_probability(share)
            split = min(share, 1.0 - share)
            if instance.payload(type_id, agent) >= level:
                one += prob * forced
                two += prob * split
            else:
                low += prob * split
    return LevelMasses(level, one, two, low)


def display_level_bounds(y_one: float, y_two: float) -> Tuple[float, float]:
    """
    Two upper bounds on Pr[agent gets no edge of weight >= w].

    Returns:
        (e^{-y1-y2}, e^{-y1-3/2 y2}(1 + y2/2) + (1 - y1 - y2)/15)
    """
    plain = math.exp(-y_one - y_two)
    sharpened = math.exp(-y_one - 1.5 * y_two) * (1 + 0.5 * y_two) + (1 - y_one - y_two) / 15
    return plain, sharpened
