"""
Stochastic online correlated selection for unweighted and vertex-weighted
matching.

Every realized item is first turned into a surrogate type by Type
Decomposition. A one-way surrogate matches its agent if still unmatched.
A two-way surrogate {j, k} goes to an unmatched member, chosen with
probability proportional to e^{2 y}, where y is the agent's cumulative
fractional allocation over the steps processed so far (one-way mass
included).

Usage:
    from socs_matching import run_general, run_random_order, matched_value

    matching = run_general(instance, allocation, arrivals, seed=3)
    value = matched_value(instance, matching)
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Union

from instance_model import ArrivalSequence, Instance, ProblemClass, sample_arrivals
from lp_relaxations import FractionalAllocation
from rng_streams import TrialStreams, as_streams
from type_decomposition import DUMMY_AGENT, SurrogateSampler, SurrogateType
from validators import ValidationError

Seed = Union[int, TrialStreams, None]


@dataclass(frozen=True)
class MatchRecord:
    """Item of type `type_id` arriving at step t (0-based) matched to `agent`."""
    t: int
    type_id: str
    agent: str

    def to_dict(self) -> dict:
        return {'t': self.t + 1, 'type': self.type_id, 'agent': self.agent}


Matching = List[MatchRecord]


@dataclass
class MatchState:
    """
    Per-agent matched flags and cumulative allocation y_j.

    The dummy agent is always available and has y = 0; choosing it wastes
    the item.
    """
    y: Dict[str, float]
    matched: Dict[str, MatchRecord] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def fresh(cls, agents: Iterable[str]) -> 'MatchState':
        return cls(y={j: 0.0 for j in agents})

    def check(self, agent: str):
        if agent != DUMMY_AGENT and agent not in self.y:
            raise ValidationError(f"Unknown agent '{agent}'", field="agent", value=agent)

    def is_available(self, agent: str) -> bool:
        return agent == DUMMY_AGENT or agent not in self.matched

    def exponent(self, agent: str) -> float:
        return 0.0 if agent == DUMMY_AGENT else self.y[agent]

    def commit(self, agent: str, t: int, type_id: str) -> Optional[str]:
        """Record a match; the dummy agent absorbs nothing."""
        if agent == DUMMY_AGENT:
            return None
        self.matched[agent] = MatchRecord(t, type_id, agent)
        return agent

    def advance(self, increments: Dict[str, float]):
        for agent, amount in increments.items():
            self.y[agent] += amount
        self.step += 1

    def matching(self) -> Matching:
        return sorted(self.matched.values(), key=lambda r: (r.t, r.agent))


def two_way_probabilities(state: MatchState, surrogate: SurrogateType) -> Dict[str, float]:
    """
    Selection probabilities of the two-way rule over the pair's members.

    Example:
        y_j = 0.5, y_k = 0, both unmatched -> {j: e/(e+1), k: 1/(e+1)}
    """
    j, k = surrogate.agents
    state.check(j)
    state.check(k)
    open_j, open_k = state.is_available(j), state.is_available(k)
    if open_j and open_k:
        p_j = 1.0 / (1.0 + math.exp(2.0 * (state.exponent(k) - state.exponent(j))))
        return {j: p_j, k: 1.0 - p_j}
    if open_j:
        return {j: 1.0, k: 0.0}
    if open_k:
        return {j: 0.0, k: 1.0}
    return {j: 0.0, k: 0.0}


def step_two_way(state: MatchState, pair: Optional[SurrogateType], rng: Seed,
                 t: Optional[int] = None, type_id: str = "") -> Optional[str]:
    """
    One two-way step: match an unmatched member of the pair.

    The caller advances y afterwards, so weights use y over steps before t.

    Returns:
        The matched agent, or None when nothing real was matched.
    """
    if pair is None:
        return None
    if pair.is_one_way:
        raise ValidationError("step_two_way needs a two-way surrogate", field="pair", value=str(pair))
    probs = two_way_probabilities(state, pair)
    j, k = pair.agents
    if probs[j] + probs[k] == 0:
        return None
    u = as_streams(rng).uniform("choice")
    chosen = j if u < probs[j] else k
    return state.commit(chosen, state.step if t is None else t, type_id)


class MatchingRunner:
    """
    Precomputed surrogate tables and per-step y increments of one allocation.

    Reused across Monte Carlo trials.
    """

    def __init__(self, instance: Instance, allocation: FractionalAllocation):
        self.instance = instance
        self.allocation = allocation
        self.sampler = SurrogateSampler(allocation)
        self.increments: List[Dict[str, float]] = [dict() for _ in range(instance.horizon)]
        for (t, i, j), x in allocation.entries():
            if j not in self.increments[t]:
                self.increments[t][j] = 0.0
            self.increments[t][j] += x
        self._agents = set(instance.agent_ids)
        for step in self.increments:
            for j in step:
                if j not in self._agents:
                    raise ValidationError(f"Allocation references unknown agent '{j}'", field="allocation", value=j)

    def fresh_state(self) -> MatchState:
        return MatchState.fresh(self.instance.agent_ids)

    def process(self, state: MatchState, t: int, type_id: Optional[str], streams: TrialStreams):
        """Handle the item of step t (if any), then advance y by step t's allocation."""
        if type_id is not None:
            surrogate = self.sampler.sample(t, type_id, streams.uniform("eta"))
            if surrogate.is_one_way:
                if state.is_available(surrogate.first):
                    state.commit(surrogate.first, t, type_id)
            else:
                step_two_way(state, surrogate, streams, t, type_id)
        state.advance(self.increments[t])

    def run(self, arrivals: ArrivalSequence, streams: TrialStreams,
            order: Optional[List[int]] = None) -> MatchState:
        if len(arrivals) != self.instance.horizon:
            raise ValidationError("Arrival sequence length does not match the horizon", field="arrivals")
        state = self.fresh_state()
        for t in (range(self.instance.horizon) if order is None else order):
            self.process(state, t, arrivals.types[t], streams)
        return state

    def independent(self, arrivals: ArrivalSequence, streams: TrialStreams) -> MatchState:
        state = self.fresh_state()
        for t, type_id in arrivals.realized():
            u = streams.uniform("choice")
            acc = 0.0
            for j, share in self.allocation.mu(t, type_id).items():
                acc += share
                if u < acc:
                    if state.is_available(j):
                        state.commit(j, t, type_id)
                    break
            state.step += 1
        return state


def shuffled_order(horizon: int, streams: TrialStreams) -> List[int]:
    """Uniform permutation from i.i.d. keys theta^t; steps are processed by increasing key."""
    keys = streams.stream("order").random(horizon)
    return sorted(range(horizon), key=lambda t: keys[t])


def run_general(instance: Instance, allocation: FractionalAllocation, arrivals: ArrivalSequence,
                seed: Seed = None, runner: Optional[MatchingRunner] = None) -> Matching:
    """
    General SOCS over the realized arrivals.

    Example:
        pair {1,2} at t=1 and t=2 with probability 1 -> both agents matched
    """
    runner = runner or MatchingRunner(instance, allocation)
    return runner.run(arrivals, as_streams(seed)).matching()


def run_random_order(instance: Instance, allocation: FractionalAllocation, seed: Seed = None,
                     arrivals: Optional[ArrivalSequence] = None,
                     runner: Optional[MatchingRunner] = None) -> Matching:
    """
    Random-order SOCS: steps are shuffled uniformly, then processed in that order.

    y accumulates along the shuffled order. Records keep the original step index.
    """
    streams = as_streams(seed)
    runner = runner or MatchingRunner(instance, allocation)
    if arrivals is None:
        arrivals = sample_arrivals(instance, streams)
    order = shuffled_order(instance.horizon, streams)
    return runner.run(arrivals, streams, order).matching()


def run_independent_rounding(instance: Instance, allocation: FractionalAllocation,
                             arrivals: ArrivalSequence, seed: Seed = None,
                             runner: Optional[MatchingRunner] = None) -> Matching:
    """Baseline: pick j with probability mu_ij^t, match it if unmatched."""
    runner = runner or MatchingRunner(instance, allocation)
    return runner.independent(arrivals, as_streams(seed)).matching()


def matched_value(instance: Instance, matching: Matching) -> float:
    """
    Cardinality (unweighted) or total vertex weight of matched agents.

    Raises:
        ValidationError: an agent appears twice.
    """
    seen = set()
    total = 0.0
    for record in matching:
        if record.agent in seen:
            raise ValidationError(f"Agent {record.agent} matched twice", field="matching", value=record.agent)
        seen.add(record.agent)
        if instance.problem_class is ProblemClass.VERTEX_WEIGHTED:
            total += instance.agent(record.agent).weight
        else:
            total += 1.0
    logging.debug(f"Matched value {total} over {len(seen)} agents")
    return total
