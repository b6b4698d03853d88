"""
Problem instances for Non-IID online stochastic matching, AdWords and
Display Ads, plus query-commit instances.

An instance has offline agents, online types, and for each step t an
independent arrival distribution over types; the remaining mass is
"no arrival". Online types at different steps are distinct (t, i) keys
even when they share an id. Steps are 0-based in code.

Usage:
    from instance_model import generate, ProblemClass, sample_arrivals, hindsight_optimum

    instance = generate(ProblemClass.UNWEIGHTED, num_types=3, num_agents=3,
                        horizon=5, density=0.5, seed=7)
    arrivals = sample_arrivals(instance, seed=1)
    opt = hindsight_optimum(instance, arrivals)
"""

import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union, TYPE_CHECKING

import networkx as nx
import numpy as np
from pydantic import ValidationError as SchemaError

from rng_streams import TrialStreams, as_streams, make_generator
from schemas import (
    AgentDocument, ArrivalEntry, InstanceDocument, QueryCommitDocument,
    TypeDocument,
)
from validators import InputValidator, ValidationError, PROBABILITY_TOL

if TYPE_CHECKING:
    from lp_relaxations import FractionalAllocation

DEFAULT_HINDSIGHT_CAP = 14


class HindsightCapError(Exception):
    """Raised when a brute-force hindsight optimum would exceed its item cap."""
    pass


class ProblemClass(Enum):
    """The four special cases of online stochastic welfare maximization."""
    UNWEIGHTED = "unweighted"
    VERTEX_WEIGHTED = "vertex-weighted"
    ADWORDS = "adwords"
    DISPLAY_ADS = "display-ads"

    @property
    def is_matching(self) -> bool:
        return self in (ProblemClass.UNWEIGHTED, ProblemClass.VERTEX_WEIGHTED)


@dataclass
class Agent:
    """
    Offline agent.

    Attributes:
        id: Agent identifier.
        weight: Vertex weight (vertex-weighted matching).
        budget: Budget B_j (AdWords).
    """
    id: str
    weight: float = 1.0
    budget: Optional[float] = None


@dataclass
class OnlineType:
    """
    Online type with its per-agent payload.

    `values` holds edges (value 1.0) for matching classes, bids b_ij for
    AdWords and edge-weights w_ij for Display Ads.
    """
    id: str
    values: Dict[str, float] = field(default_factory=dict)

    @property
    def neighbors(self) -> List[str]:
        return [j for j, v in self.values.items() if v > 0]


@dataclass
class ArrivalDistribution:
    """Per-step lists of (type_id, probability); missing mass is no arrival."""
    steps: List[List[Tuple[str, float]]]

    @property
    def horizon(self) -> int:
        return len(self.steps)

    def probability(self, t: int, type_id: str) -> float:
        return sum(p for i, p in self.steps[t] if i == type_id)

    def no_arrival(self, t: int) -> float:
        return max(1.0 - sum(p for _, p in self.steps[t]), 0.0)

    def support(self) -> Iterator[Tuple[int, str, float]]:
        for t, step in enumerate(self.steps):
            for type_id, prob in step:
                if prob > 0:
                    yield t, type_id, prob


@dataclass
class ValidationReport:
    """Every invariant violation found, with its location."""
    violations: List[str] = field(default_factory=list)

    @property
    def is_valid(self) -> bool:
        return not self.violations

    def add(self, message: str):
        self.violations.append(message)

    def to_dict(self) -> dict:
        return {'valid': self.is_valid, 'violations': list(self.violations)}


@dataclass
class Instance:
    """
    Non-IID instance.

    Attributes:
        problem_class: Which special case.
        agents: Offline agents in layout order.
        types: Online types by id.
        arrivals: Per-step arrival distributions.
    """
    problem_class: ProblemClass
    agents: List[Agent]
    types: Dict[str, OnlineType]
    arrivals: ArrivalDistribution

    @property
    def horizon(self) -> int:
        return self.arrivals.horizon

    @property
    def agent_ids(self) -> List[str]:
        return [a.id for a in self.agents]

    @cached_property
    def _agents_by_id(self) -> Dict[str, Agent]:
        return {a.id: a for a in self.agents}

    def agent(self, agent_id: str) -> Agent:
        try:
            return self._agents_by_id[agent_id]
        except KeyError:
            raise ValidationError(f"Unknown agent '{agent_id}'", field="agent", value=agent_id)

    def budget(self, agent_id: str) -> float:
        budget = self.agent(agent_id).budget
        return 1.0 if budget is None else budget

    def payload(self, type_id: str, agent_id: str) -> float:
        """Edge indicator, bid or edge-weight of (type, agent); 0 if absent."""
        return self.types[type_id].values.get(agent_id, 0.0)

    def value(self, type_id: str, agent_id: str) -> float:
        """Welfare of assigning one item of `type_id` to an agent with spare capacity."""
        payload = self.payload(type_id, agent_id)
        if payload <= 0:
            return 0.0
        if self.problem_class is ProblemClass.UNWEIGHTED:
            return 1.0
        if self.problem_class is ProblemClass.VERTEX_WEIGHTED:
            return self.agent(agent_id).weight
        return payload

    def neighbors(self, type_id: str) -> List[str]:
        """Agents with a positive payload, in layout order."""
        values = self.types[type_id].values
        return [j for j in self.agent_ids if values.get(j, 0.0) > 0]

    def distinct_weights(self, agent_id: str) -> List[float]:
        """Sorted distinct positive edge-weights incident to an agent."""
        levels = {t.values.get(agent_id, 0.0) for t in self.types.values()}
        return sorted(w for w in levels if w > 0)

    @cached_property
    def step_tables(self) -> List[Tuple[List[str], np.ndarray]]:
        """Per-step (type ids, cumulative probabilities) for sampling."""
        report = validate(self)
        if not report.is_valid:
            raise ValidationError(f"Invalid instance: {report.violations[0]}", field="instance")
        tables = []
        for step in self.arrivals.steps:
            ids = [type_id for type_id, prob in step if prob > 0]
            cumulative = np.cumsum([prob for _, prob in step if prob > 0])
            tables.append((ids, cumulative))
        return tables


@dataclass
class ArrivalSequence:
    """Realized type per step; None means no arrival."""
    types: List[Optional[str]]

    def __len__(self) -> int:
        return len(self.types)

    def realized(self) -> List[Tuple[int, str]]:
        return [(t, i) for t, i in enumerate(self.types) if i is not None]


@dataclass
class QueryCommitInstance:
    """
    Query-commit instance.

    Attributes:
        online: Online vertex ids (rows of p).
        offline: Offline vertex ids (columns of p).
        p: Edge existence probabilities; 0 means no edge.
        weights: Optional vertex weights of offline vertices.
    """
    online: List[str]
    offline: List[str]
    p: List[List[float]]
    weights: Optional[Dict[str, float]] = None

    def prob(self, i: str, j: str) -> float:
        return self.p[self.online.index(i)][self.offline.index(j)]

    def neighbors(self, i: str) -> List[str]:
        row = self.p[self.online.index(i)]
        return [j for j, pij in zip(self.offline, row) if pij > 0]

    def weight(self, j: str) -> float:
        if self.weights is None:
            return 1.0
        return self.weights.get(j, 1.0)


# =============================================================================
# Validation
# =============================================================================

def _validate_query_commit(instance: QueryCommitInstance, report: ValidationReport):
    if len(instance.p) != len(instance.online):
        report.add("p must have one row per online vertex")
    for row_index, row in enumerate(instance.p):
        if len(row) != len(instance.offline):
            report.add(f"p row {instance.online[row_index]} must have one entry per offline vertex")
        for col_index, pij in enumerate(row):
            if not (-PROBABILITY_TOL <= pij <= 1 + PROBABILITY_TOL):
                report.add(f"probability out of range at edge ({instance.online[row_index]}, "
                           f"{instance.offline[col_index] if col_index < len(instance.offline) else col_index})")
    for j, w in (instance.weights or {}).items():
        if w <= 0:
            report.add(f"vertex weight must be positive for agent {j}")


def validate(instance: Union[Instance, QueryCommitInstance]) -> ValidationReport:
    """
    List every invariant violation with its location (steps are 1-based).

    Example:
        >>> validate(instance).is_valid
        True
    """
    report = ValidationReport()
    if isinstance(instance, QueryCommitInstance):
        _validate_query_commit(instance, report)
        return report

    known_agents = set()
    for agent in instance.agents:
        if agent.id in known_agents:
            report.add(f"duplicate agent {agent.id}")
        known_agents.add(agent.id)
        if instance.problem_class is ProblemClass.VERTEX_WEIGHTED and not agent.weight > 0:
            report.add(f"vertex weight must be positive for agent {agent.id}")
        if instance.problem_class is ProblemClass.ADWORDS:
            if agent.budget is None or not agent.budget > 0:
                report.add(f"budget must be positive for agent {agent.id}")

    for type_id, online_type in instance.types.items():
        for agent_id, value in online_type.values.items():
            if agent_id not in known_agents:
                report.add(f"type {type_id} references unknown agent {agent_id}")
            if value < 0 or math.isnan(value):
                report.add(f"negative payload on ({type_id}, {agent_id})")

    for t, step in enumerate(instance.arrivals.steps):
        total = 0.0
        seen = set()
        for type_id, prob in step:
            if type_id not in instance.types:
                report.add(f"unknown type {type_id} at t={t + 1}")
            if type_id in seen:
                report.add(f"type {type_id} listed twice at t={t + 1}")
            seen.add(type_id)
            if not (-PROBABILITY_TOL <= prob <= 1 + PROBABILITY_TOL):
                report.add(f"probability out of range at t={t + 1} for type {type_id}")
            total += prob
        if total > 1 + PROBABILITY_TOL:
            report.add(f"arrival mass {total:.12g} exceeds 1 at t={t + 1}")

    if report.violations:
        logging.debug(f"Instance validation found {len(report.violations)} violations")
    return report


# =============================================================================
# Sampling and allocation accounting
# =============================================================================

def sample_step(instance: Instance, t: int, u: float) -> Optional[str]:
    """Type realized at step t for a uniform draw u."""
    ids, cumulative = instance.step_tables[t]
    index = int(np.searchsorted(cumulative, u, side='right'))
    return ids[index] if index < len(ids) else None


def sample_arrivals(instance: Instance,
                    seed: Union[int, TrialStreams, None] = None) -> ArrivalSequence:
    """
    Draw one realization, independently per step.

    Args:
        instance: A valid instance.
        seed: Base seed or the trial's streams (uses the "arrival" stream).
    """
    stream = as_streams(seed).stream("arrival")
    draws = stream.random(instance.horizon)
    return ArrivalSequence([sample_step(instance, t, float(u)) for t, u in enumerate(draws)])


def cumulative_allocation(instance: Instance, allocation: 'FractionalAllocation', agent: str,
                          horizon: Optional[int] = None,
                          weight_level: Optional[float] = None) -> float:
    """
    y_j over steps [0, horizon).

    Matching sums x_ij^t; AdWords scales by b_ij / B_j; Display Ads keeps
    only edges with w_ij >= weight_level.
    """
    instance.agent(agent)
    horizon = instance.horizon if horizon is None else horizon
    budget = instance.budget(agent)
    total = 0.0
    for (t, type_id, j), x in allocation.entries():
        if j != agent or t >= horizon or x <= 0:
            continue
        payload = instance.payload(type_id, agent)
        if instance.problem_class is ProblemClass.ADWORDS:
            total += x * payload / budget
        elif instance.problem_class is ProblemClass.DISPLAY_ADS and weight_level is not None:
            if payload >= weight_level:
                total += x
        else:
            total += x
    return total


# =============================================================================
# Hindsight optimum
# =============================================================================

def _matching_optimum(instance: Instance, realized: List[Tuple[int, str]]) -> float:
    graph = nx.Graph()
    for t, type_id in realized:
        for agent_id in instance.neighbors(type_id):
            weight = instance.value(type_id, agent_id)
            if weight > 0:
                graph.add_edge(("item", t), ("agent", agent_id), weight=weight)
    if graph.number_of_edges() == 0:
        return 0.0
    matching = nx.max_weight_matching(graph)
    return float(sum(graph[u][v]['weight'] for u, v in matching))


def budgeted_optimum(budgets: List[float], bids: List[List[float]],
                     cap: int = DEFAULT_HINDSIGHT_CAP) -> float:
    """
    Best total of min(spend_j, B_j) over all assignments of items to agents.

    Args:
        budgets: B_j per agent.
        bids: One row of per-agent bids per item.
        cap: Largest item count searched.
    """
    if len(bids) > cap:
        raise HindsightCapError(
            f"{len(bids)} realized items exceed the brute-force cap of {cap}"
        )
    memo: Dict[Tuple[int, Tuple[float, ...]], float] = {}

    def best(k: int, spent: Tuple[float, ...]) -> float:
        if k == len(bids):
            return 0.0
        key = (k, spent)
        if key in memo:
            return memo[key]
        value = best(k + 1, spent)
        for index, bid in enumerate(bids[k]):
            room = budgets[index] - spent[index]
            if bid <= 0 or room <= 0:
                continue
            gain = min(bid, room)
            updated = spent[:index] + (spent[index] + gain,) + spent[index + 1:]
            value = max(value, gain + best(k + 1, updated))
        memo[key] = value
        return value

    return best(0, tuple(0.0 for _ in budgets))


def _adwords_optimum(instance: Instance, realized: List[Tuple[int, str]], cap: int) -> float:
    agents = instance.agent_ids
    budgets = [instance.budget(j) for j in agents]
    bids = [[instance.payload(i, j) for j in agents] for _, i in realized]
    return budgeted_optimum(budgets, bids, cap)


def hindsight_optimum(instance: Instance, arrivals: ArrivalSequence,
                      cap: int = DEFAULT_HINDSIGHT_CAP) -> float:
    """
    Offline optimum on the realized items.

    Matching classes and Display Ads use maximum-weight bipartite matching;
    AdWords searches all assignments with budget caps.

    Raises:
        HindsightCapError: AdWords with more than `cap` realized items.
    """
    if len(arrivals) != instance.horizon:
        raise ValidationError(f"Arrival sequence has length {len(arrivals)}, expected {instance.horizon}",
                              field="arrivals")
    realized = arrivals.realized()
    if instance.problem_class is ProblemClass.ADWORDS:
        return _adwords_optimum(instance, realized, cap)
    return _matching_optimum(instance, realized)


# =============================================================================
# Generation
# =============================================================================

def generate(problem_class: Union[ProblemClass, str], num_types: int, num_agents: int,
             horizon: int, density: float, seed: int = 0) -> Instance:
    """
    Random instance of the requested class; deterministic given the seed.

    Each (type, agent) edge is present with probability `density`. Step
    distributions are Dirichlet draws over the types plus no-arrival,
    floored to 6 decimals so they never sum above 1.
    """
    if isinstance(problem_class, str):
        problem_class = ProblemClass(problem_class)
    for name, size in (("num_types", num_types), ("num_agents", num_agents), ("horizon", horizon)):
        if int(size) < 1:
            raise ValidationError("Size must be at least 1", field=name, value=size)
    density = InputValidator.validate_probability(density, field="density")
    rng = make_generator(InputValidator.validate_seed(seed), 0, "misc")

    agents = []
    for k in range(num_agents):
        agent = Agent(id=f"j{k + 1}")
        if problem_class is ProblemClass.VERTEX_WEIGHTED:
            agent.weight = round(float(rng.uniform(0.5, 2.0)), 6)
        if problem_class is ProblemClass.ADWORDS:
            agent.budget = round(float(rng.uniform(1.0, 2.0)), 4)
        agents.append(agent)

    types: Dict[str, OnlineType] = {}
    for k in range(num_types):
        values: Dict[str, float] = {}
        for agent in agents:
            if rng.random() >= density:
                continue
            if problem_class is ProblemClass.ADWORDS:
                values[agent.id] = round(float(rng.uniform(0.05, 1.0)) * agent.budget, 4)
            elif problem_class is ProblemClass.DISPLAY_ADS:
                values[agent.id] = round(float(rng.integers(1, 11)) / 10, 1)
            else:
                values[agent.id] = 1.0
        types[f"i{k + 1}"] = OnlineType(id=f"i{k + 1}", values=values)

    steps = []
    type_ids = list(types)
    for _ in range(horizon):
        shares = np.floor(rng.dirichlet(np.ones(num_types + 1)) * 1e6) / 1e6
        steps.append([(type_ids[k], float(shares[k])) for k in range(num_types) if shares[k] > 0])

    instance = Instance(problem_class=problem_class, agents=agents, types=types,
                        arrivals=ArrivalDistribution(steps))
    logging.info(f"Generated {problem_class.value} instance: {num_types} types, "
                 f"{num_agents} agents, T={horizon}, seed={seed}")
    return instance


# =============================================================================
# JSON documents
# =============================================================================

def instance_from_document(doc: InstanceDocument) -> Instance:
    try:
        problem_class = ProblemClass(doc.problem_class)
    except ValueError:
        raise ValidationError(f"Unknown problem class '{doc.problem_class}'", field="class")
    if len(doc.arrivals) != doc.T:
        raise ValidationError(f"Expected {doc.T} arrival steps, got {len(doc.arrivals)}", field="arrivals")
    agents = [Agent(id=a.id, weight=1.0 if a.weight is None else a.weight, budget=a.budget)
              for a in doc.agents]
    types: Dict[str, OnlineType] = {}
    for entry in doc.types:
        if problem_class is ProblemClass.ADWORDS:
            values = dict(entry.bids or {})
        elif problem_class is ProblemClass.DISPLAY_ADS:
            values = dict(entry.weights or {})
        else:
            values = {j: 1.0 for j in (entry.edges or [])}
        types[entry.id] = OnlineType(id=entry.id, values=values)
    steps = [[(e.type, e.prob) for e in step] for step in doc.arrivals]
    return Instance(problem_class, agents, types, ArrivalDistribution(steps))


def instance_to_document(instance: Instance) -> InstanceDocument:
    cls = instance.problem_class
    agents = []
    for a in instance.agents:
        agents.append(AgentDocument(
            id=a.id,
            weight=a.weight if cls is ProblemClass.VERTEX_WEIGHTED else None,
            budget=a.budget if cls is ProblemClass.ADWORDS else None,
        ))
    types = []
    for t in instance.types.values():
        if cls is ProblemClass.ADWORDS:
            types.append(TypeDocument(id=t.id, bids=dict(t.values)))
        elif cls is ProblemClass.DISPLAY_ADS:
            types.append(TypeDocument(id=t.id, weights=dict(t.values)))
        else:
            types.append(TypeDocument(id=t.id, edges=t.neighbors))
    arrivals = [[ArrivalEntry(type=i, prob=p) for i, p in step] for step in instance.arrivals.steps]
    return InstanceDocument(problem_class=cls.value, T=instance.horizon, agents=agents,
                            types=types, arrivals=arrivals)


def query_commit_from_document(doc: QueryCommitDocument) -> QueryCommitInstance:
    return QueryCommitInstance(online=list(doc.online), offline=list(doc.offline),
                               p=[list(row) for row in doc.p], weights=doc.weights)


def load_instance(path: Union[str, Path]) -> Union[Instance, QueryCommitInstance]:
    """
    Read an instance or query-commit instance JSON file.

    Raises:
        ValidationError: malformed document.
    """
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValidationError(f"Invalid JSON: {e}", field="instance", value=str(path))
    try:
        if isinstance(raw, dict) and "I" in raw:
            return query_commit_from_document(QueryCommitDocument.model_validate(raw))
        return instance_from_document(InstanceDocument.model_validate(raw))
    except SchemaError as e:
        raise ValidationError(f"Malformed instance document: {e.errors()[0]['msg']}",
                              field="instance", value=str(path))


def save_instance(instance: Union[Instance, QueryCommitInstance], path: Union[str, Path]):
    """Write an instance as JSON (probabilities in plain decimal)."""
    if isinstance(instance, QueryCommitInstance):
        doc = QueryCommitDocument(online=instance.online, offline=instance.offline,
                                  p=instance.p, weights=instance.weights)
    else:
        doc = instance_to_document(instance)
    Path(path).write_text(doc.model_dump_json(by_alias=True, exclude_none=True, indent=2))
    logging.info(f"Saved instance to {path}")
