"""
Type Decomposition: turn a fractional allocation into a surrogate type.

The agents' allocations mu_j are laid out left to right on [0, 1) in the
order of the mapping (left-closed, right-open intervals), followed by the
residual interval of the dummy agent. For an offset eta in [0, 1/2) the
points eta and eta + 1/2 are located; landing in the same interval gives a
one-way surrogate, otherwise a two-way surrogate over the two agents.

Usage:
    from type_decomposition import sample_surrogate, surrogate_distribution

    mu = {"1": 0.1, "2": 0.2, "3": 0.3, "4": 0.4}
    surrogate = sample_surrogate(mu, eta=0.05)      # TwoWay(1, 3)
    for surrogate, prob in surrogate_distribution(mu):
        print(surrogate, prob)
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from validators import InputValidator, ValidationError, PROBABILITY_TOL

# Placeholder agent owning the unallocated mass 1 - sum(mu).
DUMMY_AGENT = "⊥"


@dataclass(frozen=True)
class SurrogateType:
    """
    A one-way (single agent) or two-way (unordered pair) surrogate.

    Two-way agents are stored in layout order; equality ignores order.
    """
    first: str
    second: Optional[str] = None

    def __post_init__(self):
        if self.second is not None and self.second == self.first:
            raise ValidationError("Two-way surrogate needs two distinct agents",
                                  field="surrogate", value=(self.first, self.second))

    @classmethod
    def one_way(cls, agent: str) -> 'SurrogateType':
        return cls(first=agent)

    @classmethod
    def two_way(cls, agent: str, other: str) -> 'SurrogateType':
        return cls(first=agent, second=other)

    @property
    def is_one_way(self) -> bool:
        return self.second is None

    @property
    def agents(self) -> Tuple[str, ...]:
        return (self.first,) if self.second is None else (self.first, self.second)

    @property
    def is_dummy(self) -> bool:
        """True when no real agent can receive the item."""
        return all(agent == DUMMY_AGENT for agent in self.agents)

    def involves(self, agent: str) -> bool:
        return agent in self.agents

    def other(self, agent: str) -> str:
        if self.second is None or agent not in self.agents:
            raise ValidationError(f"{agent} is not part of {self}", field="agent", value=agent)
        return self.second if agent == self.first else self.first

    def key(self) -> Tuple[str, ...]:
        return tuple(sorted(self.agents))

    def __eq__(self, other) -> bool:
        if not isinstance(other, SurrogateType):
            return NotImplemented
        return self.key() == other.key()

    def __hash__(self) -> int:
        return hash(self.key())

    def __str__(self) -> str:
        if self.is_one_way:
            return f"OneWay({self.first})"
        return f"TwoWay({self.first}, {self.second})"

    __repr__ = __str__


Distribution = List[Tuple[SurrogateType, float]]


def _layout(mu: Mapping[str, float]) -> Tuple[List[str], np.ndarray]:
    """
    Validate mu and return (owners, right endpoints) of the non-empty intervals,
    laid out left to right in lexicographic order of the agent ids.

    The dummy interval is appended when the residual mass is positive.
    """
    owners: List[str] = []
    ends: List[float] = []
    total = 0.0
    for agent, value in sorted(mu.items()):
        if agent == DUMMY_AGENT:
            raise ValidationError("The dummy agent cannot carry allocation", field="mu", value=agent)
        share = InputValidator.validate_probability(value, field=f"mu[{agent}]")
        if share <= 0:
            continue
        total += share
        owners.append(agent)
        ends.append(total)
    if total > 1.0 + PROBABILITY_TOL:
        raise ValidationError(f"Allocation sums to {total:.12g} > 1", field="mu", value=dict(mu))
    if total < 1.0 - PROBABILITY_TOL or not owners:
        owners.append(DUMMY_AGENT)
        ends.append(1.0)
    else:
        ends[-1] = 1.0
    return owners, np.asarray(ends)


def _locate(owners: List[str], ends: np.ndarray, point: float) -> str:
    index = int(np.searchsorted(ends, point, side='right'))
    return owners[min(index, len(owners) - 1)]


def _decide(first: str, second: str) -> SurrogateType:
    if first == second:
        return SurrogateType.one_way(first)
    return SurrogateType.two_way(first, second)


def sample_surrogate(mu: Mapping[str, float], eta: float) -> SurrogateType:
    """
    Deterministic surrogate for offset eta.

    Args:
        mu: Agent -> allocation share; intervals follow lexicographic agent order.
        eta: Offset in [0, 1/2).

    Example:
        >>> sample_surrogate({"1": 0.1, "2": 0.1, "3": 0.1, "4": 0.7}, 0.4)
        OneWay(4)
    """
    eta = InputValidator.validate_eta(eta)
    owners, ends = _layout(mu)
    return _decide(_locate(owners, ends, eta), _locate(owners, ends, eta + 0.5))


class SurrogateTable:
    """
    Precomputed piecewise-constant map eta -> surrogate for one mu.

    Each piece [lo, hi) of [0, 1/2) maps to one surrogate, so repeated
    sampling is a single binary search.
    """

    def __init__(self, mu: Mapping[str, float]):
        owners, ends = _layout(mu)
        cuts = {0.0, 0.5}
        for end in ends[:-1]:
            if end < 0.5:
                cuts.add(float(end))
            elif end > 0.5:
                cuts.add(float(end) - 0.5)
        points = sorted(cuts)
        self.breaks: List[float] = []
        self.outcomes: List[SurrogateType] = []
        for lo, hi in zip(points[:-1], points[1:]):
            if hi - lo <= 0:
                continue
            middle = 0.5 * (lo + hi)
            self.breaks.append(lo)
            self.outcomes.append(_decide(_locate(owners, ends, middle), _locate(owners, ends, middle + 0.5)))
        self.widths = np.diff(np.append(self.breaks, 0.5))
        self._starts = np.asarray(self.breaks)

    def sample(self, eta: float) -> SurrogateType:
        index = int(np.searchsorted(self._starts, eta, side='right')) - 1
        return self.outcomes[max(index, 0)]

    def distribution(self) -> Distribution:
        """Merge pieces with equal outcomes; probability is twice the width."""
        merged: Dict[SurrogateType, float] = {}
        for outcome, width in zip(self.outcomes, self.widths):
            merged[outcome] = merged.get(outcome, 0.0) + 2.0 * float(width)
        return list(merged.items())


def surrogate_distribution(mu: Mapping[str, float]) -> Distribution:
    """
    Exact surrogate distribution of Type Decomposition for uniform eta.

    Example:
        >>> dict(surrogate_distribution({"1": 0.5, "2": 0.5}))
        {TwoWay(1, 2): 1.0}
    """
    distribution = SurrogateTable(mu).distribution()
    logging.debug(f"Surrogate distribution for {dict(mu)}: {[(str(s), p) for s, p in distribution]}")
    return distribution


def one_way_probability(mu_j: float) -> float:
    """Pr[OneWay(j)] = (2 mu_j - 1)^+."""
    return max(2.0 * mu_j - 1.0, 0.0)


def two_way_probability(mu_j: float) -> float:
    """Pr[j is in the two-way surrogate] = 2 min(mu_j, 1 - mu_j)."""
    return 2.0 * min(mu_j, 1.0 - mu_j)


def agent_masses(distribution: Distribution, agent: str) -> Tuple[float, float]:
    """(one-way probability, two-way probability) of an agent."""
    one_way = 0.0
    two_way = 0.0
    for surrogate, prob in distribution:
        if not surrogate.involves(agent):
            continue
        if surrogate.is_one_way:
            one_way += prob
        else:
            two_way += prob
    return one_way, two_way


def conservation_residual(mu: Mapping[str, float], distribution: Distribution,
                          f: float = 1.0) -> float:
    """
    max_j |f mu_j - (f_{i~j} + 1/2 sum_k f_{i~{j,k}})| with surrogate masses f * prob.
    """
    worst = 0.0
    for agent, share in mu.items():
        one_way, two_way = agent_masses(distribution, agent)
        worst = max(worst, abs(f * share - f * (one_way + 0.5 * two_way)))
    return worst


class SurrogateSampler:
    """
    Lazily built SurrogateTables for every (t, type) of a fractional allocation.

    `allocation` only needs a `mu(t, type_id)` method.
    """

    def __init__(self, allocation):
        self.allocation = allocation
        self._tables: Dict[Tuple[int, str], SurrogateTable] = {}

    def table(self, t: int, type_id: str) -> SurrogateTable:
        key = (t, type_id)
        table = self._tables.get(key)
        if table is None:
            table = SurrogateTable(self.allocation.mu(t, type_id))
            self._tables[key] = table
        return table

    def sample(self, t: int, type_id: str, u: float) -> SurrogateType:
        """Surrogate for a uniform draw u in [0, 1), i.e. eta = u / 2."""
        return self.table(t, type_id).sample(0.5 * u)

    def distribution(self, t: int, type_id: str) -> Distribution:
        return self.table(t, type_id).distribution()
