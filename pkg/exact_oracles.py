"""
Exact oracles for small instances.

- SubsetTable / recurrence_table: u_S^t = Pr[every agent of S is still
  unmatched after the first t steps] of the matching SOCS, for all S.
- exact_state_dp: forward DP over the full algorithm state for the
  matching, independent, random-order, AdWords and Display rounding rules.
- Audits of recurrence tables (baseline bound, AM-GM relaxation, singleton
  rate) and the converse Jensen inequality on LP solutions.
- Builders for two-way instances, including the Poisson-pair instance on
  which the two-way rate is tight.

Usage:
    from exact_oracles import two_way_instance, recurrence_table, exact_state_dp

    instance, allocation = two_way_instance([[(("1", "2"), 1.0)], [(("1", "3"), 1.0)]])
    table = recurrence_table(instance, allocation)
    print(table.value({"1"}, 2))
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import AlgorithmKind
from instance_model import Agent, ArrivalDistribution, Instance, OnlineType, ProblemClass
from lp_relaxations import FractionalAllocation
from rates import LN2, CheckReport, CheckResult
from rng_streams import make_generator
from socs_adwords import LARGE_BID_FRACTION
from type_decomposition import DUMMY_AGENT, Distribution, SurrogateSampler, SurrogateType
from validators import InputValidator, ValidationError

RECURRENCE_CAP = 16
DP_STATE_CAP = 1_000_000
PERMUTATION_CAP = 7
MAX_DISTINCT_BIDS = 3
BOUND_TOL = 1e-12

# Mark bookkeeping per agent in the DP states.
NO_MARK, FIRST_TOOK_M, FIRST_TOOK_OTHER, MARKED_TWICE = 0, 1, 2, 3


class OracleCapError(Exception):
    """Raised when an exact oracle would exceed its size cap."""
    pass


def _step_surrogates(instance: Instance, allocation: FractionalAllocation,
                     sampler: SurrogateSampler, t: int) -> List[Tuple[SurrogateType, float, str]]:
    """(surrogate, probability, type id) over all types of step t."""
    masses = []
    for type_id, prob in instance.arrivals.steps[t]:
        if prob <= 0:
            continue
        for surrogate, q in sampler.distribution(t, type_id):
            if q > 0:
                masses.append((surrogate, prob * q, type_id))
    return masses


def _step_increments(instance: Instance, allocation: FractionalAllocation) -> np.ndarray:
    """Per-step y increments, matching accounting, shape (T, n)."""
    index = {j: k for k, j in enumerate(instance.agent_ids)}
    increments = np.zeros((instance.horizon, len(index)))
    for (t, _, j), x in allocation.entries():
        increments[t, index[j]] += x
    return increments


# =============================================================================
# Subset recurrence
# =============================================================================

@dataclass
class SubsetTable:
    """
    u[t, S] for every subset bitmask S and t = 0..T.

    Bit k of S stands for agents[k]. y[t, k] is agent k's cumulative
    allocation over the first t steps.
    """
    agents: List[str]
    u: np.ndarray
    y: np.ndarray
    surrogates: List[List[Tuple[SurrogateType, float]]]

    @property
    def horizon(self) -> int:
        return self.u.shape[0] - 1

    def mask(self, subset: Iterable[str]) -> int:
        bits = 0
        for agent in subset:
            if agent not in self.agents:
                raise ValidationError(f"Unknown agent '{agent}'", field="subset", value=agent)
            bits |= 1 << self.agents.index(agent)
        return bits

    def value(self, subset: Iterable[str], t: Optional[int] = None) -> float:
        return float(self.u[self.horizon if t is None else t, self.mask(subset)])

    def singleton(self, agent: str, t: Optional[int] = None) -> float:
        return self.value([agent], t)

    @property
    def two_way_only(self) -> bool:
        """No one-way surrogates and no dummy partners."""
        return all(not s.is_one_way and DUMMY_AGENT not in s.agents
                   for step in self.surrogates for s, _ in step)

    def rows(self) -> List[dict]:
        """CSV rows (mask, t, u)."""
        return [{'mask': s, 't': t, 'u': float(self.u[t, s])}
                for t in range(self.horizon + 1) for s in range(self.u.shape[1])]


def _selection_weight(y: np.ndarray, index: Dict[str, int], agent: str) -> float:
    return 1.0 if agent == DUMMY_AGENT else math.exp(2.0 * y[index[agent]])


def recurrence_table(instance: Instance, allocation: FractionalAllocation,
                     cap: int = RECURRENCE_CAP) -> SubsetTable:
    """
    Exact u_S^t of the matching SOCS for all subsets S.

    One step moves u_S by the mass of surrogates that can fill S:
    one-way j in S and two-way pairs inside S always do; a pair {j, k} with
    only j in S does unless k is still open and wins the e^{2y} draw.

    Raises:
        OracleCapError: more than `cap` agents.

    Example:
        pair {1, 2} with probability 1 at t=1 -> u_{1}^1 = 1/2, u_{1,2}^1 = 0
    """
    agents = instance.agent_ids
    n = len(agents)
    if n > cap:
        raise OracleCapError(f"{n} agents exceed the recurrence cap of {cap}")
    index = {j: k for k, j in enumerate(agents)}
    masks = np.arange(1 << n)
    member = [(masks >> k) & 1 == 1 for k in range(n)]
    increments = _step_increments(instance, allocation)
    sampler = SurrogateSampler(allocation)

    T = instance.horizon
    u = np.ones((T + 1, 1 << n))
    y = np.zeros((T + 1, n))
    surrogates = []
    for t in range(T):
        prev = u[t]
        new = prev.copy()
        step = []
        for surrogate, mass, _ in _step_surrogates(instance, allocation, sampler, t):
            step.append((surrogate, mass))
            if surrogate.is_one_way:
                if surrogate.first != DUMMY_AGENT:
                    new[member[index[surrogate.first]]] -= mass * prev[member[index[surrogate.first]]]
                continue
            j, k = surrogate.agents
            weight_j = _selection_weight(y[t], index, j)
            weight_k = _selection_weight(y[t], index, k)
            for a, b, weight_a, weight_b in ((j, k, weight_j, weight_k), (k, j, weight_k, weight_j)):
                if a == DUMMY_AGENT:
                    continue
                in_a = member[index[a]]
                if b == DUMMY_AGENT:
                    new[in_a] -= mass * weight_a / (weight_a + weight_b) * prev[in_a]
                    continue
                in_b = member[index[b]]
                only_a = in_a & ~in_b
                b_wins = weight_b / (weight_a + weight_b)
                new[only_a] -= mass * (prev[only_a] - b_wins * prev[masks[only_a] | (1 << index[b])])
                if a == j:
                    both = in_a & in_b
                    new[both] -= mass * prev[both]
        u[t + 1] = new
        y[t + 1] = y[t] + increments[t]
        surrogates.append(step)
    logging.debug(f"Recurrence table over {n} agents and {T} steps")
    return SubsetTable(agents=agents, u=u, y=y, surrogates=surrogates)


def _recurrence_terms(table: SubsetTable, t: int, s: int, relaxed: bool) -> float:
    """Right-hand side of the one-step recurrence for subset s, or its AM-GM relaxation."""
    index = {j: k for k, j in enumerate(table.agents)}
    prev = table.u[t]
    y = table.y[t]

    def inside(agent: str) -> bool:
        return agent != DUMMY_AGENT and (s >> index[agent]) & 1 == 1

    stay = 1.0
    escape = 0.0
    for surrogate, mass in table.surrogates[t]:
        if surrogate.is_one_way:
            if inside(surrogate.first):
                stay -= mass
            continue
        j, k = surrogate.agents
        if inside(j) and inside(k):
            stay -= mass
            continue
        for a, b in ((j, k), (k, j)):
            if not inside(a) or inside(b):
                continue
            stay -= mass
            grown = prev[s] if b == DUMMY_AGENT else prev[s | (1 << index[b])]
            y_a = y[index[a]]
            y_b = 0.0 if b == DUMMY_AGENT else y[index[b]]
            if relaxed:
                escape += 0.5 * mass * grown * math.exp(y_b - y_a)
            else:
                escape += mass * grown * math.exp(2 * y_b) / (math.exp(2 * y_a) + math.exp(2 * y_b))
    return stay * prev[s] + escape


def recurrence_residual(table: SubsetTable) -> float:
    """max |u_S^t - recurrence(u^{t-1})| evaluated subset by subset."""
    worst = 0.0
    for t in range(table.horizon):
        for s in range(table.u.shape[1]):
            worst = max(worst, abs(table.u[t + 1, s] - _recurrence_terms(table, t, s, relaxed=False)))
    return worst


def am_gm_check(table: SubsetTable) -> CheckResult:
    """u_S^t <= the recurrence with 1/2 e^{y_k - y_j} in place of the selection probability."""
    worst = -math.inf
    for t in range(table.horizon):
        for s in range(table.u.shape[1]):
            worst = max(worst, table.u[t + 1, s] - _recurrence_terms(table, t, s, relaxed=True))
    return CheckResult("AM-GM relaxation", worst <= BOUND_TOL, worst, "max u - relaxed bound")


def baseline_check(table: SubsetTable) -> CheckResult:
    """u_S^t <= exp(-sum_{j in S} y_j^{1:t})."""
    n = len(table.agents)
    masks = np.arange(1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(float)
    bound = np.exp(-(table.y @ bits.T))
    worst = float(np.max(table.u - bound))
    return CheckResult("baseline bound", worst <= BOUND_TOL, worst, "max u - exp(-y_S)")


def singleton_bound_check(table: SubsetTable) -> CheckResult:
    """u_j^T <= (1 + y_j) e^{-2 y_j} on two-way tables."""
    if not table.two_way_only:
        return CheckResult("singleton two-way rate", True, 0.0, "not applicable: table has one-way surrogates")
    worst = -math.inf
    for k in range(len(table.agents)):
        y = table.y[-1, k]
        worst = max(worst, table.u[-1, 1 << k] - (1 + y) * math.exp(-2 * y))
    return CheckResult("singleton two-way rate", worst <= BOUND_TOL, worst, "max u_j - (1+y)e^{-2y}")


def audit_table(table: SubsetTable) -> CheckReport:
    """Every table audit in one report."""
    report = CheckReport()
    residual = recurrence_residual(table)
    report.add(CheckResult("recurrence consistency", residual <= BOUND_TOL, residual, "max residual"))
    report.add(baseline_check(table))
    report.add(am_gm_check(table))
    report.add(singleton_bound_check(table))
    return report


# =============================================================================
# Forward state DP
# =============================================================================

@dataclass
class ExactOutcome:
    """
    Exact outcome probabilities of one rounding rule.

    Attributes:
        kind: The rounding rule.
        miss: Agent -> Pr[unmatched] (matching kinds) or E[unspent fraction] (AdWords).
        level_miss: Display Ads: agent -> {w: Pr[no edge of weight >= w]}.
        expected_value: Expected algorithm value.
        final: Final state distribution (matching kinds: matched-agent bitmask -> probability).
        peak_states: Largest state count seen.
    """
    kind: AlgorithmKind
    miss: Dict[str, float]
    level_miss: Dict[str, Dict[float, float]] = field(default_factory=dict)
    expected_value: float = 0.0
    final: Dict[object, float] = field(default_factory=dict)
    peak_states: int = 0

    def all_unmatched(self, agents: List[str], subset: Iterable[str]) -> float:
        """Pr[every agent in subset is unmatched] from a matching-kind final distribution."""
        bits = 0
        for agent in subset:
            bits |= 1 << agents.index(agent)
        return sum(p for mask, p in self.final.items() if mask & bits == 0)


Transition = Callable[[object, int, np.ndarray], List[Tuple[float, object]]]


def _forward(initial: object, order: Sequence[int], increments: np.ndarray,
             transition: Transition, cap: int) -> Tuple[Dict[object, float], int]:
    dist = {initial: 1.0}
    y = np.zeros(increments.shape[1])
    peak = 1
    for t in order:
        nxt: Dict[object, float] = {}
        for state, prob in dist.items():
            for q, new_state in transition(state, t, y):
                if q > 0:
                    nxt[new_state] = nxt.get(new_state, 0.0) + prob * q
        if len(nxt) > cap:
            raise OracleCapError(f"State space of {len(nxt)} exceeds the cap of {cap}")
        peak = max(peak, len(nxt))
        dist = nxt
        y = y + increments[t]
    return dist, peak


def _matching_transition(instance: Instance, allocation: FractionalAllocation,
                         independent: bool = False) -> Transition:
    index = {j: k for k, j in enumerate(instance.agent_ids)}
    sampler = SurrogateSampler(allocation)
    per_step = [_step_surrogates(instance, allocation, sampler, t) for t in range(instance.horizon)]
    shares = [[(prob, allocation.mu(t, i)) for i, prob in instance.arrivals.steps[t] if prob > 0]
              for t in range(instance.horizon)]

    def bit(agent: str) -> int:
        return 0 if agent == DUMMY_AGENT else 1 << index[agent]

    def independent_step(mask: int, t: int, y: np.ndarray) -> List[Tuple[float, object]]:
        out = []
        rest = 1.0
        for prob, mu in shares[t]:
            for j, share in mu.items():
                out.append((prob * share, mask | bit(j)))
                rest -= prob * share
        out.append((rest, mask))
        return out

    def socs_step(mask: int, t: int, y: np.ndarray) -> List[Tuple[float, object]]:
        out = []
        rest = 1.0
        for surrogate, mass, _ in per_step[t]:
            rest -= mass
            if surrogate.is_one_way:
                out.append((mass, mask | bit(surrogate.first)))
                continue
            j, k = surrogate.agents
            open_j = j == DUMMY_AGENT or not mask & bit(j)
            open_k = k == DUMMY_AGENT or not mask & bit(k)
            if open_j and open_k:
                w_j = _selection_weight(y, index, j)
                w_k = _selection_weight(y, index, k)
                out.append((mass * w_j / (w_j + w_k), mask | bit(j)))
                out.append((mass * w_k / (w_j + w_k), mask | bit(k)))
            elif open_j:
                out.append((mass, mask | bit(j)))
            elif open_k:
                out.append((mass, mask | bit(k)))
            else:
                out.append((mass, mask))
        out.append((max(rest, 0.0), mask))
        return out

    return independent_step if independent else socs_step


def _mark_outcomes(marks: Tuple[int, ...], pair: Tuple[str, str], index: Dict[str, int],
                   marked: Callable[[str], bool]) -> List[Tuple[float, str, Tuple[int, ...]]]:
    """(probability, selected agent, new marks) of one mark-and-oppose step."""
    out = []
    for m in pair:
        other = pair[1] if m == pair[0] else pair[0]
        if m == DUMMY_AGENT or not marked(m):
            out.append((0.25, m, marks))
            out.append((0.25, other, marks))
            continue
        k = index[m]
        status = marks[k]

        def with_status(value: int) -> Tuple[int, ...]:
            return marks[:k] + (value,) + marks[k + 1:]

        if status == NO_MARK:
            out.append((0.25, m, with_status(FIRST_TOOK_M)))
            out.append((0.25, other, with_status(FIRST_TOOK_OTHER)))
        elif status == FIRST_TOOK_M:
            out.append((0.5, other, with_status(MARKED_TWICE)))
        elif status == FIRST_TOOK_OTHER:
            out.append((0.5, m, with_status(MARKED_TWICE)))
        else:
            out.append((0.25, m, marks))
            out.append((0.25, other, marks))
    return out


def _check_distinct_bids(instance: Instance):
    for j in instance.agent_ids:
        bids = {round(t.values.get(j, 0.0), 12) for t in instance.types.values()} - {0.0}
        if len(bids) > MAX_DISTINCT_BIDS:
            raise OracleCapError(
                f"Agent {j} has {len(bids)} distinct bids; the exact oracle allows {MAX_DISTINCT_BIDS}"
            )


def _budget_transition(instance: Instance, allocation: FractionalAllocation, fraction: float) -> Transition:
    """AdWords states (spent capped at budget, marks); Display states (best weight, marks)."""
    agents = instance.agent_ids
    index = {j: k for k, j in enumerate(agents)}
    sampler = SurrogateSampler(allocation)
    per_step = [_step_surrogates(instance, allocation, sampler, t) for t in range(instance.horizon)]
    adwords = instance.problem_class is ProblemClass.ADWORDS
    budgets = [instance.budget(j) for j in agents]

    def receive(held: Tuple[float, ...], agent: str, payload: float) -> Tuple[float, ...]:
        if agent == DUMMY_AGENT or payload <= 0:
            return held
        k = index[agent]
        updated = min(held[k] + payload, budgets[k]) if adwords else max(held[k], payload)
        return held[:k] + (round(updated, 12),) + held[k + 1:]

    def step(state, t: int, y: np.ndarray) -> List[Tuple[float, object]]:
        held, marks = state
        out = []
        rest = 1.0
        for surrogate, mass, type_id in per_step[t]:
            rest -= mass
            values = instance.types[type_id].values
            if surrogate.is_one_way:
                out.append((mass, (receive(held, surrogate.first, values.get(surrogate.first, 0.0)), marks)))
                continue

            def marked(m: str) -> bool:
                if not adwords:
                    return True
                return values.get(m, 0.0) >= fraction * budgets[index[m]]

            for q, chosen, new_marks in _mark_outcomes(marks, surrogate.agents, index, marked):
                out.append((mass * q, (receive(held, chosen, values.get(chosen, 0.0)), new_marks)))
        out.append((max(rest, 0.0), state))
        return out

    return step


def exact_state_dp(instance: Instance, allocation: FractionalAllocation,
                   kind: Union[AlgorithmKind, str] = AlgorithmKind.MATCHING,
                   cap: int = DP_STATE_CAP, permutation_cap: int = PERMUTATION_CAP,
                   fraction: float = LARGE_BID_FRACTION) -> ExactOutcome:
    """
    Exact outcome distribution of a rounding rule by forward DP.

    Raises:
        OracleCapError: state count, permutation count or distinct-bid cap exceeded.

    Example:
        {1,2} then {1,3}, both with probability 1 -> Pr[1 unmatched] = 1/(2(e+1))
    """
    if not isinstance(kind, AlgorithmKind):
        kind = AlgorithmKind(InputValidator.validate_choice(kind, [k.value for k in AlgorithmKind],
                                                            field="kind"))
    agents = instance.agent_ids
    increments = _step_increments(instance, allocation)
    natural = list(range(instance.horizon))

    if kind in (AlgorithmKind.MATCHING, AlgorithmKind.INDEPENDENT, AlgorithmKind.RANDOM_ORDER):
        transition = _matching_transition(instance, allocation, independent=kind is AlgorithmKind.INDEPENDENT)
        if kind is AlgorithmKind.RANDOM_ORDER:
            if instance.horizon > permutation_cap:
                raise OracleCapError(f"{instance.horizon}! orders exceed the permutation cap of {permutation_cap}")
            orders = list(itertools.permutations(natural))
        else:
            orders = [natural]
        final: Dict[object, float] = {}
        peak = 0
        for order in orders:
            dist, order_peak = _forward(0, order, increments, transition, cap)
            peak = max(peak, order_peak)
            for mask, p in dist.items():
                final[mask] = final.get(mask, 0.0) + p / len(orders)
        miss = {j: sum(p for mask, p in final.items() if not mask & (1 << k)) for k, j in enumerate(agents)}
        weights = [instance.agent(j).weight if instance.problem_class is ProblemClass.VERTEX_WEIGHTED else 1.0
                   for j in agents]
        value = sum(weights[k] * (1.0 - miss[j]) for k, j in enumerate(agents))
        return ExactOutcome(kind, miss, expected_value=value, final=final, peak_states=peak)

    if kind is AlgorithmKind.ADWORDS:
        if instance.problem_class is not ProblemClass.ADWORDS:
            raise ValidationError("AdWords oracle needs an AdWords instance", field="class")
        _check_distinct_bids(instance)
    elif kind is AlgorithmKind.DISPLAY:
        if instance.problem_class is not ProblemClass.DISPLAY_ADS:
            raise ValidationError("Display oracle needs a Display Ads instance", field="class")
    else:
        raise ValidationError(f"No exact oracle for '{kind.value}'", field="kind", value=kind.value)

    initial = (tuple(0.0 for _ in agents), tuple(NO_MARK for _ in agents))
    dist, peak = _forward(initial, natural, increments, _budget_transition(instance, allocation, fraction), cap)
    if kind is AlgorithmKind.ADWORDS:
        budgets = [instance.budget(j) for j in agents]
        miss = {j: sum(p * (1.0 - held[k] / budgets[k]) for (held, _), p in dist.items())
                for k, j in enumerate(agents)}
        value = sum(p * sum(held) for (held, _), p in dist.items())
        return ExactOutcome(kind, miss, expected_value=value, final=dist, peak_states=peak)

    level_miss = {}
    for k, j in enumerate(agents):
        level_miss[j] = {w: sum(p for (held, _), p in dist.items() if held[k] < w)
                         for w in instance.distinct_weights(j)}
    miss = {j: sum(p for (held, _), p in dist.items() if held[k] <= 0) for k, j in enumerate(agents)}
    value = sum(p * sum(held) for (held, _), p in dist.items())
    return ExactOutcome(kind, miss, level_miss=level_miss, expected_value=value, final=dist, peak_states=peak)


# =============================================================================
# Converse Jensen
# =============================================================================

@dataclass(frozen=True)
class ConverseJensenResult:
    agent: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 1e-10

    @property
    def residual(self) -> float:
        return self.rhs - self.lhs


def converse_jensen_check(instance: Instance, allocation: FractionalAllocation, agent: str,
                          types: Optional[Iterable[str]] = None) -> ConverseJensenResult:
    """
    lhs = sum_{i, t} (2 x_ij^t - f_i^t)^+ and rhs = 1 - ln 2 + 2 sum_t (sum_i x_ij^t)^2
    over the given types (all types by default).

    Example:
        single type, f = x = 1 -> lhs 1, rhs 3 - ln 2
    """
    instance.agent(agent)
    chosen = set(instance.types) if types is None else set(types)
    lhs = 0.0
    squares = 0.0
    for t in range(instance.horizon):
        column = 0.0
        for type_id, prob in instance.arrivals.steps[t]:
            if type_id not in chosen:
                continue
            x = allocation.x_of(t, type_id, agent)
            lhs += max(2 * x - prob, 0.0)
            column += x
        squares += column * column
    return ConverseJensenResult(agent, lhs, 1 - LN2 + 2 * squares)


# =============================================================================
# Instance builders
# =============================================================================

PairSpec = Tuple[Tuple[str, ...], float]


def two_way_instance(pairs_by_step: Sequence[Sequence[PairSpec]],
                     problem_class: ProblemClass = ProblemClass.UNWEIGHTED) -> Tuple[Instance, FractionalAllocation]:
    """
    Instance whose every type is an agent pair allocated 1/2 to each member.

    A one-agent tuple gives a type allocated 1/2 to it, whose other half
    belongs to the dummy agent.
    """
    agents: List[str] = []
    types: Dict[str, OnlineType] = {}
    steps = []
    mu = {}
    for t, step in enumerate(pairs_by_step):
        entries = []
        for n, (pair, prob) in enumerate(step):
            if not 1 <= len(pair) <= 2 or len(set(pair)) != len(pair):
                raise ValidationError("Each type needs one or two distinct agents", field="pair", value=pair)
            type_id = f"i{t + 1}_{n + 1}"
            for j in pair:
                if j not in agents:
                    agents.append(j)
            types[type_id] = OnlineType(type_id, {j: 1.0 for j in pair})
            entries.append((type_id, InputValidator.validate_probability(prob, field=f"prob[{type_id}]")))
            mu[(t, type_id)] = {j: 0.5 for j in pair}
        steps.append(entries)
    instance = Instance(problem_class, [Agent(j) for j in agents], types, ArrivalDistribution(steps))
    return instance, FractionalAllocation.from_mu(instance, mu)


def tightness_instance(y: float, horizon: int) -> Tuple[Instance, FractionalAllocation]:
    """
    Pair {j, k} arriving with probability 2y/T at each of T steps.

    As T grows, Pr[j unmatched] tends to (1 + y) e^{-2y}.

    Raises:
        ValidationError: 2y/T > 1 or y < 0.
    """
    y = InputValidator.validate_non_negative(y, field="y")
    if horizon < 1:
        raise ValidationError("Horizon must be at least 1", field="horizon", value=horizon)
    rate = 2 * y / horizon
    if rate > 1:
        raise ValidationError(f"Arrival rate 2y/T = {rate:.6g} exceeds 1", field="y", value=y)
    step = [(("j", "k"), rate)] if rate > 0 else []
    return two_way_instance([step for _ in range(horizon)])


def random_two_way_instance(num_agents: int, horizon: int, seed: int = 0,
                            max_pairs: int = 2) -> Tuple[Instance, FractionalAllocation]:
    """Random two-way instance: per step up to `max_pairs` random pairs with random probabilities."""
    if num_agents < 2:
        raise ValidationError("Need at least two agents", field="num_agents", value=num_agents)
    rng = make_generator(seed, 0, "misc")
    names = [str(k + 1) for k in range(num_agents)]
    steps = []
    for _ in range(horizon):
        count = int(rng.integers(1, max_pairs + 1))
        probs = rng.dirichlet(np.ones(count + 1))[:count]
        step = []
        for prob in probs:
            a, b = rng.choice(num_agents, size=2, replace=False)
            step.append(((names[a], names[b]), float(np.floor(prob * 1e6) / 1e6)))
        steps.append(step)
    paired, allocation = two_way_instance(steps)
    # Agents that never appear still count toward the subset table.
    missing = [Agent(j) for j in names if j not in paired.agent_ids]
    instance = Instance(paired.problem_class, paired.agents + missing, paired.types, paired.arrivals)
    return instance, FractionalAllocation.from_x(instance, dict(allocation.x))
