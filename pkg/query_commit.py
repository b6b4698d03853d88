"""
Query-commit matching by simulating the random-order matching SOCS.

Edges (i, j) exist independently with probability p_ij. Online vertices are
visited in uniformly random order. For the current vertex the exact
probabilities x_ij that the SOCS would match it to each j are computed;
x lies in the polytope sum_{j in S} x_ij <= 1 - prod_{j in S} (1 - p_ij),
whose vertices are probe orders. A mixture of orders reproducing x is
found, one order is sampled, and edges are probed along it until the first
present one, which is committed.

Usage:
    from instance_model import load_instance
    from query_commit import QueryCommitRunner

    runner = QueryCommitRunner(load_instance("qc.json"))
    matching = runner.run(seed=5).matching
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from instance_model import Agent, ArrivalDistribution, Instance, OnlineType, ProblemClass, QueryCommitInstance
from lp_relaxations import FractionalAllocation, solve_matching_lp
from rng_streams import TrialStreams, as_streams, make_generator
from socs_matching import Matching, MatchingRunner, MatchState, shuffled_order, two_way_probabilities
from type_decomposition import DUMMY_AGENT
from validators import ValidationError

NEIGHBOR_CAP = 6
POLYTOPE_TOL = 1e-12
DECOMPOSITION_TOL = 1e-9

Seed = Union[int, TrialStreams, None]


class DecompositionError(Exception):
    """Raised when x is outside the probe polytope or the neighbor cap is exceeded."""
    pass


# =============================================================================
# Probe polytope
# =============================================================================

def probe_vertex(order: Sequence[str], p: Mapping[str, float]) -> Dict[str, float]:
    """x of a probe order: x_{j_1} = p_{j_1}, x_{j_2} = (1 - p_{j_1}) p_{j_2}, ..."""
    x = {}
    survive = 1.0
    for j in order:
        x[j] = survive * p[j]
        survive *= 1.0 - p[j]
    return x


def polytope_violation(x: Mapping[str, float], p: Mapping[str, float]) -> float:
    """max over subsets S of sum_S x - (1 - prod_S (1 - p)), and of -x."""
    agents = [j for j in p]
    unknown = set(x) - set(agents)
    if unknown:
        raise ValidationError(f"x has entries off the neighborhood: {sorted(unknown)}", field="x")
    worst = max([-x.get(j, 0.0) for j in agents] + [0.0])
    for size in range(1, len(agents) + 1):
        for subset in itertools.combinations(agents, size):
            covered = 1.0 - float(np.prod([1.0 - p[j] for j in subset]))
            worst = max(worst, sum(x.get(j, 0.0) for j in subset) - covered)
    return worst


def polytope_contains(x: Mapping[str, float], p: Mapping[str, float], tol: float = POLYTOPE_TOL) -> bool:
    """
    Membership in the probe polytope, checked on every subset.

    Example:
        >>> polytope_contains({"a": 0.5, "b": 0.25}, {"a": 0.5, "b": 0.5})
        True
    """
    return polytope_violation(x, p) <= tol


@dataclass
class ProbePlan:
    """Convex combination of probe orders."""
    orders: List[Tuple[str, ...]]
    weights: List[float]

    def sample(self, u: float) -> Tuple[str, ...]:
        cumulative = np.cumsum(self.weights)
        index = int(np.searchsorted(cumulative, u * cumulative[-1], side='right'))
        return self.orders[min(index, len(self.orders) - 1)]

    def marginals(self, p: Mapping[str, float]) -> Dict[str, float]:
        x = {j: 0.0 for j in p}
        for order, weight in zip(self.orders, self.weights):
            for j, value in probe_vertex(order, p).items():
                x[j] += weight * value
        return x

    def to_dict(self) -> dict:
        return {'orders': [list(o) for o in self.orders], 'weights': list(self.weights)}


def vertex_decomposition(x: Mapping[str, float], p: Mapping[str, float],
                         cap: int = NEIGHBOR_CAP) -> ProbePlan:
    """
    Mixture of probe orders whose marginals equal x.

    Orders range over all sequences of distinct agents in the support of x;
    mixture weights solve a feasibility LP and are then polished by least
    squares on the LP's support.

    Raises:
        DecompositionError: x outside the polytope, support above `cap`, or no exact mixture.

    Example:
        p = (1/2, 1/2), x = (3/8, 3/8) -> 1/2 on (a, b) + 1/2 on (b, a)
    """
    violation = polytope_violation(x, p)
    if violation > POLYTOPE_TOL:
        raise DecompositionError(f"x is outside the probe polytope (violation {violation:.3e})")
    support = [j for j in p if x.get(j, 0.0) > POLYTOPE_TOL]
    if len(support) > cap:
        raise DecompositionError(f"{len(support)} neighbors exceed the decomposition cap of {cap}")
    if not support:
        return ProbePlan(orders=[()], weights=[1.0])

    orders: List[Tuple[str, ...]] = []
    for size in range(len(support) + 1):
        orders.extend(itertools.permutations(support, size))
    vertices = np.array([[probe_vertex(o, p).get(j, 0.0) for o in orders] for j in support])
    target = np.array([x[j] for j in support])
    a_eq = np.vstack([vertices, np.ones(len(orders))])
    b_eq = np.append(target, 1.0)
    result = linprog(np.zeros(len(orders)), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                     options={'primal_feasibility_tolerance': 1e-10})
    if result.status != 0:
        raise DecompositionError(f"No mixture of probe orders reproduces x: {result.message}")
    weights = np.maximum(result.x, 0.0)

    active = weights > 1e-12
    polished, *_ = np.linalg.lstsq(a_eq[:, active], b_eq, rcond=None)
    if np.all(polished >= 0):
        weights = np.zeros(len(orders))
        weights[active] = polished
    residual = float(np.max(np.abs(a_eq @ weights - b_eq)))
    if residual > DECOMPOSITION_TOL:
        raise DecompositionError(f"Probe mixture misses x by {residual:.3e}")

    kept = [(o, float(w)) for o, w in zip(orders, weights) if w > 1e-15]
    logging.debug(f"Probe plan over {len(support)} neighbors: {len(kept)} orders, residual {residual:.2e}")
    return ProbePlan(orders=[o for o, _ in kept], weights=[w for _, w in kept])


# =============================================================================
# Induced random-order instance
# =============================================================================

def neighborhood_type(online_id: str, subset: Sequence[str]) -> str:
    return f"{online_id}|{'+'.join(subset)}"


def induced_instance(qc: QueryCommitInstance, cap: int = NEIGHBOR_CAP) -> Instance:
    """
    Random-order instance of a query-commit instance.

    Online vertex i becomes step t = index of i; its type is the realized
    neighborhood N, arriving with probability prod_{j in N} p_ij prod_{j not in N} (1 - p_ij).
    The empty neighborhood is no arrival.
    """
    problem_class = ProblemClass.UNWEIGHTED if qc.weights is None else ProblemClass.VERTEX_WEIGHTED
    agents = [Agent(j, weight=qc.weight(j)) for j in qc.offline]
    types: Dict[str, OnlineType] = {}
    steps = []
    for i in qc.online:
        neighbors = qc.neighbors(i)
        if len(neighbors) > cap:
            raise DecompositionError(f"Online vertex {i} has {len(neighbors)} neighbors, above the cap of {cap}")
        step = []
        for size in range(1, len(neighbors) + 1):
            for subset in itertools.combinations(neighbors, size):
                prob = 1.0
                for j in neighbors:
                    prob *= qc.prob(i, j) if j in subset else 1.0 - qc.prob(i, j)
                if prob <= 0:
                    continue
                type_id = neighborhood_type(i, subset)
                types[type_id] = OnlineType(type_id, {j: 1.0 for j in subset})
                step.append((type_id, prob))
        steps.append(step)
    return Instance(problem_class, agents, types, ArrivalDistribution(steps))


def next_vertex_probabilities(runner: MatchingRunner, state: MatchState, t: int) -> Dict[str, float]:
    """
    Exact Pr[the SOCS matches step t's vertex to j] given the current state.

    Sums over realized neighborhoods and their surrogates: a one-way j
    counts if j is open, a two-way pair splits by the e^{2y} rule.
    """
    x: Dict[str, float] = {}
    for type_id, prob in runner.instance.arrivals.steps[t]:
        if prob <= 0:
            continue
        for surrogate, q in runner.sampler.distribution(t, type_id):
            mass = prob * q
            if surrogate.is_one_way:
                j = surrogate.first
                if j != DUMMY_AGENT and state.is_available(j):
                    x[j] = x.get(j, 0.0) + mass
                continue
            for j, share in two_way_probabilities(state, surrogate).items():
                if j != DUMMY_AGENT and share > 0:
                    x[j] = x.get(j, 0.0) + mass * share
    return x


# =============================================================================
# Runner
# =============================================================================

@dataclass(frozen=True)
class ProbeRecord:
    """Edges probed for one online vertex and the committed agent (None if none)."""
    t: int
    online_id: str
    order: Tuple[str, ...]
    probed: Tuple[Tuple[str, bool], ...]
    committed: Optional[str]


@dataclass
class QueryCommitResult:
    matching: Matching
    trace: List[ProbeRecord] = field(default_factory=list)


class QueryCommitRunner:
    """
    Induced instance, its LP allocation and memoized probe plans.

    The fractional allocation defaults to the Stochastic Matching LP optimum
    of the induced instance.
    """

    def __init__(self, qc: QueryCommitInstance, allocation: Optional[FractionalAllocation] = None,
                 cap: int = NEIGHBOR_CAP):
        self.qc = qc
        self.cap = cap
        self.instance = induced_instance(qc, cap)
        if allocation is None:
            allocation, _ = solve_matching_lp(self.instance)
        self.allocation = allocation
        self.matching_runner = MatchingRunner(self.instance, allocation)
        self._plans: Dict[Tuple[int, Tuple[Tuple[str, float], ...]], ProbePlan] = {}

    def plan(self, t: int, x: Mapping[str, float]) -> ProbePlan:
        key = (t, tuple(sorted((j, round(v, 14)) for j, v in x.items())))
        plan = self._plans.get(key)
        if plan is None:
            i = self.qc.online[t]
            p = {j: self.qc.prob(i, j) for j in self.qc.neighbors(i)}
            plan = vertex_decomposition({j: v for j, v in x.items() if v > 0}, p, self.cap)
            self._plans[key] = plan
        return plan

    def run(self, seed: Seed = None, edges: Optional[np.ndarray] = None) -> QueryCommitResult:
        """
        One trial. `edges` (|I| x |J| booleans) fixes the realized graph;
        by default it is drawn from the "arrival" stream.
        """
        streams = as_streams(seed)
        if edges is None:
            draws = streams.stream("arrival").random((len(self.qc.online), len(self.qc.offline)))
            edges = draws < np.asarray(self.qc.p)
        state = self.matching_runner.fresh_state()
        trace = []
        for t in shuffled_order(self.instance.horizon, streams):
            i = self.qc.online[t]
            x = next_vertex_probabilities(self.matching_runner, state, t)
            order = self.plan(t, x).sample(streams.uniform("probe"))
            probed = []
            committed = None
            for j in order:
                present = bool(edges[t, self.qc.offline.index(j)])
                probed.append((j, present))
                if present:
                    committed = state.commit(j, t, i)
                    break
            trace.append(ProbeRecord(t, i, order, tuple(probed), committed))
            state.advance(self.matching_runner.increments[t])
        return QueryCommitResult(state.matching(), trace)


def run_query_commit(qc: QueryCommitInstance, seed: Seed = None,
                     allocation: Optional[FractionalAllocation] = None,
                     runner: Optional[QueryCommitRunner] = None) -> Matching:
    """
    Query-commit matching of one trial.

    Example:
        single edge with p = 1 -> matched in every trial
    """
    runner = runner or QueryCommitRunner(qc, allocation)
    return runner.run(seed).matching


def random_query_commit(num_online: int, num_offline: int, density: float = 0.5, seed: int = 0,
                        max_neighbors: int = NEIGHBOR_CAP) -> QueryCommitInstance:
    """Random instance: each edge present with probability `density`, p_ij ~ U(0.1, 1) rounded to 3 decimals."""
    if num_online < 1 or num_offline < 1:
        raise ValidationError("Sizes must be at least 1", field="random_query_commit")
    rng = make_generator(seed, 0, "misc")
    online = [f"i{k + 1}" for k in range(num_online)]
    offline = [f"j{k + 1}" for k in range(num_offline)]
    p = []
    for _ in online:
        row = [round(float(rng.uniform(0.1, 1.0)), 3) if rng.random() < density else 0.0 for _ in offline]
        for k in np.flatnonzero(row)[max_neighbors:]:
            row[k] = 0.0
        p.append(row)
    return QueryCommitInstance(online, offline, p)
