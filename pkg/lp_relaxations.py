"""
LP relaxations that upper-bound the expected hindsight optimum.

- Stochastic Matching LP: per-(t, i) mass constraints plus, for every agent
  j and subset S of (t, i) pairs, sum_S x_ij^t <= 1 - prod_t (1 - sum_{i in S_t} f_i^t).
- Fluid AdWords LP: mass constraints plus sum b_ij x_ij^t <= B_j.
- Stochastic AdWords LP: the fluid LP plus sum_S b_ij x_ij^t <= vbar_j(S).

The exponential families are handled by cutting planes: solve with the
constraints found so far, separate by exhaustive enumeration over each
agent's positive support, add the violated subsets and re-solve.

Usage:
    from lp_relaxations import solve_matching_lp, check_feasibility

    allocation, report = solve_matching_lp(instance, tol=1e-9)
    audit = check_feasibility(instance, allocation, tol=1e-9)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from config_manager import AppConfig
from instance_model import Instance, ProblemClass
from rng_streams import make_generator
from validators import InputValidator, ValidationError

Key = Tuple[int, str, str]
Slot = Tuple[int, str]

SUBSET_CHUNK = 1 << 16


class LPSolveError(Exception):
    """Raised when the LP solver fails or cutting planes do not converge."""
    pass


class SeparationCapError(Exception):
    """Raised when a support is too large for exhaustive separation."""
    pass


class VbarMode(Enum):
    """How vbar_j(S) = E[min(sum of realized bids in S, B_j)] is evaluated."""
    EXACT = "exact"
    LARGE_BIDS_EXACT = "large_bids_exact"
    MONTE_CARLO = "monte_carlo"


# =============================================================================
# Fractional allocations
# =============================================================================

@dataclass
class FractionalAllocation:
    """
    x_ij^t indexed by (t, i, j), with the arrival probabilities f_i^t.

    mu_ij^t = x_ij^t / f_i^t is the conditional allocation given type i at t.
    """
    x: Dict[Key, float]
    f: Dict[Slot, float]
    layout: List[str]

    @classmethod
    def zeros(cls, instance: Instance) -> 'FractionalAllocation':
        f = {(t, i): p for t, i, p in instance.arrivals.support()}
        return cls(x={}, f=f, layout=instance.agent_ids)

    @classmethod
    def from_x(cls, instance: Instance, x: Mapping[Key, float]) -> 'FractionalAllocation':
        allocation = cls.zeros(instance)
        allocation.x = {k: float(v) for k, v in x.items() if v != 0}
        return allocation

    @classmethod
    def from_mu(cls, instance: Instance,
                mu: Mapping[Slot, Mapping[str, float]]) -> 'FractionalAllocation':
        allocation = cls.zeros(instance)
        for (t, i), shares in mu.items():
            prob = allocation.f.get((t, i), 0.0)
            for j, share in shares.items():
                if share > 0 and prob > 0:
                    allocation.x[(t, i, j)] = prob * share
        return allocation

    def entries(self) -> Iterator[Tuple[Key, float]]:
        return iter(self.x.items())

    def x_of(self, t: int, type_id: str, agent: str) -> float:
        return self.x.get((t, type_id, agent), 0.0)

    def mu(self, t: int, type_id: str) -> Dict[str, float]:
        """Conditional allocation in agent layout order, scaled down if it exceeds 1."""
        prob = self.f.get((t, type_id), 0.0)
        if prob <= 0:
            return {}
        shares = {}
        for j in self.layout:
            value = self.x.get((t, type_id, j), 0.0)
            if value > 0:
                shares[j] = min(value / prob, 1.0)
        total = sum(shares.values())
        if total > 1.0:
            shares = {j: s / total for j, s in shares.items()}
        return shares

    def objective(self, instance: Instance) -> float:
        if instance.problem_class is ProblemClass.ADWORDS:
            return sum(x * instance.payload(i, j) for (t, i, j), x in self.x.items())
        return sum(x * instance.value(i, j) for (t, i, j), x in self.x.items())

    def to_rows(self) -> List[dict]:
        """JSON rows {t, type, agent, x} with 1-based t."""
        return [{'t': t + 1, 'type': i, 'agent': j, 'x': x}
                for (t, i, j), x in sorted(self.x.items()) if x > 0]

    @classmethod
    def from_rows(cls, instance: Instance, rows: Sequence[Mapping]) -> 'FractionalAllocation':
        x = {(int(r['t']) - 1, str(r['type']), str(r['agent'])): float(r['x']) for r in rows}
        return cls.from_x(instance, x)


@dataclass
class LpSolveReport:
    """
    Outcome of a solve or a feasibility audit.

    Attributes:
        objective: Objective value of x.
        iterations: Cutting-plane rounds (0 for audits).
        max_violation: Worst violation over every audited constraint.
        active_constraints: Tight subset constraints as (agent, [(t, i), ...]).
        status: 'optimal', 'feasible', 'infeasible' or 'inconclusive'.
        notes: Free-form diagnostics (skipped families, noisy cuts).
    """
    objective: float = 0.0
    iterations: int = 0
    max_violation: float = 0.0
    active_constraints: List[Tuple[str, List[Slot]]] = field(default_factory=list)
    status: str = "optimal"
    notes: List[str] = field(default_factory=list)
    model: Optional['LpModel'] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            'objective': self.objective,
            'iterations': self.iterations,
            'max_violation': self.max_violation,
            'active_constraints': [
                {'agent': j, 'subset': [{'t': t + 1, 'type': i} for t, i in subset]}
                for j, subset in self.active_constraints
            ],
            'status': self.status,
            'notes': list(self.notes),
        }


# =============================================================================
# LP model
# =============================================================================

class LpModel:
    """Variables, objective and materialized <= rows of one relaxation."""

    def __init__(self, variables: List[Key], objective: np.ndarray):
        self.variables = variables
        self.index = {key: k for k, key in enumerate(variables)}
        self.c = objective
        self.rows: List[np.ndarray] = []
        self.rhs: List[float] = []
        self.labels: List[Tuple[str, object]] = []

    def add_row(self, coefficients: Dict[Key, float], rhs: float, label: Tuple[str, object]):
        row = np.zeros(len(self.variables))
        for key, coefficient in coefficients.items():
            row[self.index[key]] = coefficient
        self.rows.append(row)
        self.rhs.append(rhs)
        self.labels.append(label)

    def solve(self) -> np.ndarray:
        if not self.variables:
            return np.zeros(0)
        result = linprog(
            -self.c,
            A_ub=np.vstack(self.rows) if self.rows else None,
            b_ub=np.asarray(self.rhs) if self.rows else None,
            bounds=[(0, None)] * len(self.variables),
            method="highs",
            options={'primal_feasibility_tolerance': 1e-10, 'dual_feasibility_tolerance': 1e-10},
        )
        if result.status != 0:
            raise LPSolveError(f"LP solver failed: {result.message}")
        return np.maximum(result.x, 0.0)

    def slack(self, values: np.ndarray) -> np.ndarray:
        if not self.rows:
            return np.zeros(0)
        return np.asarray(self.rhs) - np.vstack(self.rows) @ values


def _matching_variables(instance: Instance) -> List[Key]:
    return [(t, i, j) for t, i, _ in instance.arrivals.support() for j in instance.neighbors(i)]


def _add_mass_rows(model: LpModel, instance: Instance):
    by_slot: Dict[Slot, Dict[Key, float]] = {}
    for key in model.variables:
        by_slot.setdefault(key[:2], {})[key] = 1.0
    for (t, i), coefficients in by_slot.items():
        model.add_row(coefficients, instance.arrivals.probability(t, i), ("mass", (t, i)))


def _to_allocation(instance: Instance, model: LpModel, values: np.ndarray) -> FractionalAllocation:
    x = {key: float(v) for key, v in zip(model.variables, values) if v > 0}
    return FractionalAllocation.from_x(instance, x)


# =============================================================================
# Stochastic Matching LP
# =============================================================================

def matching_rhs(instance: Instance, subset: Sequence[Slot]) -> float:
    """F(S) = 1 - prod_t (1 - sum_{i: (t, i) in S} f_i^t); submodular in S."""
    per_step: Dict[int, float] = {}
    for t, i in set(subset):
        per_step[t] = per_step.get(t, 0.0) + instance.arrivals.probability(t, i)
    product = 1.0
    for mass in per_step.values():
        product *= max(1.0 - mass, 0.0)
    return 1.0 - product


def _subset_bits(count: int, start: int, stop: int) -> np.ndarray:
    masks = np.arange(start, stop, dtype=np.int64)
    return ((masks[:, None] >> np.arange(count, dtype=np.int64)) & 1).astype(bool)


def matching_separation(instance: Instance, allocation: FractionalAllocation, agent: str,
                        tol: float = 1e-9, cap: int = 22) -> Optional[Tuple[List[Slot], float]]:
    """
    Most violated subset constraint of one agent.

    Enumerates every subset of the agent's positive support (at most
    `cap` slots) and returns (S, violation) when max x(S) - F(S) > tol.

    Raises:
        SeparationCapError: support larger than `cap`.
    """
    support = [(t, i) for (t, i, j), x in allocation.entries() if j == agent and x > tol]
    support.sort()
    count = len(support)
    if count == 0:
        return None
    if count > cap:
        raise SeparationCapError(f"Agent {agent} has {count} support slots, cap is {cap}")

    xs = np.array([allocation.x_of(t, i, agent) for t, i in support])
    steps = sorted({t for t, _ in support})
    column = {t: k for k, t in enumerate(steps)}
    step_mass = np.zeros((count, len(steps)))
    for k, (t, i) in enumerate(support):
        step_mass[k, column[t]] = instance.arrivals.probability(t, i)

    best_violation = -np.inf
    best_mask = 0
    total = 1 << count
    for start in range(1, total, SUBSET_CHUNK):
        stop = min(start + SUBSET_CHUNK, total)
        bits = _subset_bits(count, start, stop)
        lhs = bits @ xs
        rhs = 1.0 - np.prod(np.clip(1.0 - bits @ step_mass, 0.0, None), axis=1)
        violation = lhs - rhs
        k = int(np.argmax(violation))
        if violation[k] > best_violation:
            best_violation = float(violation[k])
            best_mask = start + k

    if best_violation <= tol:
        return None
    subset = [support[k] for k in range(count) if best_mask >> k & 1]
    return subset, best_violation


def _require(instance: Instance, allowed: Tuple[ProblemClass, ...], what: str):
    if instance.problem_class not in allowed:
        raise ValidationError(f"{what} needs a {'/'.join(c.value for c in allowed)} instance",
                              field="class", value=instance.problem_class.value)


def solve_matching_lp(instance: Instance, tol: Optional[float] = None,
                      config: Optional[AppConfig] = None) -> Tuple[FractionalAllocation, LpSolveReport]:
    """
    Solve the Stochastic Matching LP by cutting planes.

    The objective is sum value(i, j) x_ij^t, where value is 1, w_j or w_ij
    for unweighted, vertex-weighted and Display Ads instances.

    Raises:
        LPSolveError: solver failure or no convergence within the round cap.
        SeparationCapError: an agent's support exceeds the enumeration cap.
    """
    _require(instance, (ProblemClass.UNWEIGHTED, ProblemClass.VERTEX_WEIGHTED, ProblemClass.DISPLAY_ADS),
             "Stochastic Matching LP")
    config = config or AppConfig()
    tol = InputValidator.validate_tolerance(config.solver.tolerance if tol is None else tol)

    variables = _matching_variables(instance)
    model = LpModel(variables, np.array([instance.value(i, j) for _, i, j in variables]))
    _add_mass_rows(model, instance)
    for j in instance.agent_ids:
        slots = [(t, i) for t, i, a in variables if a == j]
        if slots:
            model.add_row({(t, i, j): 1.0 for t, i in slots}, matching_rhs(instance, slots), ("subset", (j, slots)))

    round_cap = config.solver.round_factor * max(len(variables), 1)
    rounds = 0
    while True:
        rounds += 1
        values = model.solve()
        allocation = _to_allocation(instance, model, values)
        added = 0
        for j in instance.agent_ids:
            cut = matching_separation(instance, allocation, j, tol, config.solver.separation_cap)
            if cut is None:
                continue
            subset, violation = cut
            model.add_row({(t, i, j): 1.0 for t, i in subset}, matching_rhs(instance, subset),
                          ("subset", (j, subset)))
            logging.debug(f"Round {rounds}: cut for agent {j} on {len(subset)} slots, violation {violation:.3e}")
            added += 1
        if added == 0:
            break
        if rounds >= round_cap:
            raise LPSolveError(f"Cutting planes did not converge within {round_cap} rounds")

    report = check_feasibility(instance, allocation, tol, config)
    report.iterations = rounds
    report.status = "optimal"
    report.active_constraints = _active(model, values, tol)
    report.model = model
    logging.info(f"Stochastic Matching LP: objective {report.objective:.9f} after {rounds} rounds")
    return allocation, report


def _active(model: LpModel, values: np.ndarray, tol: float) -> List[Tuple[str, List[Slot]]]:
    slack = model.slack(values)
    active = []
    for (kind, payload), s in zip(model.labels, slack):
        if kind == "subset" and s <= tol * 10:
            agent, subset = payload
            active.append((agent, list(subset)))
    return active


# =============================================================================
# AdWords LPs
# =============================================================================

def _adwords_variables(instance: Instance) -> List[Key]:
    return [(t, i, j) for t, i, _ in instance.arrivals.support()
            for j in instance.agent_ids if instance.payload(i, j) > 0]


def _adwords_model(instance: Instance) -> LpModel:
    variables = _adwords_variables(instance)
    model = LpModel(variables, np.array([instance.payload(i, j) for _, i, j in variables]))
    _add_mass_rows(model, instance)
    for j in instance.agent_ids:
        coefficients = {(t, i, a): instance.payload(i, a) for t, i, a in variables if a == j}
        if coefficients:
            model.add_row(coefficients, instance.budget(j), ("budget", j))
    return model


def solve_adwords_fluid_lp(instance: Instance, tol: Optional[float] = None,
                           config: Optional[AppConfig] = None) -> Tuple[FractionalAllocation, LpSolveReport]:
    """Fluid AdWords LP: mass constraints and sum b x <= B, solved directly."""
    _require(instance, (ProblemClass.ADWORDS,), "Fluid AdWords LP")
    config = config or AppConfig()
    tol = InputValidator.validate_tolerance(config.solver.tolerance if tol is None else tol)
    model = _adwords_model(instance)
    values = model.solve()
    allocation = _to_allocation(instance, model, values)
    report = LpSolveReport(objective=allocation.objective(instance), iterations=1, model=model)
    slack = model.slack(values)
    report.max_violation = float(max(0.0, -slack.min())) if slack.size else 0.0
    logging.info(f"Fluid AdWords LP: objective {report.objective:.9f}")
    return allocation, report


@dataclass
class VbarEstimate:
    """vbar_j(S) with its standard error (0 for exact modes)."""
    value: float
    stderr: float = 0.0

    def __float__(self) -> float:
        return self.value


def _slots_by_step(subset: Sequence[Slot]) -> Dict[int, List[str]]:
    grouped: Dict[int, List[str]] = {}
    for t, i in sorted(set(subset)):
        grouped.setdefault(t, []).append(i)
    return grouped


def _vbar_exact(instance: Instance, agent: str, subset: Sequence[Slot], cap: int) -> float:
    if len(set(subset)) > cap:
        raise SeparationCapError(f"Exact vbar limited to {cap} slots, got {len(set(subset))}")
    budget = instance.budget(agent)
    spend: Dict[float, float] = {0.0: 1.0}
    for t, type_ids in _slots_by_step(subset).items():
        outcomes = [(instance.arrivals.probability(t, i), instance.payload(i, agent)) for i in type_ids]
        stay = max(1.0 - sum(p for p, _ in outcomes), 0.0)
        updated: Dict[float, float] = {}
        for total, prob in spend.items():
            if stay > 0:
                updated[total] = updated.get(total, 0.0) + prob * stay
            for p, bid in outcomes:
                capped = min(total + bid, budget)
                updated[capped] = updated.get(capped, 0.0) + prob * p
        spend = updated
    return sum(total * prob for total, prob in spend.items())


def is_large_for_vbar(bid: float, budget: float) -> bool:
    """Two bids this large saturate the budget."""
    return bid >= budget / 2


def _vbar_large_bids(instance: Instance, agent: str, subset: Sequence[Slot]) -> float:
    budget = instance.budget(agent)
    grouped = _slots_by_step(subset)
    for type_ids in grouped.values():
        for i in type_ids:
            if not is_large_for_vbar(instance.payload(i, agent), budget):
                raise ValidationError(f"Bid of type {i} is below half of the budget of {agent}",
                                      field="subset", value=i)
    steps = list(grouped)
    mass = [sum(instance.arrivals.probability(t, i) for i in grouped[t]) for t in steps]
    stay = [max(1.0 - m, 0.0) for m in mass]
    none = float(np.prod(stay)) if stay else 1.0
    single_value = 0.0
    single_prob = 0.0
    for k, t in enumerate(steps):
        others = float(np.prod(stay[:k] + stay[k + 1:])) if len(stay) > 1 else 1.0
        for i in grouped[t]:
            p = instance.arrivals.probability(t, i) * others
            single_prob += p
            single_value += p * min(instance.payload(i, agent), budget)
    return single_value + budget * max(1.0 - none - single_prob, 0.0)


def _vbar_monte_carlo(instance: Instance, agent: str, subset: Sequence[Slot],
                      samples: int, seed: int) -> VbarEstimate:
    budget = instance.budget(agent)
    rng = make_generator(seed, 0, "probe")
    totals = np.zeros(samples)
    for t, type_ids in _slots_by_step(subset).items():
        probs = np.cumsum([instance.arrivals.probability(t, i) for i in type_ids])
        bids = np.array([instance.payload(i, agent) for i in type_ids] + [0.0])
        draws = rng.random(samples)
        totals += bids[np.searchsorted(probs, draws, side='right')]
    values = np.minimum(totals, budget)
    return VbarEstimate(float(values.mean()), float(values.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0)


def evaluate_vbar(instance: Instance, agent: str, subset: Sequence[Slot],
                  mode: VbarMode = VbarMode.EXACT, samples: int = 20000, seed: int = 0,
                  exact_cap: int = 20) -> VbarEstimate:
    """
    vbar_j(S) = E[min(sum of realized bids of agent j in S, B_j)].

    At most one type realizes per step. LARGE_BIDS_EXACT needs every bid in S
    to be at least B_j / 2, so two or more arrivals saturate the budget.

    Example:
        >>> evaluate_vbar(instance, "j1", [(0, "i1"), (1, "i1")]).value   # f=0.5, b=0.9, B=1
        0.7
    """
    instance.agent(agent)
    if mode is VbarMode.EXACT:
        return VbarEstimate(_vbar_exact(instance, agent, subset, exact_cap))
    if mode is VbarMode.LARGE_BIDS_EXACT:
        return VbarEstimate(_vbar_large_bids(instance, agent, subset))
    return _vbar_monte_carlo(instance, agent, subset, InputValidator.validate_trials(samples), seed)


def _large_bid_vbar_batch(bits: np.ndarray, probs: np.ndarray, capped: np.ndarray,
                          step_of: np.ndarray, steps: int, budget: float) -> np.ndarray:
    """Large-bid vbar of every subset row in `bits`, by the none/single/saturated split."""
    onehot = np.zeros((len(probs), steps))
    onehot[np.arange(len(probs)), step_of] = 1.0
    mass = bits @ (probs[:, None] * onehot)
    value = bits @ ((probs * capped)[:, None] * onehot)
    stay = np.clip(1.0 - mass, 0.0, None)
    ones = np.ones((len(bits), 1))
    before = np.cumprod(np.hstack([ones, stay[:, :-1]]), axis=1)
    after = np.cumprod(np.hstack([ones, stay[:, :0:-1]]), axis=1)[:, ::-1]
    others = before * after
    none = np.prod(stay, axis=1)
    single_prob = np.sum(others * mass, axis=1)
    single_value = np.sum(others * value, axis=1)
    return single_value + budget * np.clip(1.0 - none - single_prob, 0.0, None)


def _large_bid_separation(instance: Instance, agent: str, support: List[Slot],
                          weights: np.ndarray, tol: float) -> Optional[Tuple[List[Slot], float]]:
    budget = instance.budget(agent)
    steps = sorted({t for t, _ in support})
    column = {t: k for k, t in enumerate(steps)}
    step_of = np.array([column[t] for t, _ in support])
    probs = np.array([instance.arrivals.probability(t, i) for t, i in support])
    capped = np.array([min(instance.payload(i, agent), budget) for _, i in support])

    count = len(support)
    best_violation = -np.inf
    best_mask = 0
    total = 1 << count
    for start in range(1, total, SUBSET_CHUNK):
        stop = min(start + SUBSET_CHUNK, total)
        bits = _subset_bits(count, start, stop).astype(float)
        violation = bits @ weights - _large_bid_vbar_batch(bits, probs, capped, step_of, len(steps), budget)
        k = int(np.argmax(violation))
        if violation[k] > best_violation:
            best_violation = float(violation[k])
            best_mask = start + k

    if best_violation <= tol:
        return None
    return [support[k] for k in range(count) if best_mask >> k & 1], best_violation


def _vbar_separation(instance: Instance, allocation: FractionalAllocation, agent: str,
                     mode: VbarMode, tol: float, config: AppConfig,
                     cache: Dict[Tuple[str, Tuple[Slot, ...]], VbarEstimate]
                     ) -> Tuple[Optional[Tuple[List[Slot], float]], List[Tuple[List[Slot], float]]]:
    """
    Most violated vbar cut of one agent, plus noisy (inconclusive) candidates.

    Large-bid cuts are evaluated in closed form over whole blocks of subsets.
    Exact and Monte Carlo cuts evaluate subset by subset, so their support
    is held to `vbar_enum_cap`.
    """
    budget = instance.budget(agent)
    support = sorted((t, i) for (t, i, j), x in allocation.entries() if j == agent and x > tol)
    if mode is VbarMode.LARGE_BIDS_EXACT:
        support = [(t, i) for t, i in support if is_large_for_vbar(instance.payload(i, agent), budget)]
    count = len(support)
    if count == 0:
        return None, []
    cap = config.solver.separation_cap
    if mode is not VbarMode.LARGE_BIDS_EXACT:
        cap = min(cap, config.solver.vbar_enum_cap)
    if count > cap:
        raise SeparationCapError(f"Agent {agent} has {count} support slots, cap is {cap} for {mode.value} vbar")

    weights = np.array([instance.payload(i, agent) * allocation.x_of(t, i, agent) for t, i in support])
    if mode is VbarMode.LARGE_BIDS_EXACT:
        return _large_bid_separation(instance, agent, support, weights, tol), []

    best: Optional[Tuple[List[Slot], float]] = None
    noisy: List[Tuple[List[Slot], float]] = []
    bits = _subset_bits(count, 1, 1 << count)
    lhs = bits @ weights
    for row in np.flatnonzero(lhs > tol):
        subset = tuple(s for s, chosen in zip(support, bits[row]) if chosen)
        key = (agent, subset)
        if key not in cache:
            cache[key] = evaluate_vbar(instance, agent, subset, mode, config.solver.vbar_samples,
                                       exact_cap=config.solver.vbar_exact_cap)
        estimate = cache[key]
        violation = float(lhs[row]) - estimate.value
        if violation <= tol:
            continue
        if mode is VbarMode.MONTE_CARLO and violation <= 3 * estimate.stderr + tol:
            noisy.append((list(subset), violation))
            continue
        if best is None or violation > best[1]:
            best = (list(subset), violation)
    return best, noisy


def solve_adwords_lp(instance: Instance, tol: Optional[float] = None,
                     vbar_mode: Optional[VbarMode] = None,
                     config: Optional[AppConfig] = None) -> Tuple[FractionalAllocation, LpSolveReport]:
    """
    Stochastic AdWords LP: the fluid LP strengthened with vbar cuts.

    With LARGE_BIDS_EXACT only subsets of large-bid slots receive vbar cuts;
    the fluid budget row always stays, so the LP remains an upper bound.

    Raises:
        LPSolveError: solver failure or no convergence within the round cap.
        SeparationCapError: an agent's support exceeds the enumeration cap.
    """
    _require(instance, (ProblemClass.ADWORDS,), "Stochastic AdWords LP")
    config = config or AppConfig()
    tol = InputValidator.validate_tolerance(config.solver.tolerance if tol is None else tol)
    if vbar_mode is None:
        vbar_mode = VbarMode(config.solver.vbar_mode)

    model = _adwords_model(instance)
    cache: Dict[Tuple[str, Tuple[Slot, ...]], VbarEstimate] = {}
    round_cap = config.solver.round_factor * max(len(model.variables), 1)
    rounds = 0
    noisy: List[Tuple[str, List[Slot], float]] = []
    while True:
        rounds += 1
        values = model.solve()
        allocation = _to_allocation(instance, model, values)
        added = 0
        noisy = []
        for j in instance.agent_ids:
            cut, flagged = _vbar_separation(instance, allocation, j, vbar_mode, tol, config, cache)
            noisy.extend((j, s, v) for s, v in flagged)
            if cut is None:
                continue
            subset, violation = cut
            model.add_row({(t, i, j): instance.payload(i, j) for t, i in subset},
                          cache[(j, tuple(subset))].value, ("subset", (j, subset)))
            logging.debug(f"Round {rounds}: vbar cut for agent {j} on {len(subset)} slots, violation {violation:.3e}")
            added += 1
        if added == 0:
            break
        if rounds >= round_cap:
            raise LPSolveError(f"Cutting planes did not converge within {round_cap} rounds")

    report = LpSolveReport(objective=allocation.objective(instance), iterations=rounds, model=model)
    slack = model.slack(values)
    report.max_violation = float(max(0.0, -slack.min())) if slack.size else 0.0
    report.active_constraints = _active(model, values, tol)
    if noisy:
        report.status = "inconclusive"
        for j, subset, violation in noisy:
            report.notes.append(f"agent {j}: violation {violation:.3e} on {len(subset)} slots within sampling noise")
    logging.info(f"Stochastic AdWords LP ({vbar_mode.value}): objective {report.objective:.9f} after {rounds} rounds")
    return allocation, report


# =============================================================================
# Audits
# =============================================================================

def check_feasibility(instance: Instance, allocation: FractionalAllocation, tol: float = 1e-9,
                      config: Optional[AppConfig] = None) -> LpSolveReport:
    """
    Re-audit every constraint family; never raises.

    Matching classes are audited against the polymatroid family; AdWords
    against the fluid budget rows and the exact vbar family on each agent's
    support (skipped with a note beyond the enumeration caps).
    """
    config = config or AppConfig()
    report = LpSolveReport(objective=allocation.objective(instance), status="feasible")
    worst = 0.0

    for key, x in allocation.entries():
        worst = max(worst, -x)
    per_slot: Dict[Slot, float] = {}
    for (t, i, j), x in allocation.entries():
        per_slot[(t, i)] = per_slot.get((t, i), 0.0) + x
    for (t, i), total in per_slot.items():
        worst = max(worst, total - instance.arrivals.probability(t, i))

    for j in instance.agent_ids:
        try:
            if instance.problem_class is ProblemClass.ADWORDS:
                spent = sum(x * instance.payload(i, j) for (t, i, a), x in allocation.entries() if a == j)
                worst = max(worst, spent - instance.budget(j))
                cut, _ = _vbar_separation(instance, allocation, j, VbarMode.EXACT, tol, config, {})
            else:
                cut = matching_separation(instance, allocation, j, tol, config.solver.separation_cap)
        except SeparationCapError as e:
            report.notes.append(f"agent {j}: subset family not audited ({e})")
            continue
        if cut is not None:
            subset, violation = cut
            worst = max(worst, violation)
            report.active_constraints.append((j, subset))

    report.max_violation = worst
    if worst > tol:
        report.status = "infeasible"
        logging.warning(f"Feasibility audit: worst violation {worst:.3e} exceeds {tol:.1e}")
    return report


@dataclass
class PerturbationAudit:
    """Largest objective gain seen along feasible perturbations of x."""
    directions: int
    feasible_moves: int
    max_gain: float

    @property
    def passed(self) -> bool:
        return self.max_gain <= 0.0


def perturbation_audit(instance: Instance, allocation: FractionalAllocation, report: LpSolveReport,
                       directions: int = 100, seed: int = 0, tol: float = 1e-9,
                       config: Optional[AppConfig] = None) -> PerturbationAudit:
    """
    Move x along random directions as far as the materialized rows allow,
    keep the moves that pass the full feasibility audit, and record the
    largest objective gain (minus tol). A solved LP never gains.
    """
    model = report.model
    if model is None or not model.variables:
        return PerturbationAudit(0, 0, 0.0)
    rng = make_generator(seed, 0, "misc")
    x0 = np.array([allocation.x_of(*key) for key in model.variables])
    rows = np.vstack(model.rows)
    slack = np.asarray(model.rhs) - rows @ x0
    n = len(model.variables)
    feasible = 0
    max_gain = -np.inf
    for k in range(directions):
        if k % 2 == 0:
            d = rng.standard_normal(n)
        else:
            d = np.zeros(n)
            a, b = rng.choice(n, size=2, replace=n < 2)
            d[a] += 1.0
            d[b] -= 1.0
        growth = rows @ d
        limits = [np.inf]
        positive = growth > 1e-15
        if positive.any():
            limits.append(float(np.min(np.maximum(slack[positive], 0.0) / growth[positive])))
        negative = d < -1e-15
        if negative.any():
            limits.append(float(np.min(x0[negative] / -d[negative])))
        step = min(limits)
        if not np.isfinite(step) or step <= 0:
            continue
        moved = np.maximum(x0 + step * d, 0.0)
        candidate = FractionalAllocation.from_x(instance, dict(zip(model.variables, moved)))
        if check_feasibility(instance, candidate, tol, config).max_violation > tol:
            continue
        feasible += 1
        max_gain = max(max_gain, float(model.c @ moved - model.c @ x0) - tol)
    return PerturbationAudit(directions, feasible, max_gain if feasible else 0.0)
