"""
Correlated selection for AdWords.

Two-way steps use mark-and-oppose: pick m from the pair uniformly and mark
the step with m when the bid on m is large (b_im >= 2/3 B_m). The second
step marked with m makes the opposite selection w.r.t. m from the first
one; every other selection is uniform. Agent value is min(spend, B_j).

The stochastic runner decomposes each realized type of a fractional
allocation; the adversarial runner decomposes a given per-step
distribution mu^t; the Balance allocator produces mu^t online from the
alpha/beta curves of a convergence rate.

Usage:
    from socs_adwords import run_general_adwords, run_balance_ocs_end_to_end

    state = run_general_adwords(instance, allocation, arrivals, seed=1)
    print(state.total_value())
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError as SchemaError
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from instance_model import ArrivalSequence, Instance, ProblemClass, budgeted_optimum
from lp_relaxations import FractionalAllocation
from rates import RateCurve, RateKind, curve, tabulate_rate
from rng_streams import TrialStreams, as_streams, make_generator
from schemas import BudgetDocument, SequenceDocument, SequenceStepDocument
from type_decomposition import DUMMY_AGENT, SurrogateSampler, SurrogateTable, SurrogateType
from validators import InputValidator, ValidationError

LARGE_BID_FRACTION = 2.0 / 3.0
DISTRIBUTION_TOL = 1e-9

Seed = Union[int, TrialStreams, None]


class BalanceError(Exception):
    """Raised for invalid rate curves or unsolvable Balance steps."""
    pass


# =============================================================================
# Mark-and-oppose selection
# =============================================================================

@dataclass(frozen=True)
class MarkEvent:
    """
    One two-way decision.

    Attributes:
        t: Step (0-based).
        pair: The two candidates.
        marked_with: Agent the step is marked with, or None.
        nth_mark: How many steps have been marked with that agent so far (0 if unmarked).
        selected: Agent receiving the item.
    """
    t: int
    pair: Tuple[str, str]
    marked_with: Optional[str]
    nth_mark: int
    selected: str


class MarkOpposeSelector(ABC):
    """
    Mark-and-oppose rule.

    Subclasses decide which steps get marked.
    """

    def __init__(self):
        self.first_selection: Dict[str, bool] = {}
        self.marks: Dict[str, int] = {}
        self.trace: List[MarkEvent] = []

    @abstractmethod
    def should_mark(self, agent: str, payload: float) -> bool:
        """True when the coin-picked agent marks this step."""
        pass

    def select(self, pair: SurrogateType, payloads: Mapping[str, float],
               streams: TrialStreams, t: int = 0) -> str:
        """Pick the receiving agent of a two-way step and record the decision."""
        j, k = pair.agents
        m = j if streams.uniform("mark") < 0.5 else k
        marked = m != DUMMY_AGENT and self.should_mark(m, payloads.get(m, 0.0))
        nth = 0
        if marked:
            nth = self.marks.get(m, 0) + 1
            self.marks[m] = nth
            if nth == 2:
                picks_m = not self.first_selection[m]
            else:
                picks_m = streams.uniform("choice") < 0.5
            if nth == 1:
                self.first_selection[m] = picks_m
        else:
            picks_m = streams.uniform("choice") < 0.5
        selected = m if picks_m else pair.other(m)
        self.trace.append(MarkEvent(t, (j, k), m if marked else None, nth, selected))
        return selected


class LargeBidSelector(MarkOpposeSelector):
    """Marks with m iff b_im >= fraction * B_m."""

    def __init__(self, budgets: Mapping[str, float], fraction: float = LARGE_BID_FRACTION):
        super().__init__()
        self.budgets = budgets
        self.fraction = fraction

    def should_mark(self, agent: str, payload: float) -> bool:
        return payload >= self.fraction * self.budgets[agent]


# =============================================================================
# State
# =============================================================================

@dataclass(frozen=True)
class Allocation:
    """Item of step t (type `type_id`, if any) given to `agent` with bid `bid`."""
    t: int
    type_id: str
    agent: str
    bid: float

    def to_dict(self) -> dict:
        return {'t': self.t + 1, 'type': self.type_id, 'agent': self.agent, 'bid': self.bid}


@dataclass
class AdWordsState:
    """
    Per-agent spend, cumulative allocation and mark bookkeeping.

    Spend is the raw sum of allocated bids; value caps it at the budget.
    """
    budgets: Dict[str, float]
    spent: Dict[str, float]
    y: Dict[str, float]
    selector: MarkOpposeSelector
    assignment: List[Allocation] = field(default_factory=list)

    @classmethod
    def fresh(cls, budgets: Mapping[str, float], fraction: float = LARGE_BID_FRACTION) -> 'AdWordsState':
        budgets = dict(budgets)
        return cls(budgets=budgets, spent={j: 0.0 for j in budgets}, y={j: 0.0 for j in budgets},
                   selector=LargeBidSelector(budgets, fraction))

    def allocate(self, agent: str, bid: float, t: int, type_id: str = "") -> Optional[str]:
        if agent == DUMMY_AGENT:
            return None
        if agent not in self.spent:
            raise ValidationError(f"Unknown agent '{agent}'", field="agent", value=agent)
        self.spent[agent] += bid
        self.assignment.append(Allocation(t, type_id, agent, bid))
        return agent

    def value(self, agent: str) -> float:
        return min(self.spent[agent], self.budgets[agent])

    def unspent_fraction(self, agent: str) -> float:
        return 1.0 - self.value(agent) / self.budgets[agent]

    def total_value(self) -> float:
        return sum(self.value(j) for j in self.budgets)

    def spend_rows(self) -> List[dict]:
        return [{'agent': j, 'budget': b, 'spent': self.spent[j], 'value': self.value(j),
                 'unspent_fraction': self.unspent_fraction(j)} for j, b in self.budgets.items()]


def step_two_way_adwords(state: AdWordsState, surrogate: SurrogateType, bids: Mapping[str, float],
                         rng: Seed, t: int = 0, type_id: str = "") -> Optional[str]:
    """
    Mark-and-oppose step on a two-way surrogate, then allocate the item.

    Returns:
        The receiving agent, or None when the dummy agent was selected.
    """
    if surrogate.is_one_way:
        raise ValidationError("Two-way step needs a two-way surrogate", field="surrogate", value=str(surrogate))
    selected = state.selector.select(surrogate, bids, as_streams(rng), t)
    return state.allocate(selected, bids.get(selected, 0.0), t, type_id)


def _apply_surrogate(state: AdWordsState, surrogate: SurrogateType, bids: Mapping[str, float],
                     streams: TrialStreams, t: int, type_id: str = ""):
    if surrogate.is_one_way:
        state.allocate(surrogate.first, bids.get(surrogate.first, 0.0), t, type_id)
    else:
        step_two_way_adwords(state, surrogate, bids, streams, t, type_id)


# =============================================================================
# Stochastic AdWords
# =============================================================================

class AdWordsRunner:
    """Surrogate tables and y increments of one AdWords allocation, reused across trials."""

    def __init__(self, instance: Instance, allocation: FractionalAllocation,
                 fraction: float = LARGE_BID_FRACTION):
        if instance.problem_class is not ProblemClass.ADWORDS:
            raise ValidationError("AdWords runner needs an AdWords instance", field="class",
                                  value=instance.problem_class.value)
        self.instance = instance
        self.allocation = allocation
        self.fraction = fraction
        self.sampler = SurrogateSampler(allocation)
        self.budgets = {j: instance.budget(j) for j in instance.agent_ids}
        self.increments: List[Dict[str, float]] = [dict() for _ in range(instance.horizon)]
        for (t, i, j), x in allocation.entries():
            step = self.increments[t]
            step[j] = step.get(j, 0.0) + x * instance.payload(i, j) / instance.budget(j)

    def run(self, arrivals: ArrivalSequence, streams: TrialStreams) -> AdWordsState:
        state = AdWordsState.fresh(self.budgets, self.fraction)
        for t, type_id in enumerate(arrivals.types):
            if type_id is not None:
                surrogate = self.sampler.sample(t, type_id, streams.uniform("eta"))
                _apply_surrogate(state, surrogate, self.instance.types[type_id].values, streams, t, type_id)
            for j, amount in self.increments[t].items():
                state.y[j] += amount
        return state


def run_general_adwords(instance: Instance, allocation: FractionalAllocation, arrivals: ArrivalSequence,
                        seed: Seed = None, fraction: float = LARGE_BID_FRACTION,
                        runner: Optional[AdWordsRunner] = None) -> AdWordsState:
    """
    General SOCS for AdWords over realized arrivals.

    Returns:
        Final state: assignment, spend and per-agent values.
    """
    runner = runner or AdWordsRunner(instance, allocation, fraction)
    if len(arrivals) != instance.horizon:
        raise ValidationError("Arrival sequence length does not match the horizon", field="arrivals")
    return runner.run(arrivals, as_streams(seed))


@dataclass
class BidSplit:
    """
    Per-step split of an agent's allocation into small-bid, large one-way
    and large two-way parts (budget units), and the product bound on the
    expected unspent fraction.
    """
    steps: List[Tuple[float, float, float]]
    y_small: float
    y_large_one: float
    y_large_two: float
    product_bound: float

    @property
    def y(self) -> float:
        return self.y_small + self.y_large_one + self.y_large_two


def bid_split(instance: Instance, allocation: FractionalAllocation, agent: str,
              fraction: float = LARGE_BID_FRACTION) -> BidSplit:
    """
    y_S^t = sum over small bids of x b / B; for large bids
    y_L1^t = sum (2x - f)^+ b / B and y_L2^t = sum (x - (2x - f)^+) b / B.
    """
    budget = instance.budget(agent)
    steps = []
    for t in range(instance.horizon):
        small = one = two = 0.0
        for type_id, prob in instance.arrivals.steps[t]:
            x = allocation.x_of(t, type_id, agent)
            if x <= 0:
                continue
            bid = instance.payload(type_id, agent)
            scale = bid / budget
            if bid >= fraction * budget:
                forced = max(2 * x - prob, 0.0)
                one += forced * scale
                two += (x - forced) * scale
            else:
                small += x * scale
        steps.append((small, one, two))
    product = 1.0
    for small, one, two in steps:
        product *= max(1.0 - small - one - two, 0.0)
    return BidSplit(
        steps=steps,
        y_small=sum(s[0] for s in steps),
        y_large_one=sum(s[1] for s in steps),
        y_large_two=sum(s[2] for s in steps),
        product_bound=product,
    )


# =============================================================================
# Adversarial sequences
# =============================================================================

@dataclass
class BidStep:
    """One adversarial item: bids per agent and an optional allocation mu."""
    bids: Dict[str, float]
    mu: Optional[Dict[str, float]] = None


@dataclass
class AdWordsSequence:
    """Adversarial AdWords input: budgets in layout order and the items."""
    budgets: Dict[str, float]
    steps: List[BidStep]

    def optimum(self, cap: int = 14) -> float:
        agents = list(self.budgets)
        bids = [[step.bids.get(j, 0.0) for j in agents] for step in self.steps]
        return budgeted_optimum([self.budgets[j] for j in agents], bids, cap)


def load_sequence(path: Union[str, Path]) -> AdWordsSequence:
    """Read an adversarial sequence JSON file."""
    try:
        doc = SequenceDocument.model_validate_json(Path(path).read_text())
    except SchemaError as e:
        raise ValidationError(f"Malformed sequence document: {e.errors()[0]['msg']}", field="sequence",
                              value=str(path))
    budgets = {a.id: InputValidator.validate_positive(a.budget, field=f"budget[{a.id}]") for a in doc.agents}
    steps = [BidStep(bids=dict(s.bids), mu=None if s.mu is None else dict(s.mu)) for s in doc.steps]
    return AdWordsSequence(budgets, steps)


def save_sequence(sequence: AdWordsSequence, path: Union[str, Path]):
    doc = SequenceDocument(
        agents=[BudgetDocument(id=j, budget=b) for j, b in sequence.budgets.items()],
        steps=[SequenceStepDocument(bids=s.bids, mu=s.mu) for s in sequence.steps],
    )
    Path(path).write_text(doc.model_dump_json(exclude_none=True, indent=2))


def _checked_mu(budgets: Mapping[str, float], mu: Mapping[str, float]) -> Dict[str, float]:
    unknown = set(mu) - set(budgets)
    if unknown:
        raise ValidationError(f"mu references unknown agents {sorted(unknown)}", field="mu")
    ordered = {j: float(mu[j]) for j in budgets if j in mu}
    total = sum(ordered.values())
    if abs(total - 1.0) > DISTRIBUTION_TOL:
        raise ValidationError(f"mu must sum to 1, got {total:.12g}", field="mu", value=dict(mu))
    return ordered


class MultiwayRunner:
    """Decomposition tables of an adversarial sequence with allocations."""

    def __init__(self, sequence: AdWordsSequence, fraction: float = LARGE_BID_FRACTION):
        self.sequence = sequence
        self.fraction = fraction
        self.tables: List[SurrogateTable] = []
        for t, step in enumerate(sequence.steps):
            if step.mu is None:
                raise ValidationError(f"Step {t + 1} has no allocation mu", field="mu")
            self.tables.append(SurrogateTable(_checked_mu(sequence.budgets, step.mu)))

    def run(self, streams: TrialStreams) -> AdWordsState:
        state = AdWordsState.fresh(self.sequence.budgets, self.fraction)
        for t, (step, table) in enumerate(zip(self.sequence.steps, self.tables)):
            surrogate = table.sample(0.5 * streams.uniform("eta"))
            _apply_surrogate(state, surrogate, step.bids, streams, t)
            for j, share in step.mu.items():
                state.y[j] += share * step.bids.get(j, 0.0) / self.sequence.budgets[j]
        return state


def run_multiway_ocs_adwords(sequence: AdWordsSequence, seed: Seed = None,
                             fraction: float = LARGE_BID_FRACTION,
                             runner: Optional[MultiwayRunner] = None) -> AdWordsState:
    """
    Online correlated selection on an adversarial sequence.

    Each step's mu^t must be a distribution; the only randomness is internal.
    """
    runner = runner or MultiwayRunner(sequence, fraction)
    return runner.run(as_streams(seed))


def upper_triangular_sequence(num_agents: int, items_per_agent: int) -> Tuple[AdWordsSequence, float]:
    """
    Shrinking-bidder-set sequence with unit budgets.

    Group r (r = 1..n) has `items_per_agent` items of bid 1/items_per_agent,
    each bidding on agents r..n. Giving group r to agent r spends every
    budget, so OPT = n.
    """
    if num_agents < 1 or items_per_agent < 1:
        raise ValidationError("Sizes must be at least 1", field="upper_triangular")
    agents = [f"j{k + 1}" for k in range(num_agents)]
    bid = 1.0 / items_per_agent
    steps = []
    for r in range(num_agents):
        for _ in range(items_per_agent):
            steps.append(BidStep(bids={j: bid for j in agents[r:]}))
    return AdWordsSequence({j: 1.0 for j in agents}, steps), float(num_agents)


# =============================================================================
# Balance allocator
# =============================================================================

@dataclass(frozen=True, eq=False)
class BalanceParams:
    """
    Gamma and the alpha/beta curves of a convergence rate g.

    beta(y) = g(y) - e^y int_y^inf g(z) e^{-z} dz, alpha(y) = -g'(y) - beta(y),
    Gamma = beta(0). Curves are tabulated on [0, z_max] and usable on
    [0, y_cap], where beta is strictly decreasing.
    """
    gamma: float
    z: np.ndarray
    g: np.ndarray
    beta_values: np.ndarray
    alpha_values: np.ndarray
    beta_integral: np.ndarray
    beta_spline: CubicSpline
    alpha_spline: CubicSpline
    y_cap: float
    tolerance: float = 1e-12

    def beta(self, y: float) -> float:
        return float(self.beta_spline(min(max(y, 0.0), self.y_cap)))

    def alpha(self, y: float) -> float:
        return float(self.alpha_spline(min(max(y, 0.0), self.y_cap)))

    def beta_inverse(self, value: float) -> float:
        """Smallest y in [0, y_cap] with beta(y) = value, clamped at the ends."""
        if value >= self.beta_values[0]:
            return 0.0
        cap_index = int(round(self.y_cap / (self.z[1] - self.z[0])))
        if value <= self.beta_values[cap_index]:
            return self.y_cap
        k = int(np.searchsorted(-self.beta_values[:cap_index + 1], -value, side='left'))
        lo, hi = float(self.z[k - 1]), float(self.z[k])
        return brentq(lambda y: float(self.beta_spline(y)) - value, lo, hi, xtol=self.tolerance)

    def identity_residual(self, grid: Sequence[float]) -> float:
        """max |int_0^y alpha + beta(y) - Gamma| over grid points lying on nodes."""
        worst = 0.0
        for y in grid:
            integral_beta = float(np.interp(y, self.z, self.beta_integral))
            integral_alpha = (self.g[0] - float(np.interp(y, self.z, self.g))) - integral_beta
            worst = max(worst, abs(integral_alpha + self.beta(y) - self.gamma))
        return worst


def _rate_function(rate: Union[RateCurve, Callable[[np.ndarray], np.ndarray]],
                   z_max: float) -> Callable[[np.ndarray], np.ndarray]:
    if not isinstance(rate, RateCurve):
        return rate
    if rate.kind is RateKind.MULTIWAY_OCS_ADWORDS:
        nodes, values = tabulate_rate(rate, z_max)
        log_spline = CubicSpline(nodes, np.log(values))
        return lambda z: np.exp(log_spline(z))
    return rate.evaluate


def balance_parameters(rate: Union[RateCurve, Callable[[np.ndarray], np.ndarray]],
                       z_max: float = 40.0, step: float = 0.002,
                       tolerance: float = 1e-12) -> BalanceParams:
    """
    Tabulate Gamma, beta and alpha for a convergence rate.

    The tail integral int_y^{z_max} g e^{-z} uses composite Simpson from the
    right end; truncation costs at most e^{-z_max}.

    Raises:
        BalanceError: g(0) != 1, g increasing somewhere, or beta not decreasing.

    Example:
        >>> params = balance_parameters(curve(RateKind.BASELINE))
        >>> round(params.gamma, 9)
        0.5
    """
    g_fn = _rate_function(rate, z_max)
    z = np.linspace(0.0, z_max, int(round(z_max / step)) + 1)
    g = np.asarray(g_fn(z), dtype=float)
    if abs(g[0] - 1.0) > 1e-9:
        raise BalanceError(f"Rate must satisfy g(0) = 1, got {g[0]:.12g}")
    if np.any(np.diff(g) > 1e-12):
        raise BalanceError("Rate must be non-increasing")

    h = g * np.exp(-z)
    tail = cumulative_simpson(h[::-1], x=z_max - z[::-1], initial=0.0)[::-1]
    gamma = 1.0 - float(tail[0])
    beta = g - np.exp(z) * tail
    g_spline = CubicSpline(z, g)
    alpha = -g_spline.derivative()(z) - beta
    y_cap = z_max / 4
    cap_index = int(round(y_cap / step))
    if np.any(np.diff(beta[:cap_index + 1]) >= 0):
        raise BalanceError("beta must be strictly decreasing; check the rate curve")

    params = BalanceParams(
        gamma=gamma, z=z, g=g, beta_values=beta, alpha_values=alpha,
        beta_integral=cumulative_simpson(beta, x=z, initial=0.0),
        beta_spline=CubicSpline(z, beta), alpha_spline=CubicSpline(z, alpha),
        y_cap=y_cap, tolerance=tolerance,
    )
    logging.info(f"Balance parameters: Gamma = {gamma:.9f}")
    return params


@lru_cache(maxsize=8)
def balance_parameters_for(kind: RateKind, c: float = 0.417, z_max: float = 40.0,
                           step: float = 0.002) -> BalanceParams:
    """Cached balance_parameters of a named curve."""
    return balance_parameters(curve(kind, c=c), z_max=z_max, step=step)


def balance_fractional_step(state: AdWordsState, bids: Mapping[str, float],
                            params: BalanceParams) -> Dict[str, float]:
    """
    Water-filling allocation of one item.

    Finds theta with sum_j (B_j / b_j)(beta^{-1}(theta / b_j) - y_j)^+ = 1
    and returns mu_j(theta), in budget order. `state.y` is not modified.

    Raises:
        ValidationError: every bid is zero.
        BalanceError: no threshold places unit mass.
    """
    positive = {j: float(b) for j, b in bids.items() if b > 0}
    for j in positive:
        if j not in state.budgets:
            raise ValidationError(f"Unknown agent '{j}'", field="bids", value=j)
    if not positive:
        raise ValidationError("At least one bid must be positive", field="bids")

    def shares(theta: float) -> Dict[str, float]:
        out = {}
        for j, b in positive.items():
            level = params.beta_inverse(theta / b)
            out[j] = state.budgets[j] / b * max(level - state.y[j], 0.0)
        return out

    def excess(theta: float) -> float:
        return sum(shares(theta).values()) - 1.0

    hi = max(b * params.beta(state.y[j]) for j, b in positive.items())
    lo = hi / 2
    for _ in range(200):
        if excess(lo) >= 0:
            break
        lo /= 2
    else:
        raise BalanceError("No threshold places a full unit of allocation")
    theta = brentq(excess, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    mu = shares(theta)
    total = sum(mu.values())
    return {j: mu[j] / total for j in state.budgets if j in mu and mu[j] > 0}


def balance_allocation(sequence: AdWordsSequence, params: BalanceParams) -> AdWordsSequence:
    """The sequence with mu^t filled in by the Balance allocator (deterministic)."""
    tracker = AdWordsState.fresh(sequence.budgets)
    steps = []
    for step in sequence.steps:
        mu = balance_fractional_step(tracker, step.bids, params)
        for j, share in mu.items():
            tracker.y[j] += share * step.bids[j] / sequence.budgets[j]
        steps.append(BidStep(bids=dict(step.bids), mu=mu))
    return AdWordsSequence(dict(sequence.budgets), steps)


def run_balance_ocs_end_to_end(sequence: AdWordsSequence, seed: Seed = None,
                               params: Optional[BalanceParams] = None,
                               fraction: float = LARGE_BID_FRACTION) -> AdWordsState:
    """
    Balance fractional allocation rounded online by the multi-way OCS.

    Example:
        single agent with bids summing past its budget -> value = B
    """
    params = params or balance_parameters_for(RateKind.MULTIWAY_OCS_ADWORDS)
    return run_multiway_ocs_adwords(balance_allocation(sequence, params), seed, fraction)


def random_sequence(num_agents: int, horizon: int, density: float = 0.5, seed: int = 0) -> AdWordsSequence:
    """
    Random adversarial sequence; mu^t is uniform over each step's bidders.

    Budgets are U(1, 2), bids U(0.05, 1) * B_j, each present with probability `density`.
    """
    if num_agents < 1 or horizon < 1:
        raise ValidationError("Sizes must be at least 1", field="random_sequence")
    density = InputValidator.validate_probability(density, field="density")
    rng = make_generator(InputValidator.validate_seed(seed), 0, "misc")
    budgets = {f"j{k + 1}": round(float(rng.uniform(1.0, 2.0)), 4) for k in range(num_agents)}
    steps = []
    for _ in range(horizon):
        bids = {j: round(float(rng.uniform(0.05, 1.0)) * b, 4) for j, b in budgets.items() if rng.random() < density}
        if not bids:
            j = list(budgets)[int(rng.integers(num_agents))]
            bids = {j: round(float(rng.uniform(0.05, 1.0)) * budgets[j], 4)}
        steps.append(BidStep(bids=bids, mu={j: 1.0 / len(bids) for j in bids}))
    return AdWordsSequence(budgets, steps)
