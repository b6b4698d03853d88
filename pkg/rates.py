"""
Convergence-rate curves and competitive-ratio constants.

A convergence rate g(y) bounds the probability that an agent with
cumulative fractional allocation y stays unmatched (matching), the expected
unspent fraction of its budget (AdWords), or the probability that it misses
a weight level (Display Ads). Every curve here has g(0) = 1 and lies below
the independent-rounding baseline e^{-y} on [0, 1].

Usage:
    from rates import RateKind, convergence_rate, ratio_constant

    g = convergence_rate(RateKind.GENERAL_MATCHING, 1.0)   # 0.309744...
    ratio = ratio_constant(RateKind.GENERAL_MATCHING)      # 0.690256...
    report = curve_property_checks()
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.optimize import minimize

from validators import InputValidator, ValidationError

E = math.e
LN2 = math.log(2.0)
DEFAULT_ADWORDS_C = 0.417
DISPLAY_OFFSET = 0.44

ArrayLike = Union[float, np.ndarray, Sequence[float]]


class RateKind(Enum):
    """Named convergence-rate curves."""
    BASELINE = "baseline"
    BASIC_MATCHING = "basic-matching"
    TWO_WAY_MATCHING = "two-way-matching"
    GENERAL_MATCHING = "general-matching"
    RANDOM_ORDER_MATCHING = "random-order-matching"
    TWO_WAY_ADWORDS = "two-way-adwords"
    GENERAL_ADWORDS = "general-adwords"
    MULTIWAY_OCS_ADWORDS = "multiway-ocs-adwords"
    TWO_WAY_DISPLAY = "two-way-display"
    GENERAL_DISPLAY = "general-display"


# Published lower bounds on the competitive ratio each curve certifies.
TARGET_RATIOS: Dict[RateKind, float] = {
    RateKind.BASELINE: 1 - 1 / E,
    RateKind.GENERAL_MATCHING: 0.69,
    RateKind.RANDOM_ORDER_MATCHING: 0.705,
    RateKind.GENERAL_ADWORDS: 0.6338,
    RateKind.GENERAL_DISPLAY: 0.644,
    RateKind.MULTIWAY_OCS_ADWORDS: 0.504,
}

# Kinds whose guarantee is Gamma rather than the chord 1 - g(1).
ADVERSARIAL_KINDS = (RateKind.MULTIWAY_OCS_ADWORDS,)


def _as_array(y: ArrayLike) -> np.ndarray:
    return np.asarray(y, dtype=float)


def _baseline(y: np.ndarray) -> np.ndarray:
    return np.exp(-y)


def _basic_matching(y: np.ndarray) -> np.ndarray:
    z = np.maximum(y - 1 + LN2, 0.0)
    return (1 + z) * np.exp(-y - z)


def _two_way_matching(y: np.ndarray) -> np.ndarray:
    return (1 + y) * np.exp(-2 * y)


def _general_matching(y: np.ndarray) -> np.ndarray:
    low = 0.25 * (np.exp(-2 * y) + 3 - 2 * y)
    high = np.exp(-2 * y) * ((1 + E) / 4 + (E / 2) * y)
    return np.where(y <= 0.5, low, high)


def _random_order_matching(y: np.ndarray) -> np.ndarray:
    low = (1 + y / 2) * np.exp(-2 * y) + 0.5 * y * (1 - y)
    high = np.exp(-2 * y) * (1 + (0.5 + E / 4) * y)
    return np.where(y <= 0.5, low, high)


def _adwords_box(u: np.ndarray) -> np.ndarray:
    """(3/4 + 1/4 (1 + u/4) e^{-u/4})^2."""
    return (0.75 + 0.25 * (1 + u / 4) * np.exp(-u / 4)) ** 2


def _two_way_adwords(y: np.ndarray) -> np.ndarray:
    return np.exp(-y) * _adwords_box(y)


def _general_adwords(y: np.ndarray, c: float) -> np.ndarray:
    return np.exp(-y) * _adwords_box(np.maximum(y - c, 0.0))


def _two_way_display(y: np.ndarray) -> np.ndarray:
    bound = (1 + y / 2) * np.exp(-1.5 * y) + (1 - y) / 15
    return np.clip(np.minimum(bound, np.exp(-y)), 0.0, 1.0)


def _general_display(y: np.ndarray) -> np.ndarray:
    u = np.maximum(y - DISPLAY_OFFSET, 0.0)
    bound = np.exp(-y) * (1 + u / 2) * np.exp(-u / 2) + (1 - y) / 15
    return np.clip(np.minimum(np.exp(-y), bound), 0.0, 1.0)


# =============================================================================
# Multi-way OCS rate (numerical maximization over splits)
# =============================================================================

def _multiway_log_factor(ys: np.ndarray, yl1: np.ndarray, yl2: np.ndarray) -> np.ndarray:
    """
    log of (1 + yS/2) e^{-yS/2} (3/4 + 1/4 (1 + yL2/2) e^{-yL2/2}) exp(-yL1^2 / (3 yL1 + 6 yL2)).

    The last factor is 1 at yL1 = yL2 = 0 and e^{-yL1/3} when yL2 = 0.
    """
    small = np.log1p(ys / 2) - ys / 2
    half = yl2 / 2
    large_two = np.log(0.75 + 0.25 * (1 + half) * np.exp(-half))
    denom = 3 * yl1 + 6 * yl2
    safe = np.where(denom > 0, denom, 1.0)
    large_one = np.where(denom > 0, -(yl1 ** 2) / safe, 0.0)
    return small + large_two + large_one


def _split(y: float, s: np.ndarray, r: np.ndarray):
    ys = y * s
    rest = y * (1 - s)
    return ys, rest * r, rest * (1 - r)


def multiway_split(y: float, grid_step: float = 0.01,
                   refine: bool = True) -> Tuple[float, Tuple[float, float, float]]:
    """
    Maximize the multi-way split factor for a total allocation y.

    Splits are parametrized by (s, r) in [0,1]^2 with yS = y s,
    yL1 = y (1-s) r and yL2 = y (1-s)(1-r). A grid search is polished by
    bounded L-BFGS-B.

    Returns:
        (maximum factor, (yS, yL1, yL2)); g(y) = e^{-y} * maximum factor.
    """
    y = InputValidator.validate_allocation_level(y)
    if y == 0:
        return 1.0, (0.0, 0.0, 0.0)

    points = max(int(round(1.0 / grid_step)), 2) + 1
    axis = np.linspace(0.0, 1.0, points)
    s_grid, r_grid = np.meshgrid(axis, axis, indexing='ij')
    values = _multiway_log_factor(*_split(y, s_grid, r_grid))
    best = np.unravel_index(int(np.argmax(values)), values.shape)
    best_s, best_r = float(axis[best[0]]), float(axis[best[1]])
    best_value = float(values[best])

    if refine:
        def objective(v):
            s, r = v
            return -float(_multiway_log_factor(*_split(y, np.array(s), np.array(r))))

        result = minimize(
            objective,
            x0=np.array([best_s, best_r]),
            method="L-BFGS-B",
            bounds=[(0.0, 1.0), (0.0, 1.0)],
            options={'ftol': 1e-15, 'gtol': 1e-12, 'maxiter': 500},
        )
        if -result.fun > best_value:
            best_s, best_r = (float(v) for v in result.x)
            best_value = -float(result.fun)

    ys, yl1, yl2 = _split(y, np.array(best_s), np.array(best_r))
    return math.exp(best_value), (float(ys), float(yl1), float(yl2))


def _multiway_ocs_adwords(y: np.ndarray, grid_step: float = 0.01,
                          refine: bool = True) -> np.ndarray:
    flat = np.atleast_1d(y).ravel()
    out = np.empty_like(flat)
    for k, value in enumerate(flat):
        factor, _ = multiway_split(float(value), grid_step, refine)
        out[k] = math.exp(-value) * factor
    return out.reshape(np.shape(y))


# =============================================================================
# Curves
# =============================================================================

@dataclass(frozen=True)
class RateCurve:
    """
    A named convergence-rate function g(y).

    Attributes:
        kind: Which curve.
        c: Offset constant (GENERAL_ADWORDS only).
        grid_step: Split-grid step (MULTIWAY_OCS_ADWORDS only).
        refine: Local refinement of the split (MULTIWAY_OCS_ADWORDS only).
    """
    kind: RateKind
    c: float = DEFAULT_ADWORDS_C
    grid_step: float = 0.01
    refine: bool = True

    @property
    def label(self) -> str:
        if self.kind is RateKind.GENERAL_ADWORDS:
            return f"{self.kind.value}(c={self.c})"
        return self.kind.value

    def evaluate(self, y: ArrayLike) -> np.ndarray:
        arr = _as_array(y)
        if np.any(arr < 0):
            raise ValidationError("Allocation level must be non-negative", field="y", value=y)
        kind = self.kind
        if kind is RateKind.BASELINE:
            return _baseline(arr)
        if kind is RateKind.BASIC_MATCHING:
            return _basic_matching(arr)
        if kind is RateKind.TWO_WAY_MATCHING:
            return _two_way_matching(arr)
        if kind is RateKind.GENERAL_MATCHING:
            return _general_matching(arr)
        if kind is RateKind.RANDOM_ORDER_MATCHING:
            return _random_order_matching(arr)
        if kind is RateKind.TWO_WAY_ADWORDS:
            return _two_way_adwords(arr)
        if kind is RateKind.GENERAL_ADWORDS:
            return _general_adwords(arr, self.c)
        if kind is RateKind.MULTIWAY_OCS_ADWORDS:
            return _multiway_ocs_adwords(arr, self.grid_step, self.refine)
        if kind is RateKind.TWO_WAY_DISPLAY:
            return _two_way_display(arr)
        if kind is RateKind.GENERAL_DISPLAY:
            return _general_display(arr)
        raise ValidationError(f"Unknown rate kind {kind}", field="kind", value=kind)

    def __call__(self, y: float) -> float:
        return float(self.evaluate(y))


def curve(kind: Union[RateKind, str], c: float = DEFAULT_ADWORDS_C,
          grid_step: float = 0.01, refine: bool = True) -> RateCurve:
    """Look up a curve by kind or by its string value."""
    if isinstance(kind, str):
        try:
            kind = RateKind(kind)
        except ValueError:
            raise ValidationError(f"Unknown rate kind '{kind}'", field="kind", value=kind)
    return RateCurve(kind=kind, c=c, grid_step=grid_step, refine=refine)


def convergence_rate(kind: Union[RateKind, str], y: float,
                     c: float = DEFAULT_ADWORDS_C) -> float:
    """
    Evaluate g(y) for the named curve.

    Example:
        >>> round(convergence_rate(RateKind.TWO_WAY_MATCHING, 1.0), 6)
        0.270671
    """
    y = InputValidator.validate_allocation_level(y)
    return curve(kind, c=c)(y)


# =============================================================================
# Competitive-ratio constants
# =============================================================================

def tabulation_grid(z_max: float = 40.0, fine_step: float = 0.002,
                    dense_until: Optional[float] = None, coarse_step: float = 0.25) -> np.ndarray:
    """
    Quadrature nodes on [0, z_max].

    With `dense_until` set, nodes are `fine_step` apart up to that point and
    `coarse_step` apart after it; g(z) e^{-z} <= e^{-2z} is negligible there.
    """
    if dense_until is None or dense_until >= z_max:
        count = int(round(z_max / fine_step))
        return np.linspace(0.0, z_max, count + 1)
    head = np.linspace(0.0, dense_until, int(round(dense_until / fine_step)) + 1)
    tail = np.linspace(dense_until, z_max, int(round((z_max - dense_until) / coarse_step)) + 1)
    return np.concatenate([head, tail[1:]])


@lru_cache(maxsize=32)
def _tabulated(kind: RateKind, c: float, grid_step: float, refine: bool,
               z_max: float) -> Tuple[np.ndarray, np.ndarray]:
    rate = RateCurve(kind=kind, c=c, grid_step=grid_step, refine=refine)
    if kind is RateKind.MULTIWAY_OCS_ADWORDS:
        z = tabulation_grid(z_max, fine_step=0.01, dense_until=min(8.0, z_max))
    else:
        z = tabulation_grid(z_max, fine_step=0.002)
    logging.debug(f"Tabulating {rate.label} on {len(z)} nodes")
    return z, rate.evaluate(z)


def tabulate_rate(rate: RateCurve, z_max: float = 40.0) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and g values on [0, z_max], cached per curve."""
    return _tabulated(rate.kind, rate.c, rate.grid_step, rate.refine, z_max)


def gamma_constant(kind: Union[RateKind, str, RateCurve], c: float = DEFAULT_ADWORDS_C,
                   z_max: float = 40.0) -> float:
    """
    Gamma = 1 - int_0^inf g(z) e^{-z} dz, truncated at z_max.

    The truncated tail is at most e^{-z_max} since g <= 1.

    Example:
        >>> round(gamma_constant(RateKind.BASELINE), 9)
        0.5
    """
    rate = kind if isinstance(kind, RateCurve) else curve(kind, c=c)
    z, g = tabulate_rate(rate, z_max)
    return 1.0 - float(simpson(g * np.exp(-z), x=z))


def chord_ratio(kind: Union[RateKind, str, RateCurve], c: float = DEFAULT_ADWORDS_C,
                step: float = 1e-4) -> float:
    """min over y in (0, 1] of (1 - g(y)) / y, on a grid that includes y = 1."""
    rate = kind if isinstance(kind, RateCurve) else curve(kind, c=c)
    y = np.linspace(step, 1.0, int(round(1.0 / step)))
    if rate.kind is RateKind.MULTIWAY_OCS_ADWORDS:
        y = np.linspace(0.01, 1.0, 100)
    return float(np.min((1.0 - rate.evaluate(y)) / y))


def ratio_constant(kind: Union[RateKind, str], c: float = DEFAULT_ADWORDS_C) -> float:
    """
    Competitive ratio certified by a curve.

    Adversarial AdWords uses Gamma; every other curve uses the chord bound
    min (1 - g(y)) / y over (0, 1], which equals 1 - g(1) when 1 - g is concave.
    """
    rate = curve(kind, c=c)
    if rate.kind in ADVERSARIAL_KINDS:
        value = gamma_constant(rate)
    else:
        value = chord_ratio(rate)
    logging.info(f"Ratio constant for {rate.label}: {value:.6f}")
    return value


def dump_curve(kind: Union[RateKind, str], grid: List[float], c: float = DEFAULT_ADWORDS_C,
               grid_step: float = 0.01, refine: bool = True) -> List[Tuple[float, float, float]]:
    """Rows (y, g(y), 1 - g(y)) for plotting."""
    rate = curve(kind, c=c, grid_step=grid_step, refine=refine)
    values = rate.evaluate(np.asarray(grid, dtype=float))
    return [(float(y), float(g), float(1 - g)) for y, g in zip(grid, values)]


# =============================================================================
# Univariate certification
# =============================================================================

@dataclass
class CheckResult:
    """Outcome of one numeric certification."""
    name: str
    passed: bool
    worst: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {'name': self.name, 'passed': self.passed, 'worst': self.worst, 'detail': self.detail}


@dataclass
class CheckReport:
    """All certification results."""
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def add(self, result: CheckResult):
        self.results.append(result)
        if not result.passed:
            logging.warning(f"Check failed: {result.name} (worst {result.worst:.3e}) {result.detail}")

    def to_dict(self) -> dict:
        return {'passed': self.passed, 'results': [r.to_dict() for r in self.results]}


def _grid(lo: float, hi: float, step: float) -> np.ndarray:
    return np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)


def _concavity_check(name: str, fn: Callable[[np.ndarray], np.ndarray],
                     lo: float, hi: float, step: float, tol: float = 1e-10) -> CheckResult:
    x = _grid(lo, hi, step)
    second = np.diff(fn(x), n=2)
    worst = float(np.max(second))
    return CheckResult(name, worst <= tol, worst, "max second difference")


def _one_sided_derivatives(fn: Callable[[np.ndarray], np.ndarray], x: float,
                           h: float = 1e-5) -> Tuple[float, float]:
    left = (3 * fn(np.array(x)) - 4 * fn(np.array(x - h)) + fn(np.array(x - 2 * h))) / (2 * h)
    right = (-3 * fn(np.array(x)) + 4 * fn(np.array(x + h)) - fn(np.array(x + 2 * h))) / (2 * h)
    return float(left), float(right)


def _joint_check(name: str, fn: Callable[[np.ndarray], np.ndarray], x: float,
                 tol: float = 1e-6) -> CheckResult:
    left, right = _one_sided_derivatives(fn, x)
    gap = abs(left - right)
    return CheckResult(name, gap <= tol, gap, f"derivatives {left:.8f} / {right:.8f} at {x:.6f}")


def curve_property_checks(step: float = 1e-3, c: float = DEFAULT_ADWORDS_C) -> CheckReport:
    """
    Numerically certify the univariate facts the rate analysis relies on.

    Inequalities must hold to -1e-12, concavity means second differences
    <= 1e-10, monotonicity means first differences >= -1e-12, and
    one-sided derivatives must agree to 1e-6 at the joints of piecewise curves.
    """
    report = CheckReport()

    # 1 - a x <= (1 + b x) e^{-(a+b) x} for a >= b, x >= 0
    x = _grid(0.0, 3.0, step)
    worst = math.inf
    for a, b in ((2.0, 1.0), (1.0, 1.0), (1.5, 0.5), (2.0, 0.0), (3.0, 1.0), (1.0, 0.25)):
        residual = (1 + b * x) * np.exp(-(a + b) * x) - (1 - a * x)
        worst = min(worst, float(np.min(residual)))
    report.add(CheckResult("exp-linear inequality", worst >= -1e-12, worst, "min residual"))

    def one_minus(kind: RateKind, **kw) -> Callable[[np.ndarray], np.ndarray]:
        rate = RateCurve(kind=kind, **kw)
        return lambda y: 1.0 - rate.evaluate(y)

    basic = one_minus(RateKind.BASIC_MATCHING)
    report.add(_concavity_check("basic matching concavity", basic, 0.0, 1.0, step))
    report.add(_joint_check("basic matching joint", basic, 1 - LN2))

    general = one_minus(RateKind.GENERAL_MATCHING)
    report.add(_concavity_check("general matching concavity", general, 0.0, 1.0, step))
    report.add(_joint_check("general matching joint", general, 0.5))

    random_order = one_minus(RateKind.RANDOM_ORDER_MATCHING)
    report.add(_concavity_check("random-order concavity", random_order, 0.0, 1.0, step))
    report.add(_joint_check("random-order joint", random_order, 0.5))

    log_box = lambda v: np.log(3 + (1 + v) * np.exp(-v))  # noqa: E731
    report.add(_concavity_check("two-way AdWords log-concavity", log_box, 0.0, 1.0, step))

    adwords = one_minus(RateKind.GENERAL_ADWORDS, c=c)
    report.add(_concavity_check(f"general AdWords concavity (c={c})", adwords, 0.0, 1.0, step))
    report.add(_joint_check(f"general AdWords joint (c={c})", adwords, c))

    def interference(v):
        return np.exp(-v) * (1 - np.exp(-v / 2) * (1 + v / 2))

    x = _grid(0.0, 1.0, step)
    first = np.diff(interference(x))
    worst = float(np.min(first))
    report.add(CheckResult("display interference monotonicity", worst >= -1e-12, worst, "min first difference"))
    at_one = float(interference(np.array(1.0)))
    report.add(CheckResult("display interference at 1", at_one < 1 / 30, at_one, "f(1) < 1/30"))

    display = RateCurve(kind=RateKind.GENERAL_DISPLAY)
    y = _grid(0.0, 1.0, step)
    residual = (1 - display.evaluate(y)) - 0.644 * y
    worst = float(np.min(residual))
    report.add(CheckResult("display ratio inequality", worst >= -1e-12, worst, "min (1-g) - 0.644 y"))
    tail = _grid(0.9, 1.0, step)
    worst = float(np.min((1 - display.evaluate(tail)) / tail))
    report.add(CheckResult("display chord on [0.9, 1]", worst >= 0.644, worst, "min (1-g)/y"))

    logging.info(f"Univariate checks: {sum(r.passed for r in report.results)}/{len(report.results)} passed")
    return report


appendix_b_checks = curve_property_checks
