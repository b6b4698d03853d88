"""
Terminal display for experiment summaries, rate verdicts, LP reports and
numeric certification reports.

Usage:
    from report_display import ReportDisplay

    display = ReportDisplay()
    display.display_summary(summary)
    display.display_verdicts(comparison)
"""

from typing import Dict, List, Optional, Sequence

from tabulate import tabulate

from harness import RateComparison, StatSummary
from instance_model import ValidationReport
from lp_relaxations import LpSolveReport
from query_commit import ProbePlan
from rates import CheckReport
from ui_helpers import (
    format_float, format_margin, format_verdict, highlight, info, print_header, print_info,
    print_subheader, print_success, print_error,
)


class ReportDisplay:
    """Formatted display of harness and solver results."""

    def __init__(self, table_format: str = 'simple', digits: int = 6):
        self._fmt = table_format
        self._digits = digits

    def _f(self, value: float) -> str:
        return format_float(value, self._digits)

    def display_summary(self, summary: StatSummary):
        """Display a Monte Carlo summary."""
        print_header(f"Monte Carlo: {summary.algorithm} ({summary.trials} trials, seed {summary.base_seed})")
        print(f"ALG:        {self._f(summary.alg.mean)} ± {self._f(summary.alg.stderr)}")
        print(f"Benchmark:  {self._f(summary.benchmark)} ({summary.benchmark_kind})")
        print(f"Ratio:      {highlight(self._f(summary.ratio.mean))} "
              f"[{self._f(summary.ratio.low)}, {self._f(summary.ratio.high)}]")

        print_subheader("Per agent")
        rows = [[j, self._f(summary.y[j]), self._f(e.mean), f"[{self._f(e.low)}, {self._f(e.high)}]"]
                for j, e in summary.agents.items()]
        print(tabulate(rows, headers=['Agent', 'y', 'Miss', 'CI'], tablefmt=self._fmt))

    def display_verdicts(self, comparison: RateComparison):
        """Display per-agent rate verdicts."""
        print_subheader(f"Rate check against {comparison.kind.value}")
        headers = ['Agent', 'Level', 'y', 'g(y)', 'Estimate', 'Stderr', 'Margin', 'Verdict']
        rows = []
        for r in comparison.rows:
            rows.append([
                r.agent,
                '-' if r.level is None else r.level,
                self._f(r.y),
                self._f(r.rate),
                self._f(r.estimate),
                self._f(r.stderr),
                format_margin(r.margin, self._digits),
                format_verdict(r.passed),
            ])
        print(tabulate(rows, headers=headers, tablefmt=self._fmt))
        if comparison.passed:
            print_success("All agents within the convergence rate")
        else:
            print_error(f"{len(comparison.failures)} row(s) exceed the convergence rate")

    def display_lp_report(self, report: LpSolveReport):
        print_header("LP solve report")
        print(f"Status:         {info(report.status)}")
        print(f"Objective:      {self._f(report.objective)}")
        print(f"Rounds:         {report.iterations}")
        print(f"Max violation:  {report.max_violation:.3e}")
        print(f"Active subsets: {len(report.active_constraints)}")
        for note in report.notes:
            print_info(note)

    def display_check_report(self, report: CheckReport, title: str = "Numeric checks"):
        print_header(title)
        rows = [[r.name, format_verdict(r.passed), f"{r.worst:.3e}", r.detail] for r in report.results]
        print(tabulate(rows, headers=['Check', 'Verdict', 'Worst', 'Detail'], tablefmt=self._fmt))

    def display_validation(self, report: ValidationReport, source: str):
        if report.is_valid:
            print_success(f"{source} is valid")
            return
        print_error(f"{source}: {len(report.violations)} violation(s)")
        for violation in report.violations:
            print(f"  - {violation}")

    def display_rows(self, rows: Sequence[Dict], title: Optional[str] = None, limit: Optional[int] = None):
        """Generic table of dict rows."""
        if title:
            print_subheader(title)
        if not rows:
            print_info("No rows.")
            return
        shown: List[Dict] = list(rows if limit is None else rows[:limit])
        print(tabulate([list(r.values()) for r in shown], headers=list(shown[0].keys()),
                       tablefmt=self._fmt, floatfmt=f".{self._digits}f"))
        if limit is not None and len(rows) > limit:
            print_info(f"... {len(rows) - limit} more rows")

    def display_plan(self, plan: ProbePlan, online_id: str):
        print_subheader(f"Probe plan for {online_id}")
        rows = [[' -> '.join(order) or '(none)', self._f(w)] for order, w in zip(plan.orders, plan.weights)]
        print(tabulate(rows, headers=['Order', 'Weight'], tablefmt=self._fmt))
