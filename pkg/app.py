"""
SOCS lab command-line application - thin orchestrator.

Composes the instance, LP, rounding, oracle and harness modules behind
argparse subcommands. Every command returns an exit code: 0 when all checks
pass, 1 when any check fails (or on an unexpected error), 2 on invalid input
or configuration.

Usage:
    python app.py gen --class unweighted --types 3 --agents 3 --horizon 4 --out inst.json
    python app.py lp solve inst.json --out alloc.json
    python app.py simulate --algorithm matching --instance inst.json --trials 100000
    python app.py rates dump --kind general-matching --grid 0:1:0.01 --format csv --out g.csv
    python app.py verify curves
    python app.py results list --dir runs
"""

import argparse
import logging
import math
import os
import sys
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from config import AlgorithmKind, Benchmark, ConfigurationError, ExperimentConfig
from config_manager import AppConfig
from exact_oracles import audit_table, converse_jensen_check, exact_state_dp, random_two_way_instance, recurrence_table
from harness import compare_to_rate, monte_carlo
from instance_model import (
    Instance, ProblemClass, QueryCommitInstance, generate, load_instance, sample_arrivals, save_instance, validate,
)
from lp_relaxations import VbarMode, check_feasibility, perturbation_audit, solve_adwords_lp, solve_matching_lp
from query_commit import QueryCommitRunner, next_vertex_probabilities, random_query_commit
from rates import RateKind, curve_property_checks, dump_curve
from report_display import ReportDisplay
from rng_streams import TrialStreams
from socs_adwords import random_sequence, save_sequence
from socs_matching import MatchingRunner
from storage import ResultStorage, StorageFactory, dumps
from type_decomposition import conservation_residual, sample_surrogate, surrogate_distribution
from ui_helpers import print_error, print_info, print_subheader, print_success, print_warning
from validators import InputValidator, ValidationError

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

ORACLE_TOL = 1e-12


def setup_logging(log_dir: str = 'logs') -> str:
    """Setup logging configuration; returns the log file path."""
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    log_filename = os.path.join(log_dir, f'socs_lab_{datetime.now().strftime("%Y%m%d_%H%M%S")}.log')

    formatter = logging.Formatter('%(asctime)s - %(levelname)s - %(filename)s:%(lineno)d - %(message)s')

    root_logger = logging.getLogger()

    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    file_handler = logging.FileHandler(log_filename)
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.ERROR)
    console_handler.setFormatter(formatter)

    root_logger.setLevel(logging.DEBUG)
    root_logger.addHandler(file_handler)
    root_logger.addHandler(console_handler)

    logging.info("=" * 50)
    logging.info("Starting new SOCS lab session")
    logging.info("=" * 50)
    return log_filename


def _parse_mu(text: str) -> Dict[str, float]:
    """Parse 'a=0.5,b=0.5' into a conditional allocation."""
    mu: Dict[str, float] = {}
    for part in text.split(','):
        if '=' not in part:
            raise ValidationError("Allocation must look like 'a=0.5,b=0.5'", field="mu", value=text)
        agent, value = part.split('=', 1)
        agent = agent.strip()
        if not agent or agent in mu:
            raise ValidationError("Agent names must be non-empty and distinct", field="mu", value=text)
        mu[agent] = InputValidator.validate_probability(value, field=f"mu[{agent}]")
    if sum(mu.values()) > 1 + 1e-12:
        raise ValidationError("Allocation sums above 1", field="mu", value=text)
    return mu


class SocsLab:
    """
    Command handlers with injected configuration and storage.

    Args:
        config: Application configuration (None = load from environment).
        storage: Result storage (None = file storage in each --out directory).
    """

    def __init__(self, config: Optional[AppConfig] = None, storage: Optional[ResultStorage] = None):
        self.config = config or AppConfig()
        self.storage = storage
        self.display = ReportDisplay(self.config.output.table_format, self.config.output.float_digits)

    # =========================================================================
    # Output
    # =========================================================================

    def _save(self, out: Optional[str], fmt: str, document: Any, rows: Sequence[Dict[str, Any]]) -> Optional[str]:
        """Write `document` (json) or `rows` (csv) under the name of `out`."""
        if not out:
            return None
        directory, filename = os.path.split(out)
        name = os.path.splitext(filename)[0]
        storage = self.storage or StorageFactory.create_file_based(directory or '.')
        location = storage.save_json(name, document) if fmt == 'json' else storage.save_rows(name, rows)
        print_info(f"Wrote {location}")
        return location

    @staticmethod
    def _verdict(passed: bool, what: str) -> int:
        if passed:
            print_success(f"{what}: PASS")
            return EXIT_PASS
        print_error(f"{what}: FAIL")
        return EXIT_FAIL

    def _load_instance(self, path: str) -> Instance:
        instance = load_instance(path)
        if not isinstance(instance, Instance):
            raise ValidationError("Expected a Non-IID instance, got a query-commit instance",
                                  field="instance", value=path)
        report = validate(instance)
        if not report.is_valid:
            raise ValidationError(f"Instance has {len(report.violations)} violation(s): {report.violations[0]}",
                                  field="instance", value=path)
        return instance

    def _solve(self, instance: Instance, tol: Optional[float], vbar_mode: Optional[str] = None):
        if instance.problem_class is ProblemClass.ADWORDS:
            mode = VbarMode(vbar_mode) if vbar_mode else None
            return solve_adwords_lp(instance, tol, mode, self.config)
        return solve_matching_lp(instance, tol, self.config)

    # =========================================================================
    # Commands
    # =========================================================================

    def gen(self, args) -> int:
        """Write a random Non-IID instance, query-commit instance or AdWords sequence."""
        if args.kind == 'sequence':
            save_sequence(random_sequence(args.agents, args.horizon, args.density, args.seed), args.out)
        elif args.kind == 'query-commit':
            qc = random_query_commit(args.types, args.agents, args.density, args.seed,
                                     self.config.oracle.qc_neighbor_cap)
            save_instance(qc, args.out)
        else:
            instance = generate(args.problem_class, args.types, args.agents, args.horizon, args.density, args.seed)
            save_instance(instance, args.out)
        print_success(f"Generated {args.kind} file {args.out}")
        return EXIT_PASS

    def validate(self, args) -> int:
        instance = load_instance(args.path)
        report = validate(instance)
        self.display.display_validation(report, args.path)
        self._save(args.out, 'json', report.to_dict(), [{'violation': v} for v in report.violations])
        return EXIT_PASS if report.is_valid else EXIT_FAIL

    def lp_solve(self, args) -> int:
        """Solve the LP relaxation of an instance and audit the optimum."""
        instance = self._load_instance(args.path)
        tol = InputValidator.validate_tolerance(args.tol) if args.tol is not None else None
        allocation, report = self._solve(instance, tol, args.vbar_mode)
        self.display.display_lp_report(report)

        audit_tol = tol if tol is not None else self.config.solver.tolerance
        audit = check_feasibility(instance, allocation, audit_tol, self.config)
        self.display.display_lp_report(audit)
        passed = audit.status != "infeasible"
        document = {'report': report.to_dict(), 'audit': audit.to_dict(), 'allocation': allocation.to_rows()}

        if args.perturb:
            moves = perturbation_audit(instance, allocation, report, args.perturb, args.seed or 0,
                                       audit_tol, self.config)
            print_info(f"Perturbation audit: {moves.feasible_moves}/{moves.directions} feasible moves, "
                       f"max gain {moves.max_gain:.3e}")
            document['perturbation'] = {'directions': moves.directions, 'feasible_moves': moves.feasible_moves,
                                        'max_gain': moves.max_gain}
            passed = passed and moves.passed

        self._save(args.out, args.format, document, allocation.to_rows())
        return self._verdict(passed, "LP audit")

    def decompose(self, args) -> int:
        """Surrogate distribution of one conditional allocation."""
        mu = _parse_mu(args.mu)
        distribution = surrogate_distribution(mu)
        rows = [{'surrogate': str(s), 'probability': p} for s, p in distribution]
        self.display.display_rows(rows, title=f"Type Decomposition of {args.mu}")
        residual = conservation_residual(mu, distribution)
        print_info(f"Conservation residual: {residual:.3e}")
        if args.eta is not None:
            eta = InputValidator.validate_eta(args.eta)
            print_info(f"eta = {eta}: {sample_surrogate(mu, eta)}")
        self._save(args.out, args.format, {'mu': mu, 'distribution': rows, 'residual': residual}, rows)
        return self._verdict(residual <= ORACLE_TOL, "Allocation conservation")

    def simulate(self, args) -> int:
        """Monte Carlo run of one algorithm, checked against its convergence rate."""
        experiment_config = ExperimentConfig.from_args(args, self.config)
        summary = monte_carlo(experiment_config, self.config)
        self.display.display_summary(summary)

        sigma = args.sigma if args.sigma is not None else self.config.simulation.sigma
        comparison = compare_to_rate(summary, args.rate, sigma, self.config.adwords.general_c,
                                     self.config.rates)
        self.display.display_verdicts(comparison)

        document = {'config': experiment_config.to_dict(), 'summary': summary.to_dict(),
                    'verdicts': comparison.to_dict()}
        self._save(args.out, args.format, document, [r.to_dict() for r in comparison.rows])
        return self._verdict(comparison.passed, "Convergence rate")

    def qc_run(self, args) -> int:
        """Query-commit simulation, with the probe plans of the first decision."""
        if args.instance:
            qc = load_instance(args.instance)
            if not isinstance(qc, QueryCommitInstance):
                raise ValidationError("Expected a query-commit instance", field="instance", value=args.instance)
            runner = QueryCommitRunner(qc, cap=self.config.oracle.qc_neighbor_cap)
            state = runner.matching_runner.fresh_state()
            for t, i in enumerate(qc.online):
                x = next_vertex_probabilities(runner.matching_runner, state, t)
                self.display.display_plan(runner.plan(t, x), i)
        args.algorithm = AlgorithmKind.QUERY_COMMIT.value
        return self.simulate(args)

    def rates_dump(self, args) -> int:
        grid = InputValidator.validate_grid(args.grid)
        c = args.c if args.c is not None else self.config.adwords.general_c
        rates = self.config.rates
        values = dump_curve(args.kind, grid, c, rates.multiway_grid, rates.multiway_refine)
        rows = [{'y': y, 'g': g, 'one_minus_g': h} for y, g, h in values]
        self.display.display_rows(rows, title=f"Convergence rate {args.kind}", limit=args.limit)
        self._save(args.out, args.format, {'kind': args.kind, 'c': c, 'rows': rows}, rows)
        return EXIT_PASS

    def verify_curves(self, args) -> int:
        """Monotonicity, concavity and inequality checks on every rate curve."""
        c = args.c if args.c is not None else self.config.adwords.general_c
        report = curve_property_checks(args.step, c)
        self.display.display_check_report(report, "Rate curve certification")
        self._save(args.out, args.format, report.to_dict(), [r.to_dict() for r in report.results])
        return self._verdict(report.passed, "Rate curve certification")

    def verify_converse_jensen(self, args) -> int:
        """Converse Jensen bound for every agent of the LP optimum of each instance."""
        instances: List[Instance] = []
        if args.paths:
            instances = [self._load_instance(p) for p in args.paths]
        else:
            for k in range(args.instances):
                instances.append(generate(args.problem_class, args.types, args.agents, args.horizon,
                                          args.density, (args.seed or 0) + k))
        rows = []
        for n, instance in enumerate(instances):
            allocation, _ = solve_matching_lp(instance, args.tol, self.config)
            for j in instance.agent_ids:
                result = converse_jensen_check(instance, allocation, j)
                rows.append({'instance': n + 1, 'agent': j, 'lhs': result.lhs, 'rhs': result.rhs,
                             'residual': result.residual, 'verdict': 'PASS' if result.holds else 'FAIL'})
        self.display.display_rows(rows, title="Converse Jensen")
        self._save(args.out, args.format, {'rows': rows}, rows)
        return self._verdict(all(r['verdict'] == 'PASS' for r in rows), "Converse Jensen")

    def verify_oracles(self, args) -> int:
        """
        Cross-check the subset recurrence against the forward DP on random
        two-way instances, and Monte Carlo against the DP when --trials > 0.
        """
        oracle = self.config.oracle
        rows = []
        for k in range(args.instances):
            instance, allocation = random_two_way_instance(args.agents, args.horizon, (args.seed or 0) + k)
            table = recurrence_table(instance, allocation, oracle.recurrence_cap)
            outcome = exact_state_dp(instance, allocation, AlgorithmKind.MATCHING, oracle.dp_state_cap)
            agents = instance.agent_ids
            gap = 0.0
            for mask in range(1, 1 << len(agents)):
                subset = [j for b, j in enumerate(agents) if mask >> b & 1]
                gap = max(gap, abs(float(table.u[table.horizon, mask]) - outcome.all_unmatched(agents, subset)))
            audit = audit_table(table)
            row = {'instance': k + 1, 'dp_gap': gap, 'audits': 'PASS' if audit.passed else 'FAIL'}
            passed = gap <= ORACLE_TOL and audit.passed

            if args.trials:
                runner = MatchingRunner(instance, allocation)
                unmatched = np.zeros(len(agents))
                for trial in range(args.trials):
                    streams = TrialStreams(args.seed or 0, trial)
                    state = runner.run(sample_arrivals(instance, streams), streams)
                    unmatched += [0.0 if j in state.matched else 1.0 for j in agents]
                worst_z = 0.0
                for b, j in enumerate(agents):
                    p = outcome.miss[j]
                    stderr = max(math.sqrt(p * (1 - p) / args.trials), 1.0 / args.trials)
                    worst_z = max(worst_z, abs(unmatched[b] / args.trials - p) / stderr)
                row['mc_sigmas'] = worst_z
                passed = passed and worst_z <= 4.0

            row['verdict'] = 'PASS' if passed else 'FAIL'
            rows.append(row)
            if not passed:
                logging.warning(f"Oracle cross-check failed on instance {k + 1}: {row}")
        self.display.display_rows(rows, title="Exact oracle cross-check")
        self._save(args.out, args.format, {'rows': rows}, rows)
        return self._verdict(all(r['verdict'] == 'PASS' for r in rows), "Exact oracles")

    # =========================================================================
    # Stored results
    # =========================================================================

    def _result_storage(self, directory: str) -> ResultStorage:
        return self.storage or StorageFactory.create_file_based(directory)

    def results_list(self, args) -> int:
        """Names of stored results and which forms (json, csv) each has."""
        storage = self._result_storage(args.dir)
        rows = [{'name': name, 'json': storage.load_json(name) is not None, 'csv': bool(storage.load_rows(name))}
                for name in storage.list_results()]
        self.display.display_rows(rows, title=f"Stored results ({len(rows)})")
        return EXIT_PASS

    def results_show(self, args) -> int:
        storage = self._result_storage(args.dir)
        document = storage.load_json(args.name)
        rows = storage.load_rows(args.name)
        if document is None and not rows:
            raise ValidationError(f"No stored result named '{args.name}'", field="name", value=args.name)
        if rows:
            self.display.display_rows(rows, title=f"{args.name}.csv", limit=args.limit)
        if document is not None:
            print_subheader(f"{args.name}.json")
            print(dumps(document))
        return EXIT_PASS

    def results_delete(self, args) -> int:
        storage = self._result_storage(args.dir)
        if not storage.delete_result(args.name):
            raise ValidationError(f"No stored result named '{args.name}'", field="name", value=args.name)
        print_success(f"Deleted {args.name}")
        return EXIT_PASS


# =============================================================================
# Argument parsing
# =============================================================================

def _add_output(parser: argparse.ArgumentParser, default_format: str = 'json'):
    parser.add_argument('--out', help="Result file (name decides the stored file)")
    parser.add_argument('--format', choices=['csv', 'json'], default=default_format)


def _add_generator(parser: argparse.ArgumentParser, seed_dest: str = 'gen_seed'):
    parser.add_argument('--class', dest='problem_class', default='unweighted',
                        choices=[c.value for c in ProblemClass])
    parser.add_argument('--types', type=int, default=3)
    parser.add_argument('--agents', type=int, default=3)
    parser.add_argument('--horizon', type=int, default=4)
    parser.add_argument('--density', type=float, default=0.5)
    if seed_dest == 'gen_seed':
        parser.add_argument('--gen-seed', dest='gen_seed', type=int, default=0, help="Instance generator seed")


def _add_monte_carlo(parser: argparse.ArgumentParser):
    parser.add_argument('--trials', type=int)
    parser.add_argument('--seed', type=int)
    parser.add_argument('--workers', type=int)
    parser.add_argument('--benchmark', choices=[b.value for b in Benchmark], default=Benchmark.LP.value)
    parser.add_argument('--rate', choices=[k.value for k in RateKind],
                        help="Rate to check against (default: the algorithm's own)")
    parser.add_argument('--sigma', type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='socs-lab', description="Stochastic online correlated selection lab")
    commands = parser.add_subparsers(dest='command', required=True)

    gen = commands.add_parser('gen', help="Generate a random instance file")
    gen.add_argument('--kind', choices=['non-iid', 'sequence', 'query-commit'], default='non-iid')
    _add_generator(gen, seed_dest='seed')
    gen.add_argument('--seed', type=int, default=0)
    gen.add_argument('--out', required=True)
    gen.set_defaults(handler=SocsLab.gen)

    check = commands.add_parser('validate', help="Validate an instance file")
    check.add_argument('path')
    check.add_argument('--out')
    check.set_defaults(handler=SocsLab.validate)

    lp = commands.add_parser('lp', help="LP relaxations").add_subparsers(dest='lp_command', required=True)
    solve = lp.add_parser('solve', help="Solve and audit the LP of an instance")
    solve.add_argument('path')
    solve.add_argument('--tol', type=float)
    solve.add_argument('--vbar-mode', choices=[m.value for m in VbarMode])
    solve.add_argument('--perturb', type=int, default=0, help="Random directions for the optimality audit")
    solve.add_argument('--seed', type=int)
    _add_output(solve)
    solve.set_defaults(handler=SocsLab.lp_solve)

    decompose = commands.add_parser('decompose', help="Type Decomposition of one allocation")
    decompose.add_argument('--mu', required=True, help="e.g. 'a=0.5,b=0.5'")
    decompose.add_argument('--eta', type=float)
    _add_output(decompose)
    decompose.set_defaults(handler=SocsLab.decompose)

    simulate = commands.add_parser('simulate', help="Monte Carlo run against the convergence rate")
    simulate.add_argument('--algorithm', choices=[k.value for k in AlgorithmKind], default=AlgorithmKind.MATCHING.value)
    simulate.add_argument('--instance')
    _add_generator(simulate)
    _add_monte_carlo(simulate)
    _add_output(simulate)
    simulate.set_defaults(handler=SocsLab.simulate)

    rates = commands.add_parser('rates', help="Convergence rates").add_subparsers(dest='rates_command', required=True)
    dump = rates.add_parser('dump', help="Tabulate a rate curve")
    dump.add_argument('--kind', required=True, choices=[k.value for k in RateKind])
    dump.add_argument('--grid', default='0:1:0.01')
    dump.add_argument('--c', type=float)
    dump.add_argument('--limit', type=int, default=20, help="Rows printed to the terminal")
    _add_output(dump, default_format='csv')
    dump.set_defaults(handler=SocsLab.rates_dump)

    verify = commands.add_parser('verify', help="Numeric certifications").add_subparsers(dest='verify_command',
                                                                                         required=True)
    curves = verify.add_parser('curves', aliases=['appendix-b'],
                               help="Rate curve inequality and concavity checks")
    curves.add_argument('--step', type=float, default=1e-3)
    curves.add_argument('--c', type=float)
    _add_output(curves)
    curves.set_defaults(handler=SocsLab.verify_curves)

    jensen = verify.add_parser('converse-jensen', help="Converse Jensen bound on LP optima")
    jensen.add_argument('paths', nargs='*')
    jensen.add_argument('--instances', type=int, default=20)
    _add_generator(jensen, seed_dest='seed')
    jensen.add_argument('--seed', type=int)
    jensen.add_argument('--tol', type=float)
    _add_output(jensen)
    jensen.set_defaults(handler=SocsLab.verify_converse_jensen)

    oracles = verify.add_parser('oracles', help="Subset recurrence vs forward DP vs Monte Carlo")
    oracles.add_argument('--instances', type=int, default=100)
    oracles.add_argument('--agents', type=int, default=4)
    oracles.add_argument('--horizon', type=int, default=5)
    oracles.add_argument('--trials', type=int, default=0)
    oracles.add_argument('--seed', type=int)
    _add_output(oracles)
    oracles.set_defaults(handler=SocsLab.verify_oracles)

    results = commands.add_parser('results', help="Stored result files").add_subparsers(dest='results_command',
                                                                                        required=True)
    listing = results.add_parser('list', help="List stored results")
    listing.add_argument('--dir', default='.', help="Result directory")
    listing.set_defaults(handler=SocsLab.results_list)

    show = results.add_parser('show', help="Print a stored result")
    show.add_argument('name')
    show.add_argument('--dir', default='.', help="Result directory")
    show.add_argument('--limit', type=int, default=20, help="Rows printed to the terminal")
    show.set_defaults(handler=SocsLab.results_show)

    delete = results.add_parser('delete', help="Delete a stored result (json and csv)")
    delete.add_argument('name')
    delete.add_argument('--dir', default='.', help="Result directory")
    delete.set_defaults(handler=SocsLab.results_delete)

    qc = commands.add_parser('qc', help="Query-commit model").add_subparsers(dest='qc_command', required=True)
    run = qc.add_parser('run', help="Simulate query-commit against the random-order rate")
    run.add_argument('--instance')
    _add_generator(run)
    _add_monte_carlo(run)
    _add_output(run)
    run.set_defaults(handler=SocsLab.qc_run)

    return parser


def main(argv: Optional[Sequence[str]] = None, lab: Optional[SocsLab] = None) -> int:
    """Main entry point; returns the process exit code."""
    args = build_parser().parse_args(argv)
    try:
        lab = lab or SocsLab()
        logging.info(f"Running command {args.command} with {vars(args)}")
        return args.handler(lab, args)
    except (ValidationError, ConfigurationError) as e:
        logging.error(f"Invalid input: {e}")
        print_error(f"Invalid input: {e}")
        return EXIT_USAGE
    except FileNotFoundError as e:
        logging.error(f"Missing file: {e}")
        print_error(f"Missing file: {e.filename}")
        return EXIT_USAGE
    except KeyboardInterrupt:
        logging.info("Program terminated by user")
        print_warning("\nProgram terminated by user")
        return EXIT_FAIL
    except Exception as e:
        logging.critical(f"Critical error in command {args.command}: {str(e)}", exc_info=True)
        print_error(f"Critical error occurred: {str(e)}")
        return EXIT_FAIL
    finally:
        logging.info("Program shutting down")


if __name__ == "__main__":
    setup_logging(AppConfig().output.log_dir)
    sys.exit(main())
