"""
Unit tests for the command-line entry point (app.py).

Every command runs through main() with in-memory storage, so results
written with --out land in the memory_storage fixture.

To run:
    pytest tests/test_app.py -v
"""

import logging
import math
import os

import pytest
from freezegun import freeze_time

from app import EXIT_FAIL, EXIT_PASS, EXIT_USAGE, SocsLab, _parse_mu, main, setup_logging
from instance_model import Agent, ArrivalDistribution, Instance, OnlineType, ProblemClass, save_instance
from rates import multiway_split
from validators import ValidationError


@pytest.fixture
def lab(test_config, memory_storage):
    return SocsLab(test_config, memory_storage)


@pytest.fixture
def instance_file(tmp_path, lab):
    path = tmp_path / "inst.json"
    assert main(['gen', '--types', '3', '--agents', '3', '--horizon', '4', '--seed', '5',
                 '--out', str(path)], lab) == EXIT_PASS
    return path


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    for handler in root.handlers[:]:
        root.removeHandler(handler)
        handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


# =============================================================================
# Helper Tests
# =============================================================================

@pytest.mark.unit
class TestParseMu:
    """Tests for the --mu parser."""

    def test_parse(self):
        assert _parse_mu("a=0.5, b=0.25") == {"a": 0.5, "b": 0.25}

    def test_missing_equals(self):
        with pytest.raises(ValidationError, match="Allocation must look like"):
            _parse_mu("a:0.5")

    def test_duplicate_agent(self):
        with pytest.raises(ValidationError, match="non-empty and distinct"):
            _parse_mu("a=0.2,a=0.3")

    def test_sum_above_one(self):
        with pytest.raises(ValidationError, match="sums above 1"):
            _parse_mu("a=0.75,b=0.5")


@pytest.mark.unit
class TestSetupLogging:
    """Tests for log file setup."""

    @freeze_time("2026-01-02 03:04:05")
    def test_log_file_name(self, tmp_path, restore_root_logger):
        log_dir = tmp_path / "logs"
        path = setup_logging(str(log_dir))
        assert path == os.path.join(str(log_dir), "socs_lab_20260102_030405.log")
        assert os.path.exists(path)
        assert logging.getLogger().level == logging.DEBUG


# =============================================================================
# Instance Commands
# =============================================================================

@pytest.mark.unit
class TestInstanceCommands:
    """Tests for gen and validate."""

    @pytest.mark.parametrize("kind", ["non-iid", "sequence", "query-commit"])
    def test_gen_writes_file(self, kind, tmp_path, lab):
        path = tmp_path / f"{kind}.json"
        assert main(['gen', '--kind', kind, '--out', str(path)], lab) == EXIT_PASS
        assert path.exists()

    def test_gen_requires_out(self, lab):
        with pytest.raises(SystemExit) as excinfo:
            main(['gen'], lab)
        assert excinfo.value.code == EXIT_USAGE

    def test_validate_valid_file(self, instance_file, lab, memory_storage):
        assert main(['validate', str(instance_file), '--out', 'report.json'], lab) == EXIT_PASS
        assert memory_storage.load_json('report') == {'valid': True, 'violations': []}

    def test_validate_reports_violations(self, tmp_path, lab, capsys):
        instance = Instance(ProblemClass.UNWEIGHTED, [Agent("a")], {"x": OnlineType("x", {"a": 1.0})},
                            ArrivalDistribution([[("x", 0.75), ("x", 0.5)]]))
        path = tmp_path / "heavy.json"
        save_instance(instance, path)
        assert main(['validate', str(path)], lab) == EXIT_FAIL
        assert "violation(s)" in capsys.readouterr().out

    def test_missing_file(self, tmp_path, lab):
        assert main(['validate', str(tmp_path / "nothing.json")], lab) == EXIT_USAGE

    def test_malformed_file(self, tmp_path, lab):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        assert main(['validate', str(path)], lab) == EXIT_USAGE


# =============================================================================
# LP and Decomposition Commands
# =============================================================================

@pytest.mark.unit
class TestLpAndDecompose:
    """Tests for lp solve and decompose."""

    def test_lp_solve(self, instance_file, lab, memory_storage):
        assert main(['lp', 'solve', str(instance_file), '--perturb', '5', '--seed', '1',
                     '--out', 'lp.json'], lab) == EXIT_PASS
        document = memory_storage.load_json('lp')
        assert set(document) == {'report', 'audit', 'allocation', 'perturbation'}
        assert document['perturbation']['directions'] == 5

    def test_lp_solve_csv_rows(self, instance_file, lab, memory_storage):
        assert main(['lp', 'solve', str(instance_file), '--out', 'x.csv', '--format', 'csv'], lab) == EXIT_PASS
        assert memory_storage.load_rows('x')

    def test_lp_solve_rejects_query_commit(self, tmp_path, lab):
        path = tmp_path / "qc.json"
        main(['gen', '--kind', 'query-commit', '--out', str(path)], lab)
        assert main(['lp', 'solve', str(path)], lab) == EXIT_USAGE

    def test_lp_solve_rejects_bad_tolerance(self, instance_file, lab):
        assert main(['lp', 'solve', str(instance_file), '--tol', '-1'], lab) == EXIT_USAGE

    def test_decompose(self, lab, memory_storage):
        assert main(['decompose', '--mu', 'a=0.5,b=0.5', '--eta', '0.3', '--out', 'dec.json'], lab) == EXIT_PASS
        document = memory_storage.load_json('dec')
        assert document['mu'] == {'a': 0.5, 'b': 0.5}
        assert sum(r['probability'] for r in document['distribution']) == pytest.approx(1.0)

    def test_decompose_bad_mu(self, lab):
        assert main(['decompose', '--mu', 'a=0.9,b=0.9'], lab) == EXIT_USAGE


# =============================================================================
# Simulation Commands
# =============================================================================

@pytest.mark.unit
class TestSimulationCommands:
    """Tests for simulate and qc run."""

    def test_simulate_generated_instance(self, lab, memory_storage):
        code = main(['simulate', '--algorithm', 'matching', '--trials', '1000', '--seed', '3',
                     '--out', 'sim.json'], lab)
        assert code == EXIT_PASS
        document = memory_storage.load_json('sim')
        assert set(document) == {'config', 'summary', 'verdicts'}
        assert document['summary']['trials'] == 1000
        assert document['verdicts']['passed']

    def test_simulate_instance_file(self, instance_file, lab, memory_storage):
        assert main(['simulate', '--instance', str(instance_file), '--trials', '300',
                     '--benchmark', 'exact-dp', '--out', 'sim.csv', '--format', 'csv'], lab) == EXIT_PASS
        assert len(memory_storage.load_rows('sim')) == 3

    def test_simulate_unknown_algorithm(self, lab):
        with pytest.raises(SystemExit) as excinfo:
            main(['simulate', '--algorithm', 'greedy'], lab)
        assert excinfo.value.code == EXIT_USAGE

    def test_qc_run_with_plans(self, tmp_path, lab, capsys):
        path = tmp_path / "qc.json"
        main(['gen', '--kind', 'query-commit', '--types', '2', '--agents', '3', '--density', '1.0',
              '--out', str(path)], lab)
        assert main(['qc', 'run', '--instance', str(path), '--trials', '300'], lab) == EXIT_PASS
        assert "Probe plan for" in capsys.readouterr().out

    def test_qc_run_rejects_non_iid(self, instance_file, lab):
        assert main(['qc', 'run', '--instance', str(instance_file), '--trials', '10'], lab) == EXIT_USAGE


# =============================================================================
# Rate and Verification Commands
# =============================================================================

@pytest.mark.unit
class TestRateCommands:
    """Tests for rates dump and verify."""

    def test_rates_dump_csv(self, lab, memory_storage):
        assert main(['rates', 'dump', '--kind', 'baseline', '--grid', '0:1:0.25', '--out', 'curve.csv'],
                    lab) == EXIT_PASS
        rows = memory_storage.load_rows('curve')
        assert [r['y'] for r in rows] == ['0.0', '0.25', '0.5', '0.75', '1.0']
        assert float(rows[0]['g']) == pytest.approx(1.0)

    def test_rates_dump_bad_grid(self, lab):
        assert main(['rates', 'dump', '--kind', 'baseline', '--grid', '1:0'], lab) == EXIT_USAGE

    def test_rates_dump_uses_multiway_settings(self, lab, memory_storage):
        lab.config.rates.multiway_grid = 0.1
        lab.config.rates.multiway_refine = False
        assert main(['rates', 'dump', '--kind', 'multiway-ocs-adwords', '--grid', '0.7:0.7:0.1',
                     '--out', 'mw.json'], lab) == EXIT_PASS
        coarse, _ = multiway_split(0.7, grid_step=0.1, refine=False)
        [row] = memory_storage.load_json('mw')['rows']
        assert row['g'] == pytest.approx(math.exp(-0.7) * coarse)

    def test_verify_curves(self, lab):
        assert main(['verify', 'curves', '--step', '0.01'], lab) == EXIT_PASS

    def test_verify_appendix_b_alias(self, lab, memory_storage):
        assert main(['verify', 'appendix-b', '--step', '0.01', '--out', 'checks.json'], lab) == EXIT_PASS
        assert memory_storage.load_json('checks')['passed']

    def test_verify_converse_jensen(self, lab, memory_storage):
        assert main(['verify', 'converse-jensen', '--instances', '2', '--out', 'cj.json'], lab) == EXIT_PASS
        rows = memory_storage.load_json('cj')['rows']
        assert {r['instance'] for r in rows} == {1, 2}
        assert all(r['verdict'] == 'PASS' for r in rows)

    def test_verify_converse_jensen_files(self, instance_file, lab):
        assert main(['verify', 'converse-jensen', str(instance_file)], lab) == EXIT_PASS

    def test_verify_oracles(self, lab, memory_storage):
        assert main(['verify', 'oracles', '--instances', '3', '--agents', '3', '--horizon', '4',
                     '--out', 'oracles.json'], lab) == EXIT_PASS
        rows = memory_storage.load_json('oracles')['rows']
        assert len(rows) == 3
        assert max(r['dp_gap'] for r in rows) <= 1e-12

    def test_verify_oracles_with_monte_carlo(self, lab, memory_storage):
        assert main(['verify', 'oracles', '--instances', '1', '--trials', '500', '--seed', '2',
                     '--out', 'oracles.json'], lab) == EXIT_PASS
        assert 'mc_sigmas' in memory_storage.load_json('oracles')['rows'][0]


# =============================================================================
# Stored Result Commands
# =============================================================================

@pytest.mark.unit
class TestResultCommands:
    """Tests for results list, show and delete."""

    def test_file_round_trip(self, tmp_path, test_config, capsys):
        lab = SocsLab(test_config)
        out_dir = tmp_path / "runs"
        assert main(['rates', 'dump', '--kind', 'baseline', '--grid', '0:1:0.5',
                     '--out', str(out_dir / 'curve.csv')], lab) == EXIT_PASS
        assert main(['decompose', '--mu', 'a=0.5,b=0.5', '--out', str(out_dir / 'dec.json')], lab) == EXIT_PASS
        capsys.readouterr()

        assert main(['results', 'list', '--dir', str(out_dir)], lab) == EXIT_PASS
        listing = capsys.readouterr().out
        assert "Stored results (2)" in listing
        assert "curve" in listing and "dec" in listing

        assert main(['results', 'show', 'dec', '--dir', str(out_dir)], lab) == EXIT_PASS
        assert '"mu"' in capsys.readouterr().out

        assert main(['results', 'delete', 'curve', '--dir', str(out_dir)], lab) == EXIT_PASS
        assert not (out_dir / 'curve.csv').exists()
        assert (out_dir / 'dec.json').exists()

    def test_injected_storage(self, lab, memory_storage, capsys):
        memory_storage.save_rows('verdicts', [{'agent': 'j1', 'verdict': 'PASS'}])
        assert main(['results', 'show', 'verdicts'], lab) == EXIT_PASS
        assert "j1" in capsys.readouterr().out
        assert main(['results', 'delete', 'verdicts'], lab) == EXIT_PASS
        assert memory_storage.list_results() == []

    @pytest.mark.parametrize("command", ['show', 'delete'])
    def test_unknown_name(self, command, lab):
        assert main(['results', command, 'nothing'], lab) == EXIT_USAGE


# =============================================================================
# Error Mapping Tests
# =============================================================================

@pytest.mark.unit
class TestErrorMapping:
    """Tests for exception to exit code mapping in main()."""

    def test_unexpected_error_exits_one(self, lab, mocker, capsys):
        mocker.patch("app.dump_curve", side_effect=RuntimeError("boom"))
        assert main(['rates', 'dump', '--kind', 'baseline'], lab) == EXIT_FAIL
        assert "Critical error occurred: boom" in capsys.readouterr().out

    def test_interrupt_exits_one(self, lab, mocker):
        mocker.patch("app.curve_property_checks", side_effect=KeyboardInterrupt)
        assert main(['verify', 'curves'], lab) == EXIT_FAIL

    def test_failing_check_exits_one(self, lab, mocker):
        mocker.patch("app.conservation_residual", return_value=1e-3)
        assert main(['decompose', '--mu', 'a=0.5,b=0.5'], lab) == EXIT_FAIL
