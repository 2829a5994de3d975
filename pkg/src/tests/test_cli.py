#!/usr/bin/env python3
"""
Test suite for the command-line surface
"""

import csv
import json
import os
import sys
from pathlib import Path

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', '..'))

from src import cli
from src.core.harness import RunLog, RunRow
from src.core.selftest import CheckResult, TABLE_TOLERANCE, TQC_TABLE, ACC_TABLE

SMOKE = str(Path(__file__).resolve().parents[2] / 'configs' / 'smoke.yaml')


def _read_table(path):
    with path.open(encoding='utf-8', newline='') as handle:
        return list(csv.DictReader(handle))


class TestBiasCommands:
    """Test cases for bias-table, ordering and bias-check"""

    def test_bias_table(self, out_dir, capsys):
        assert cli.main(['bias-table', '--out', str(out_dir)]) == cli.EXIT_OK
        tqc = _read_table(out_dir / 'tqc_coefficients.csv')
        acc = _read_table(out_dir / 'acc_coefficients.csv')
        assert list(tqc[0]) == ['k', 'effective_atoms', 'coefficient']
        for rows, expected in ((tqc, TQC_TABLE), (acc, ACC_TABLE)):
            assert [int(r['k']) for r in rows] == sorted(expected)
            for row in rows:
                assert float(row['coefficient']) == pytest.approx(expected[int(row['k'])], abs=TABLE_TOLERANCE)
        assert [int(r['effective_atoms']) for r in acc] == [98, 103, 108, 113, 118]
        assert (out_dir / 'resolved_config.yaml').is_file()
        assert 'TQC truncation coefficients, N=5, M=25' in capsys.readouterr().out

    def test_bias_table_flags(self, out_dir):
        code = cli.main(['bias-table', '--out', str(out_dir), '--n-critics', '2', '--m-atoms', '5',
                         '--beta', '1', '--k-values', '3', '4', '-o', 'bias.k_atoms=4'])
        assert code == cli.EXIT_OK
        rows = _read_table(out_dir / 'acc_coefficients.csv')
        assert [int(r['effective_atoms']) for r in rows] == [5, 7]

    def test_ordering_outside_regime_is_reported(self, out_dir, capsys):
        assert cli.main(['ordering', '--out', str(out_dir), '--mu', '0', '--sigma', '1', '--lambda', '0.7']) == 0
        payload = json.loads((out_dir / 'ordering.json').read_text(encoding='utf-8'))
        assert payload['ordering_satisfied'] is False
        assert payload['comparisons']['HyTQC < HyDARC'] is False
        assert payload['comparisons']['HyDARC < HyDATD3'] is True
        assert payload['biases']['HybridTD3'] == pytest.approx(-0.5642, abs=1e-4)
        assert json.loads(capsys.readouterr().out) == payload

    def test_strict_ordering_rejects_low_lambda(self, out_dir):
        assert cli.main(['ordering', '--out', str(out_dir), '--lambda', '0.3', '--strict']) == cli.EXIT_CONFIG

    def test_bias_check_writes_rows(self, out_dir):
        code = cli.main(['bias-check', '--out', str(out_dir), '--samples', '20000', '--shards', '2',
                         '--n-critics', '2', '--m-atoms', '5', '--k-atoms', '4', '--beta', '1'])
        assert code in (cli.EXIT_OK, cli.EXIT_CHECK_FAILED)
        rows = json.loads((out_dir / 'bias_check.json').read_text(encoding='utf-8'))
        assert [r['variant'] for r in rows] == ['HybridTD3', 'HyACC', 'HyTQC', 'HyDARC', 'HyDATD3']
        assert code == (cli.EXIT_OK if all(r['pass'] for r in rows) else cli.EXIT_CHECK_FAILED)

    def test_too_few_samples(self, out_dir):
        assert cli.main(['bias-check', '--out', str(out_dir), '--samples', '10']) == cli.EXIT_CONFIG


class TestUsageErrors:
    """Test cases for exit codes on bad input"""

    def test_missing_config(self, out_dir):
        assert cli.main(['train', '--out', str(out_dir), '--config', str(out_dir / 'nope.yaml')]) == cli.EXIT_CONFIG

    def test_unknown_flag(self):
        assert cli.main(['bias-table', '--frobnicate']) == cli.EXIT_CONFIG

    def test_missing_command(self):
        assert cli.main([]) == cli.EXIT_CONFIG

    def test_unknown_override_key(self, out_dir):
        assert cli.main(['bias-table', '--out', str(out_dir), '-o', 'bias.gamma=3']) == cli.EXIT_CONFIG

    def test_invalid_override_value(self, out_dir):
        assert cli.main(['ordering', '--out', str(out_dir), '-o', 'bias.sigma=-1']) == cli.EXIT_CONFIG

    def test_help(self):
        assert cli.main(['--help']) == cli.EXIT_OK

    def test_output_dir_from_environment(self, tmp_path, monkeypatch):
        target = tmp_path / 'from_env'
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(target))
        assert cli.main(['bias-table']) == cli.EXIT_OK
        assert (target / 'tqc_coefficients.csv').is_file()

    def test_missing_checkpoint_is_runtime_failure(self, out_dir):
        code = cli.main(['evaluate', '--out', str(out_dir), '--config', SMOKE])
        assert code == cli.EXIT_RUNTIME

    def test_aggregate_without_logs(self, out_dir):
        assert cli.main(['aggregate', '--out', str(out_dir)]) == cli.EXIT_RUNTIME

    def test_compare_without_logs(self, out_dir):
        assert cli.main(['compare', '--config', SMOKE, '--out', str(out_dir)]) == cli.EXIT_RUNTIME

    def test_compare_exit_follows_verdict(self, out_dir, capsys):
        for variant, ret, bias in (('hybrid_td3', 1e6, -1.0), ('ddpg', 2e6, 0.0), ('hydatd3', 0.0, 1.0)):
            log = RunLog(variant, 0)
            log.append(RunRow(0, 0, ret, bias, None, None))
            log.write_csv(out_dir / f'runlog_{variant}_0.csv')
        assert cli.main(['compare', '--config', SMOKE, '--out', str(out_dir)]) == cli.EXIT_CHECK_FAILED
        payload = json.loads(capsys.readouterr().out)
        assert payload['above_random'] is True and payload['matches_baseline'] is False
        code = cli.main(['compare', '--config', SMOKE, '--out', str(out_dir), '--baseline', 'hydatd3'])
        assert code == cli.EXIT_OK


class TestSelftestCommand:
    """Test cases for the selftest exit status"""

    def test_all_pass(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, 'run_selftest', lambda: [CheckResult('a', True), CheckResult('b', True)])
        assert cli.main(['selftest']) == cli.EXIT_OK
        assert '2/2 checks passed' in capsys.readouterr().out

    def test_failure_exit_code(self, monkeypatch, capsys):
        monkeypatch.setattr(cli, 'run_selftest', lambda: [CheckResult('a', True), CheckResult('b', False, 'x')])
        assert cli.main(['selftest']) == cli.EXIT_CHECK_FAILED
        out = capsys.readouterr().out
        assert 'FAIL  b  x' in out and '1/2 checks passed' in out


class TestTrainingCommands:
    """Test cases for train / evaluate / aggregate end to end"""

    def test_train_evaluate_aggregate(self, out_dir):
        common = ['--out', str(out_dir), '--config', SMOKE, '-o', 'run.seeds=[0]']
        assert cli.main(['train', *common]) == cli.EXIT_OK
        assert (out_dir / 'runlog_hybrid_td3_0.csv').is_file()
        assert cli.main(['evaluate', *common]) == cli.EXIT_OK
        assert (out_dir / 'eval_hybrid_td3_0.json').is_file()
        (out_dir / 'curves.csv').unlink()
        assert cli.main(['aggregate', *common]) == cli.EXIT_OK
        assert (out_dir / 'curves.csv').is_file()

    def test_override_selects_variant(self, out_dir):
        common = ['--out', str(out_dir), '--config', SMOKE, '-o', 'run.seeds=[0]', '-o', 'agent.variant=hyacc']
        assert cli.main(['train', *common, '--no-resume']) == cli.EXIT_OK
        assert (out_dir / 'summary_hyacc.json').is_file()
