import json

import pytest

import cli
from cli import EXIT_LAW, EXIT_OK, EXIT_USAGE, cmd_verify, load_options, main
from lawcore import optimal_lr_sign_exact
from models import CheckResult, RunRecord
from parsers import ConfigError, CurveReader, FitFileParser, RunRecordReader
from writers import RunRecordWriter


@pytest.fixture(autouse=True)
def clean_env(monkeypatch, tmp_path):
    monkeypatch.delenv('SURGE_SEED', raising=False)
    monkeypatch.delenv('SURGE_JOBS', raising=False)
    monkeypatch.chdir(tmp_path)


def _runs_csv(path, batch_sizes=(8, 16, 32, 64, 128)):
    # S = 10 * (1 + 64/B) at the best lr of every batch size
    records = []
    for B in batch_sizes:
        S = 10 + 640 // B
        for seed in (1, 2):
            records.append(RunRecord(B, 0.01, seed, True, S, final_loss=0.1))
            records.append(RunRecord(B, 0.02, seed, True, S + 3,
                                     final_loss=0.2))
    RunRecordWriter().write_to_file(records, str(path))
    return str(path)


class TestPredict:
    def test_d2_model(self, config_dir, tmp_path, capsys):
        out = tmp_path / 'curves.csv'
        assert main(['predict', str(config_dir / 'model_d2.json'),
                     '--out', str(out)]) == EXIT_OK
        stdout = capsys.readouterr().out
        assert 'b_noise          3.14159' in stdout
        assert 'eps_max          0.707107' in stdout

        curves = {c.label: c for c in CurveReader().read_file(str(out))}
        assert list(curves) == ['exact', 'surge', 'sgd_alpha(0.5)',
                                'sgd_alpha(1)', 'large_batch']
        # the grid point nearest to pi on log(1, 4096, 97) is 2**(13/8)
        peak_B, peak_lr = curves['surge'].peak()
        assert peak_B == pytest.approx(2 ** (13 / 8), rel=1e-9)
        assert peak_lr == pytest.approx(0.7071, rel=0.01)

    def test_custom_range(self, config_dir, tmp_path):
        out = tmp_path / 'curves.csv'
        assert main(['predict', str(config_dir / 'model_d2.json'),
                     '--range', '1, 2, 4', '--variants', 'linear, sqrt',
                     '--out', str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == 'variant,B,value'
        assert len(lines) == 7

    def test_empty_variants(self, config_dir, tmp_path, capsys):
        assert main(['predict', str(config_dir / 'model_d2.json'),
                     '--variants', '', '--out',
                     str(tmp_path / 'c.csv')]) == EXIT_USAGE
        assert 'variants' in capsys.readouterr().err

    def test_diagonal_model_violates_law(self, tmp_path, capsys):
        model = tmp_path / 'diag.json'
        model.write_text(json.dumps({
            'mu': [1, 1], 'sigma': [1, 1],
            'hessian': {'kind': 'diagonal', 'values': [1, 2]}}))
        assert main(['predict', str(model), '--out',
                     str(tmp_path / 'c.csv')]) == EXIT_LAW
        assert 'LawViolationError' in capsys.readouterr().err

    def test_law_violation_writes_no_csv(self, tmp_path):
        # the exact curve alone is defined without off-diagonal curvature
        model = tmp_path / 'diag.json'
        model.write_text(json.dumps({
            'mu': [1, 1], 'sigma': [1, 1],
            'hessian': {'kind': 'diagonal', 'values': [1, 2]}}))
        out = tmp_path / 'c.csv'
        assert main(['predict', str(model), '--variants', 'exact',
                     '--out', str(out)]) == EXIT_LAW
        assert not out.exists()

    def test_missing_model_file(self, tmp_path):
        assert main(['predict', str(tmp_path / 'nope.json'), '--out',
                     str(tmp_path / 'c.csv')]) == EXIT_USAGE


class TestGrid:
    def test_smoke_grid(self, config_dir, tmp_path, capsys):
        outputs = []
        for name in ('a.csv', 'b.csv'):
            out = tmp_path / name
            assert main(['grid', str(config_dir / 'grid_smoke.json'),
                         '--out', str(out)]) == EXIT_OK
            outputs.append(out.read_bytes())
        assert outputs[0] == outputs[1]
        assert len(outputs[0].decode().splitlines()) == 25
        assert 'runs             24' in capsys.readouterr().out

    def test_explicit_workload_and_seed(self, config_dir, tmp_path):
        out = tmp_path / 'runs.csv'
        assert main(['--seed', '5', 'grid',
                     str(config_dir / 'quadratic_d32.json'),
                     str(config_dir / 'grid_smoke.json'),
                     '--out', str(out)]) == EXIT_OK
        records = RunRecordReader().read_file(str(out))
        assert len(records) == 24

    def test_malformed_grid(self, config_dir, tmp_path, capsys):
        grid = tmp_path / 'grid.json'
        grid.write_text(json.dumps({'batch_sizes': [8, 16], 'lrs': [0.001],
                                    'target_loss': 0.01}))
        assert main(['grid', str(config_dir / 'quadratic_d32.json'),
                     str(grid), '--out',
                     str(tmp_path / 'runs.csv')]) == EXIT_USAGE
        assert 'grid.rounds' in capsys.readouterr().err

    def test_grid_without_workload(self, tmp_path, capsys):
        grid = tmp_path / 'grid.json'
        grid.write_text(json.dumps({'batch_sizes': [8], 'lrs': [0.001],
                                    'rounds': 1, 'target_loss': 0.01}))
        assert main(['grid', str(grid), '--out',
                     str(tmp_path / 'runs.csv')]) == EXIT_USAGE
        assert 'grid.workload' in capsys.readouterr().err


class TestFit:
    def test_synthetic_runs(self, tmp_path, capsys):
        out = tmp_path / 'fit.json'
        assert main(['fit', _runs_csv(tmp_path / 'runs.csv'),
                     '--target-loss', '0.01', '--out', str(out)]) == EXIT_OK
        fit = FitFileParser().parse_file(str(out))
        assert fit.b_noise == pytest.approx(64.0, rel=1e-9)
        assert fit.s_min == pytest.approx(10.0, rel=1e-9)
        assert fit.target_loss == 0.01
        assert 'b_noise          64' in capsys.readouterr().out

    def test_single_batch_size(self, tmp_path):
        runs = _runs_csv(tmp_path / 'runs.csv', batch_sizes=(8,))
        assert main(['fit', runs, '--out',
                     str(tmp_path / 'fit.json')]) == EXIT_LAW


class TestPlot:
    def test_curves_runs_and_fit(self, config_dir, tmp_path):
        curves = tmp_path / 'curves.csv'
        assert main(['predict', str(config_dir / 'model_d2.json'),
                     '--range', 'log(1, 64, 13)', '--out',
                     str(curves)]) == EXIT_OK
        runs = _runs_csv(tmp_path / 'runs.csv')
        fit = tmp_path / 'fit.json'
        assert main(['fit', runs, '--out', str(fit)]) == EXIT_OK
        svg = tmp_path / 'surge.svg'
        assert main(['plot', '--curves', str(curves), '--runs', runs,
                     '--fit', str(fit), '--out', str(svg)]) == EXIT_OK
        assert '<svg' in svg.read_text()

    def test_header_only_curves(self, tmp_path, capsys):
        curves = tmp_path / 'curves.csv'
        curves.write_text('variant,B,value\n')
        assert main(['plot', '--curves', str(curves), '--out',
                     str(tmp_path / 'out.svg')]) == EXIT_USAGE
        assert 'no data rows' in capsys.readouterr().err

    def test_no_inputs(self, tmp_path):
        assert main(['plot', '--out', str(tmp_path / 'out.svg')]) \
            == EXIT_USAGE


def _fake_results(passed:bool) -> list:
    return [CheckResult('erf_series', True, 0.0, 0.0, 'abs 1e-7'),
            CheckResult('onestep_lr_mc', passed, 0.01, 0.0, 'rel 10%')]


class TestVerify:
    def test_report_and_exit_code(self, monkeypatch, tmp_path, capsys):
        calls = []

        def fake_run_verify(seed, trials, law):
            calls.append((seed, trials))
            return _fake_results(True)

        monkeypatch.setattr(cli, 'run_verify', fake_run_verify)
        out = tmp_path / 'report.txt'
        assert main(['--seed', '7', 'verify', '--out', str(out)]) == EXIT_OK
        assert calls == [(7, 100_000)]
        assert out.read_text() == capsys.readouterr().out
        assert out.read_text().endswith('2/2 checks passed\n')

    def test_failed_check(self, monkeypatch):
        monkeypatch.setattr(cli, 'run_verify',
                            lambda seed, trials, law: _fake_results(False))
        assert main(['verify']) == EXIT_LAW

    def test_corrupted_law(self, capsys):
        def doubled_law(inputs, B):
            return 2 * optimal_lr_sign_exact(inputs, B)

        assert cmd_verify(0, trials=5000, law=doubled_law) == EXIT_LAW
        assert 'FAIL' in capsys.readouterr().out


class TestOptions:
    def test_defaults(self):
        assert load_options() == cli.default_options

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv('SURGE_SEED', '11')
        monkeypatch.setenv('SURGE_JOBS', '3')
        options = load_options()
        assert options['seed'] == 11
        assert options['jobs'] == 3

    def test_bad_env_value(self, monkeypatch, capsys):
        monkeypatch.setenv('SURGE_JOBS', 'many')
        with pytest.raises(ConfigError):
            load_options()
        assert main(['verify']) == EXIT_USAGE
        assert 'SURGE_JOBS' in capsys.readouterr().err

    def test_options_file(self, tmp_path, monkeypatch):
        calls = []
        monkeypatch.setattr(cli, 'run_verify',
                            lambda seed, trials, law:
                            calls.append(trials) or _fake_results(True))
        (tmp_path / 'surge_options.json').write_text(
            json.dumps({'verify.trials': 5000}))
        assert main(['verify']) == EXIT_OK
        assert calls == [5000]

    def test_unknown_option(self, tmp_path):
        (tmp_path / 'surge_options.json').write_text(
            json.dumps({'colour': 'blue'}))
        assert main(['verify']) == EXIT_USAGE

    def test_usage_error(self):
        assert main(['predict']) == EXIT_USAGE
        assert main([]) == EXIT_USAGE
