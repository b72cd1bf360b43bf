import csv
import json

import pytest

from robust_lasso.bench import cli
from robust_lasso.bench.report import CSV_HEADER, SUITE_HEADER
from robust_lasso.verify import CoverageRecord


def _simulate(directory, *extra):
    argv = ['simulate', '--n', '80', '--d', '10', '--s', '2', '--o', '4', '--sigma', '0.5',
            '--adversary', 'sign_flip_large', '--seed', '3', '--output', str(directory)]
    return cli.main(argv + list(extra))


def test_tuning_prints_bundle(capsys):
    code = cli.main(['tuning', '--n', '1000', '--d', '50', '--s', '5', '--o', '10',
                     '--sigma', '1', '--c-lambda-o', '2'])
    assert code == cli.EXIT_OK
    payload = json.loads(capsys.readouterr().out)
    assert payload['penalties']['lambda_o'] == payload['bundle']['lambda_o']
    assert 'c1' in payload['conditions']
    assert set(payload['cond0_terms']) == {'A1B1', 'A1B2', 'A2B1', 'A2B2', 'total'}


def test_manual_tuning_needs_both_penalties():
    assert cli.main(['tuning', '--tuning', 'manual', '--lambda-s', '0.1']) == cli.EXIT_INVALID


def test_simulate_then_fit(tmp_path):
    instance = tmp_path / 'instance'
    assert _simulate(instance) == cli.EXIT_OK
    out = tmp_path / 'fit.json'
    code = cli.main(['fit', str(instance), '--c-lambda-o', '2', '--output', str(out)])
    assert code == cli.EXIT_OK
    payload = json.loads(out.read_text())
    assert payload['converged']
    assert payload['method'] == 'huber'
    assert len(payload['beta_hat']) == 10
    assert 'c_cut' in payload


def test_fit_extended_and_plain(tmp_path):
    instance = tmp_path / 'instance'
    _simulate(instance)
    for solver in ('extended', 'plain_lasso'):
        out = tmp_path / ('%s.json' % solver)
        assert cli.main(['fit', str(instance), '--solver', solver, '--c-lambda-o', '2',
                         '--output', str(out)]) == cli.EXIT_OK
        assert json.loads(out.read_text())['method'] == solver


def test_fit_reports_non_convergence(tmp_path):
    instance = tmp_path / 'instance'
    _simulate(instance)
    code = cli.main(['fit', str(instance), '--c-lambda-o', '2', '--max-iterations', '1',
                     '--output', str(tmp_path / 'fit.json')])
    assert code == cli.EXIT_NOT_CONVERGED


def test_fit_missing_instance(tmp_path):
    assert cli.main(['fit', str(tmp_path / 'absent')]) == cli.EXIT_INVALID


def test_simulate_rejects_bad_shape(tmp_path):
    assert _simulate(tmp_path / 'x', '--s', '20') == cli.EXIT_INVALID


def test_verify_single_check(tmp_path):
    out = tmp_path / 'suite.csv'
    code = cli.main(['verify', '--id', 'noise_supnorm', '--param', 'n=500',
                     '--param', 'delta=0.1', '--trials', '200', '--seed', '1',
                     '--output', str(out)])
    assert code == cli.EXIT_OK
    with open(str(out), newline='') as csvfile:
        reader = csv.DictReader(csvfile)
        assert reader.fieldnames == SUITE_HEADER
        rows = list(reader)
    assert rows[0]['id'] == 'noise_supnorm'
    assert rows[0]['trials'] == '200'


def test_verify_failure_exit_code(monkeypatch):
    monkeypatch.setattr(cli, 'run_suite',
                        lambda *args: [CoverageRecord('chisq', 100, 50, 0.95)])
    assert cli.main(['verify', '--id', 'chisq', '--seed', '1']) == cli.EXIT_VERIFY_FAILED


@pytest.mark.parametrize('argv', [
    ['verify', '--id', 'prop3', '--param', 'n=50', '--seed', '1', '--trials', '10'],
    ['verify', '--id', 'chisq', '--param', 'n=500'],
    ['verify', '--id', 'chisq', '--param', 'n', '--seed', '1'],
])
def test_verify_invalid_requests(argv):
    assert cli.main(argv) == cli.EXIT_INVALID


def test_verify_suite_from_config(tmp_path):
    config = tmp_path / 'suite.yaml'
    config.write_text('verify:\n'
                      '  master_seed: 3\n'
                      '  trials: 150\n'
                      '  suite:\n'
                      '    - id: width_sigma_ball\n'
                      '      params: {d: 4}\n'
                      '    - id: chisq\n'
                      '      params: {n: 400, delta: 0.1}\n')
    out = tmp_path / 'suite.csv'
    assert cli.main(['--config', str(config), 'verify', '--output', str(out)]) == cli.EXIT_OK
    assert len(out.read_text().splitlines()) == 3


def test_bad_config_is_invalid(tmp_path):
    config = tmp_path / 'bad.yaml'
    config.write_text('solver:\n  tolerence: 1.0\n')
    assert cli.main(['--config', str(config), 'tuning']) == cli.EXIT_INVALID


def test_rate_study_and_plot(tmp_path):
    config = tmp_path / 'study.yaml'
    config.write_text('bench:\n'
                      '  sweep_axis: n\n'
                      '  axis_values: [60, 90, 120]\n'
                      '  fixed: {d: 10, s: 2, o: 2, sigma: 0.5, adversary: sign_flip_large}\n'
                      '  tuning_methods: [paper, plain_lasso]\n')
    study_csv, study_svg = tmp_path / 'study.csv', tmp_path / 'study.svg'
    code = cli.main(['--config', str(config), '--workers', '1', 'rate-study', '--seed', '4',
                     '--csv', str(study_csv), '--svg', str(study_svg)])
    assert code == cli.EXIT_OK
    lines = study_csv.read_text().splitlines()
    assert lines[0] == ','.join(CSV_HEADER)
    assert len(lines) == 1 + 3 * 2
    assert 'id="curve-paper"' in study_svg.read_text()

    replot = tmp_path / 'replot.svg'
    assert cli.main(['plot', str(study_csv), str(replot)]) == cli.EXIT_OK
    assert 'id="curve-theory"' in replot.read_text()


def test_rate_study_needs_seed(tmp_path):
    assert cli.main(['rate-study', '--csv', str(tmp_path / 'x.csv')]) == cli.EXIT_INVALID


def test_plot_missing_csv(tmp_path):
    assert cli.main(['plot', str(tmp_path / 'absent.csv'),
                     str(tmp_path / 'x.svg')]) == cli.EXIT_IO


@pytest.mark.parametrize('extra', [
    ['--tolerance', '-1'],
    ['--max-iterations', '0'],
    ['--tuning', 'manual', '--lambda-s', '-0.1', '--lambda-o', '0.5'],
])
def test_fit_rejects_bad_numbers(tmp_path, extra):
    instance = tmp_path / 'instance'
    _simulate(instance)
    assert cli.main(['fit', str(instance)] + extra) == cli.EXIT_INVALID


def test_verify_unknown_id_is_invalid():
    assert cli.main(['verify', '--id', 'prop99', '--seed', '1']) == cli.EXIT_INVALID
