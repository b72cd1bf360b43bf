import pytest

from robust_lasso import conf as config
from robust_lasso.conf import ConfigError, load_config, worker_count


def test_defaults_have_every_section():
    assert set(config.conf.keys()) == {'solver', 'simulate', 'tuning', 'verify', 'bench'}
    assert config.conf.solver.max_iterations == 10000
    assert config.conf.tuning.delta == 0.1


def test_load_config_merges_over_defaults(tmp_path):
    path = tmp_path / 'study.yaml'
    path.write_text('solver:\n  tolerance: 1.0e-7\nbench:\n  axis_values: [8, 16]\n')
    cfg = load_config(str(path))
    assert cfg.solver.tolerance == 1e-7
    assert cfg.solver.max_iterations == 10000
    assert list(cfg.bench.axis_values) == [8, 16]
    # defaults untouched
    assert config.conf.solver.tolerance == 1e-9


def test_load_config_accepts_json(tmp_path):
    path = tmp_path / 'study.json'
    path.write_text('{"tuning": {"delta": 0.05}}')
    assert load_config(str(path)).tuning.delta == 0.05


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / 'empty.yaml'
    path.write_text('')
    assert load_config(str(path)).simulate.n == config.conf.simulate.n


@pytest.mark.parametrize('text', [
    'telemetry:\n  enabled: true\n',
    'solver:\n  tolerence: 1.0\n',
    '- just\n- a list\n',
    'solver: 3\n',
    'solver: [unclosed\n',
])
def test_load_config_rejects(tmp_path, text):
    path = tmp_path / 'bad.yaml'
    path.write_text(text)
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / 'absent.yaml'))


def test_worker_count(monkeypatch):
    assert worker_count(3) == 3
    monkeypatch.setenv(config.WORKERS_ENV, '2')
    assert worker_count() == 2
    monkeypatch.delenv(config.WORKERS_ENV)
    assert worker_count() == -1
    monkeypatch.setenv(config.WORKERS_ENV, 'many')
    with pytest.raises(ConfigError):
        worker_count()
