import logging
import math

import numpy as np
import pytest

from robust_lasso.bench.experiment import (CellResult, ExperimentRecord, ExperimentSpec,
                                           fit_power_law, power_law, run_experiment,
                                           support_f1)
from robust_lasso.bench.report import emit_csv
from robust_lasso.core import InstanceError
from robust_lasso.tuning import ParameterError

FIXED = {'d': 10, 's': 2, 'o': 3, 'sigma': 0.5, 'adversary': 'sign_flip_large'}


def _spec(**overrides):
    values = dict(sweep_axis='n', axis_values=(60, 90, 120), master_seed=5, fixed=FIXED,
                  repetitions=2)
    values.update(overrides)
    return ExperimentSpec(**values)


def _cell(value, method, error, rep=0):
    return CellResult(axis='n', axis_value=value, point_index=0, rep=rep, method=method,
                      error_sigma=error, error_l2=error, error_l1=error, support_f1=1.0,
                      theta_support_f1=1.0, c_cut=0, iterations=10)


def test_power_law_exact():
    xs = [100, 200, 400, 800]
    fit = power_law(xs, [3.0 / math.sqrt(x) for x in xs])
    assert fit.exponent == pytest.approx(-0.5, abs=1e-10)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-10)
    assert fit.r_squared == pytest.approx(1.0)
    assert fit.points == 4


def test_power_law_constant():
    fit = power_law([1, 2, 4, 8], [0.7] * 4)
    assert fit.exponent == pytest.approx(0.0, abs=1e-12)


def test_power_law_rejects_bad_input():
    with pytest.raises(ValueError):
        power_law([1, 2], [1.0, 0.5])
    with pytest.raises(ValueError):
        power_law([1, 2, 3], [1.0, 0.0, 0.5])


def test_support_f1():
    assert support_f1([1, 0, 0], [1e-3, 0, 0]) == 1.0
    assert support_f1([1, 1, 0, 0], [1, 0, 1, 0]) == pytest.approx(0.5)
    assert support_f1([0, 0], [1e-12, 0]) == 1.0
    assert support_f1([1, 0], [0, 0]) == 0.0


def test_record_medians_and_methods():
    cells = (_cell(10, 'paper', 1.0), _cell(10, 'paper', 3.0, rep=1), _cell(10, 'paper', 2.0,
                                                                            rep=2),
             _cell(20, 'paper', 0.5), _cell(10, 'plain_lasso', 4.0))
    record = ExperimentRecord(None, cells)
    assert record.methods == ['paper', 'plain_lasso']
    assert record.axis_values == [10, 20]
    assert record.medians('paper') == [(10, 2.0), (20, 0.5)]
    assert record.theory() == []
    with pytest.raises(ValueError):
        record.medians('paper', 'accuracy')


def test_spec_validation():
    with pytest.raises(ParameterError):
        _spec(sweep_axis='sigma')
    with pytest.raises(ParameterError):
        _spec(axis_values=(90, 60))
    with pytest.raises(ParameterError):
        _spec(axis_values=())
    with pytest.raises(ParameterError):
        _spec(tuning_methods=('paper', 'oracle'))
    with pytest.raises(ParameterError):
        _spec(master_seed=None)
    with pytest.raises(ParameterError):
        _spec(repetitions=0)
    with pytest.raises(ParameterError):
        _spec(recipe_scale=0.0)
    # o >= n at the second point
    with pytest.raises(InstanceError):
        _spec(sweep_axis='o', axis_values=(60, 200), fixed={'n': 100, 'd': 10, 's': 2})


def test_spec_from_conf_drops_output_paths():
    section = {'sweep_axis': 'o', 'axis_values': [2, 4], 'fixed': {'n': 80, 'd': 10, 's': 2},
               'repetitions': 1, 'tuning_methods': ['paper'], 'master_seed': None,
               'delta': 0.1, 'c_lambda_o': 2.0, 'gamma': 1.0, 'kappa': 1.0, 'c0': 5.0,
               'record_timing': False, 'csv': 'out.csv', 'svg': None}
    spec = ExperimentSpec.from_conf(section, {'tolerance': 1e-8}, master_seed=9)
    assert spec.master_seed == 9
    assert spec.solver == {'tolerance': 1e-8}
    assert spec.axis_values == (2, 4)
    assert spec.instance_spec(1, 0).o == 4


def test_instance_seeds_differ_by_point_and_rep():
    spec = _spec()
    seeds = {spec.instance_spec(p, r).seed for p in range(3) for r in range(2)}
    assert len(seeds) == 6


def test_run_experiment_cells():
    spec = _spec()
    record = run_experiment(spec)
    assert len(record.cells) == 3 * 2 * 3
    assert [c.method for c in record.cells[:3]] == list(spec.tuning_methods)
    for cell in record.cells:
        assert cell.error_sigma >= 0.0
        assert 0.0 <= cell.support_f1 <= 1.0
        assert cell.wall_ms is None
        assert cell.r_theory is not None
        if cell.method == 'plain_lasso':
            assert cell.c_cut is None
        else:
            assert cell.c_cut is not None


def test_run_experiment_is_deterministic(tmp_path):
    spec = _spec(repetitions=1)
    first, second = str(tmp_path / 'a.csv'), str(tmp_path / 'b.csv')
    emit_csv(run_experiment(spec, n_jobs=1), first)
    emit_csv(run_experiment(spec, n_jobs=2), second)
    with open(first, 'rb') as a, open(second, 'rb') as b:
        assert a.read() == b.read()


def test_all_zero_points_are_reported(caplog):
    # the unscaled recipe lambda_s is far above |X^T y| / n at these sizes
    spec = _spec(repetitions=1, tuning_methods=('paper', 'nguyen_tran'))
    with caplog.at_level(logging.WARNING, logger='robust_lasso.bench.experiment'):
        record = run_experiment(spec)
    assert record.zero_points() == [('paper', 60), ('paper', 90), ('paper', 120)]
    assert all(c.nonzeros == 0 for c in record.cells if c.method == 'paper')
    assert 'returned beta_hat = 0 in every repetition' in caplog.text


def test_recipe_scale_shrinks_only_the_sparsity_penalty():
    spec = _spec(repetitions=1, recipe_scale=1e-3, tuning_methods=('paper',))
    record = run_experiment(spec)
    assert record.zero_points() == []
    assert all(c.nonzeros > 0 for c in record.cells)
    assert spec.to_dict()['recipe_scale'] == 1e-3


def test_record_timing():
    record = run_experiment(_spec(axis_values=(60,), repetitions=1, record_timing=True,
                                  tuning_methods=('paper',)))
    assert all(c.wall_ms is not None and c.wall_ms >= 0.0 for c in record.cells)


@pytest.mark.slow
def test_n_sweep_exponent_without_outliers():
    spec = ExperimentSpec(sweep_axis='n', axis_values=(250, 500, 1000, 2000, 4000),
                          master_seed=2024, fixed={'d': 100, 's': 5, 'o': 0, 'sigma': 1.0},
                          repetitions=40, tuning_methods=('paper',))
    record = run_experiment(spec)
    medians = [m for _, m in record.medians('paper')]
    assert all(b < a for a, b in zip(medians, medians[1:]))
    fit = fit_power_law(record, 'paper')
    assert -0.65 <= fit.exponent <= -0.35
    assert np.isfinite(fit.r_squared)


@pytest.mark.slow
def test_o_sweep_exponent_and_baselines():
    spec = ExperimentSpec(sweep_axis='o', axis_values=(8, 16, 32, 64, 128), master_seed=20170,
                          fixed={'n': 2000, 'd': 100, 's': 5, 'sigma': 1.0,
                                 'adversary': 'residual_aligned(2)'},
                          repetitions=40, c_lambda_o=2.0, recipe_scale=0.016)
    record = run_experiment(spec)
    assert record.zero_points() == []
    exponent = fit_power_law(record, 'paper').exponent
    assert 0.6 <= exponent <= 1.4
    paper = dict(record.medians('paper'))
    for method in ('nguyen_tran', 'plain_lasso'):
        baseline = dict(record.medians(method))
        larger = all(baseline[o] > paper[o] for o in paper if o >= 32)
        assert fit_power_law(record, method).exponent <= exponent - 0.25 or larger, method
