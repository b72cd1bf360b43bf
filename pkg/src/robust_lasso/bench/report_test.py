import csv
import json

import pytest

from robust_lasso.bench.experiment import CellResult, ExperimentRecord
from robust_lasso.bench.report import (CSV_HEADER, SUITE_HEADER, emit_csv, emit_plot,
                                       emit_suite_csv, read_csv)
from robust_lasso.verify import CoverageRecord, WidthEstimate


def _record():
    cells = []
    for index, value in enumerate((100, 200, 400)):
        for method, scale in (('paper', 1.0), ('plain_lasso', 2.0)):
            cells.append(CellResult(
                axis='n', axis_value=value, point_index=index, rep=0, method=method,
                error_sigma=scale / value ** 0.5, error_l2=0.1, error_l1=0.2, support_f1=0.75,
                theta_support_f1=1.0, c_cut=None if method == 'plain_lasso' else 1,
                iterations=42, r_theory=1.0 / value ** 0.5))
    return ExperimentRecord(None, tuple(cells))


def test_empty_record_writes_header_only(tmp_path):
    path = tmp_path / 'empty.csv'
    emit_csv(ExperimentRecord(None, ()), str(path))
    assert path.read_text() == ','.join(CSV_HEADER) + '\n'
    assert len(CSV_HEADER) == 13


def test_csv_round_trip(tmp_path):
    path = str(tmp_path / 'study.csv')
    record = _record()
    emit_csv(record, path)
    with open(path, newline='') as csvfile:
        rows = list(csv.DictReader(csvfile))
    assert rows[1]['c_cut'] == ''
    assert rows[0]['wall_ms'] == ''
    loaded = read_csv(path)
    assert loaded.cells == record.cells


def test_read_csv_rejects_other_files(tmp_path):
    path = tmp_path / 'other.csv'
    path.write_text('a,b\n1,2\n')
    with pytest.raises(ValueError):
        read_csv(str(path))


def test_suite_csv(tmp_path):
    path = str(tmp_path / 'suite.csv')
    records = [CoverageRecord('chisq', 100, 2, 0.9, {'n': 100}),
               WidthEstimate('sigma_l1_ball', 1.1, 0.01, 1.2, 200, {'l1_ball': 1.2})]
    emit_suite_csv(records, path)
    with open(path, newline='') as csvfile:
        reader = csv.DictReader(csvfile)
        assert reader.fieldnames == SUITE_HEADER
        rows = list(reader)
    assert rows[0]['passed'] == 'true'
    assert rows[0]['estimate'] == ''
    assert json.loads(rows[0]['params']) == {'n': 100}
    assert rows[1]['kind'] == 'width'


def test_plot_is_reproducible(tmp_path):
    first, second = tmp_path / 'a.svg', tmp_path / 'b.svg'
    emit_plot(_record(), str(first))
    emit_plot(_record(), str(second))
    text = first.read_text()
    assert first.read_bytes() == second.read_bytes()
    assert text.count('id="curve-') == 2 + 1
    assert 'id="curve-theory"' in text


def test_plot_rejects_empty_record(tmp_path):
    with pytest.raises(ValueError):
        emit_plot(ExperimentRecord(None, ()), str(tmp_path / 'x.svg'))
