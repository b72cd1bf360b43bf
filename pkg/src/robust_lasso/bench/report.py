"""CSV and SVG output for rate studies and verification suites."""
import csv
import json
import logging
import math

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from robust_lasso.bench.experiment import CellResult, ExperimentRecord  # noqa: E402

logger = logging.getLogger(__name__)

FLOAT_FORMAT = '%.17g'
CSV_HEADER = ['axis', 'axis_value', 'rep', 'method', 'error_sigma', 'error_l2', 'error_l1',
              'support_f1', 'theta_support_f1', 'c_cut', 'iterations', 'wall_ms', 'r_theory']
SUITE_HEADER = ['kind', 'id', 'trials', 'failures', 'nominal_level', 'empirical_coverage',
                'wilson_halfwidth', 'passed', 'estimate', 'std_error', 'bound', 'params']
FLOAT_COLUMNS = ('error_sigma', 'error_l2', 'error_l1', 'support_f1', 'theta_support_f1',
                 'wall_ms', 'r_theory')
INT_COLUMNS = ('axis_value', 'rep', 'c_cut', 'iterations')
SVG_RC = {'svg.hashsalt': 'robust_lasso', 'svg.fonttype': 'none'}


def _cell(value):
    if value is None:
        return ''
    if isinstance(value, (bool, np.bool_)):
        return 'true' if value else 'false'
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def _write_rows(path, header, rows):
    try:
        with open(path, 'w', newline='') as csvfile:
            writer = csv.DictWriter(csvfile, fieldnames=header, lineterminator='\n')
            writer.writeheader()
            writer.writerows(dict((k, _cell(row.get(k))) for k in header) for row in rows)
    except OSError as exc:
        logger.error('could not write %s', path)
        raise OSError('could not write %s: %s' % (path, exc))


def emit_csv(record, path):
    rows = [{'axis': c.axis, 'axis_value': c.axis_value, 'rep': c.rep, 'method': c.method,
             'error_sigma': c.error_sigma, 'error_l2': c.error_l2, 'error_l1': c.error_l1,
             'support_f1': c.support_f1, 'theta_support_f1': c.theta_support_f1,
             'c_cut': c.c_cut, 'iterations': c.iterations, 'wall_ms': c.wall_ms,
             'r_theory': c.r_theory} for c in record.cells]
    _write_rows(path, CSV_HEADER, rows)
    logger.info('wrote %d rows to %s', len(rows), path)


def read_csv(path):
    """Parse a file written by :func:`emit_csv` back into an ExperimentRecord."""
    try:
        with open(path, newline='') as csvfile:
            reader = csv.DictReader(csvfile)
            if reader.fieldnames != CSV_HEADER:
                raise ValueError('%s does not have the rate study header' % path)
            rows = list(reader)
    except OSError as exc:
        raise OSError('could not read %s: %s' % (path, exc))

    point_of = dict((v, i) for i, v in enumerate(sorted(set(int(r['axis_value']) for r in rows))))
    cells = []
    for row in rows:
        values = {}
        for key in FLOAT_COLUMNS:
            values[key] = float(row[key]) if row[key] != '' else None
        for key in INT_COLUMNS:
            values[key] = int(row[key]) if row[key] != '' else None
        cells.append(CellResult(axis=row['axis'], method=row['method'],
                                point_index=point_of[values['axis_value']], **values))
    return ExperimentRecord(None, tuple(cells))


def emit_suite_csv(records, path):
    rows = []
    for record in records:
        row = record.to_row()
        row['params'] = json.dumps(row['params'], sort_keys=True, default=jsonable)
        rows.append(row)
    _write_rows(path, SUITE_HEADER, rows)


def jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError('%r is not JSON serialisable' % (value,))


def _scale(values):
    return 'log' if all(v > 0.0 for v in values) else 'symlog'


def emit_plot(record, path, metric='error_sigma'):
    """Log-log median ``metric`` against the sweep axis, one curve per method.

    The theoretical rate is drawn as an extra curve. Each curve carries an
    SVG id ``curve-<method>`` (``curve-theory`` for the overlay).
    """
    if not record.cells:
        raise ValueError('cannot plot an empty record')
    axis = record.cells[0].axis
    with matplotlib.rc_context(SVG_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.5))
        xs_all, ys_all = [], []
        for method in record.methods:
            pairs = record.medians(method, metric)
            xs, ys = [x for x, _ in pairs], [y for _, y in pairs]
            ax.plot(xs, ys, marker='o', label=method, gid='curve-%s' % method)
            xs_all += xs
            ys_all += ys
        theory = record.theory()
        if theory:
            ax.plot([x for x, _ in theory], [r for _, r in theory], linestyle='--',
                    color='black', label='theory', gid='curve-theory')
            xs_all += [x for x, _ in theory]
            ys_all += [r for _, r in theory]
        ax.set_xscale(_scale(xs_all))
        ax.set_yscale(_scale([y for y in ys_all if math.isfinite(y)]))
        ax.set_xlabel(axis)
        ax.set_ylabel('median %s' % metric)
        ax.legend()
        try:
            fig.savefig(path, format='svg', metadata={'Date': None})
        except OSError as exc:
            logger.error('could not write %s', path)
            raise OSError('could not write %s: %s' % (path, exc))
        finally:
            plt.close(fig)
    logger.info('wrote plot to %s', path)
