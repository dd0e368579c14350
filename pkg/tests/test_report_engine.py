import json
import math
import os

import numpy as np
import pandas as pd
import pytest

from models.experiments import ExperimentResult
from utils.report_engine import (SCHEMA_VERSION, ReportEngine, _jsonable, emit_report, load_summary,
                                 log_error_to_file)


@pytest.fixture
def result():
    profile = pd.DataFrame({'product': [0.5, 0.25], 'measure': [0.05, 0.00025], 'lambda': [10.0, 1000.0],
                            'scale': [1.0, 1.0]})
    constants = pd.DataFrame({'fitted_C': [0.75], 'l1_norm': [1.0], 'scale': [1.0]})
    return ExperimentResult('weak11', {'experiment': 'weak11', 'seed': 1},
                            tables={'profile': profile, 'constants': constants},
                            fitted={'weak11_C': 0.75}, checks={'scale_invariant': True})


def read_table(path):
    with open(path) as handle:
        header = handle.readline().strip()
    return header, pd.read_csv(path, comment='#')


def test_jsonable():
    assert _jsonable({'a': np.float64(1.5), 'b': np.int64(3), 'c': np.bool_(True)}) == {'a': 1.5, 'b': 3, 'c': True}
    assert _jsonable([math.nan, math.inf, -math.inf]) == ['nan', 'inf', '-inf']
    assert _jsonable(np.array([1.0, 2.0])) == [1.0, 2.0]
    assert _jsonable({1: (2, 3)}) == {'1': [2, 3]}


def test_emit_writes_tables_in_layout_order(tmp_path, result):
    paths = ReportEngine().emit(result, str(tmp_path))
    assert set(paths) == {'profile', 'constants', 'summary'}
    header, frame = read_table(paths['profile'])
    assert header == f"# schema_version={SCHEMA_VERSION}"
    assert list(frame.columns) == ['scale', 'lambda', 'measure', 'product']
    _, constants = read_table(os.path.join(str(tmp_path), 'weak11_constants.csv'))
    assert list(constants.columns) == ['scale', 'l1_norm', 'fitted_C']


def test_summary(tmp_path, result):
    paths = emit_report(result, str(tmp_path))
    with open(paths['summary']) as handle:
        assert 'generated_at' in json.load(handle)
    summary = load_summary(paths['summary'])
    assert 'generated_at' not in summary
    assert summary['schema_version'] == SCHEMA_VERSION
    assert summary['experiment'] == 'weak11' and summary['passed'] is True
    assert summary['fitted'] == {'weak11_C': 0.75}
    assert summary['tables']['constants'] == [{'scale': 1.0, 'l1_norm': 1.0, 'fitted_C': 0.75}]
    assert summary['errors'] == []


def test_summary_is_a_function_of_the_result(tmp_path, result):
    first = load_summary(emit_report(result, str(tmp_path / 'a'))['summary'])
    second = load_summary(emit_report(result, str(tmp_path / 'b'))['summary'])
    assert first == second


def test_missing_column(result):
    result.tables['constants'] = result.tables['constants'].drop(columns=['l1_norm'])
    with pytest.raises(KeyError, match='l1_norm'):
        ReportEngine().build_summary(result)


def test_unknown_tables_pass_through():
    frame = pd.DataFrame({'b': [1], 'a': [2]})
    assert list(ReportEngine().ordered('weak11', 'extra', frame).columns) == ['b', 'a']


def test_suite_summary(tmp_path, result):
    failed = ExperimentResult('subgauss_check', {}, errors=[{'cell': '*', 'status': 'error', 'error': 'boom'}])
    path = ReportEngine().emit_suite([result, failed], str(tmp_path))
    assert os.path.basename(path) == 'summary.json'
    summary = load_summary(path)
    assert summary['passed'] is False
    assert set(summary['experiments']) == {'weak11', 'subgauss_check'}
    assert summary['experiments']['subgauss_check']['errors'][0]['error'] == 'boom'


def test_unwritable_directory(tmp_path, result):
    blocker = tmp_path / 'file'
    blocker.write_text('')
    with pytest.raises(OSError, match='cannot create output directory'):
        ReportEngine().emit(result, str(blocker / 'out'))


def test_error_log(tmp_path):
    directory = str(tmp_path / 'logs')
    log_error_to_file('first', directory)
    log_error_to_file('second', directory)
    with open(os.path.join(directory, 'error.log')) as handle:
        assert handle.read().splitlines() == ['first', 'second']
