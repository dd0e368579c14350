import json
import logging
import math
import os
from datetime import datetime
from typing import Any, Dict, Iterable, List

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUMMARY_SUFFIX = '_summary.json'
SUITE_SUMMARY = 'summary.json'


def log_error_to_file(error_message: str, directory: str = '.'):
    """Append a line to error.log in the run's output directory"""
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, 'error.log'), 'a', encoding='utf-8') as f:
        f.write(error_message + '\n')


def _jsonable(value: Any) -> Any:
    """Plain JSON types; non-finite floats become strings"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        if math.isinf(value):
            return 'inf' if value > 0 else '-inf'
        return value
    return value


class ReportEngine:
    """CSV tables and JSON summaries for experiment results"""

    def __init__(self):
        self.table_layouts = self._load_table_layouts()

    def _load_table_layouts(self) -> Dict[str, List[str]]:
        """Column order of every emitted table, keyed by '<experiment>/<table>'"""
        cells = ['x', 'y', 'distance', 't', 'square_sum', 'bound', 'metric_bound', 'proportion',
                 'wilson_upper', 'replicates', 'passed']
        return {
            'haar_identity/identity': ['x', 'y', 'delta', 'square_summability', 'product', 'relative_error',
                                       'passed'],
            'haar_identity/regularity': ['x', 'x_prime', 'y', 'delta_xy', 'delta_shift', 'variable',
                                         'realizations', 'identical'],
            'cz_sweep/norms': ['family', 'x', 'y', 'distance', 'estimate', 'ci_low', 'ci_high', 'exact',
                               'exact_within_ci', 'certified_envelope', 'passed'],
            'gradient_check/pairs': ['x', 'y', 'replicate', 'derivative', 'finite_difference', 'relative_error',
                                     'passed'],
            'cz_sweep/fits': ['family', 'slope', 'intercept', 'r2', 'target_slope', 'slope_tolerance',
                              'fitted_B', 'passed'],
            'concentration_smooth/cells': cells,
            'concentration_haar/cells': cells,
            'concentration_operator/cells': cells,
            'three_series/certificates': ['wavelet', 'model', 'x', 'y', 'truncation_A', 'terms',
                                          'series1_partial', 'series2_partial', 'series3_partial',
                                          'series1_tail', 'series2_tail', 'series3_tail', 'verdict', 'passed'],
            'operator_bound/norms': ['function', 'l2_norm', 'estimate', 'ci_low', 'ci_high', 'exact', 'bound',
                                     'passed'],
            'weak11/profile': ['scale', 'lambda', 'measure', 'product', 'chebyshev_bound', 'passed'],
            'weak11/constants': ['scale', 'l1_norm', 'fitted_C'],
            'subgauss_check/tails': ['model', 'nu', 't', 'proportion', 'wilson_upper', 'bound', 'passed'],
            'subgauss_check/log_mgf': ['model', 'nu', 'lambda', 'estimate', 'std_error', 'ci_low', 'ci_high',
                                       'bound', 'passed'],
            'subgauss_check/moments': ['nu', 'k', 'estimate', 'std_error', 'bound', 'passed'],
        }

    def ordered(self, experiment: str, name: str, frame: pd.DataFrame) -> pd.DataFrame:
        layout = self.table_layouts.get(f"{experiment}/{name}")
        if layout is None:
            return frame
        missing = [column for column in layout if column not in frame.columns]
        if missing:
            raise KeyError(f"table {experiment}/{name} lacks columns {missing}")
        return frame[layout]

    def build_summary(self, result) -> Dict[str, Any]:
        """JSON-ready summary; everything except generated_at is a function of the config"""
        tables = {name: self.ordered(result.experiment, name, frame).to_dict(orient='records')
                  for name, frame in sorted(result.tables.items())}
        return _jsonable({
            'schema_version': SCHEMA_VERSION,
            'experiment': result.experiment,
            'passed': result.passed,
            'config': result.config,
            'certified': result.certified,
            'fitted': result.fitted,
            'tables': tables,
            'errors': result.errors,
        })

    def write_table(self, path: str, frame: pd.DataFrame):
        try:
            with open(path, 'w', encoding='utf-8', newline='') as handle:
                handle.write(f"# schema_version={SCHEMA_VERSION}\n")
                frame.to_csv(handle, index=False, float_format='%.12g')
        except OSError as e:
            raise OSError(f"cannot write report table {path}: {e}") from e

    def write_json(self, path: str, summary: Dict[str, Any]):
        document = dict(summary, generated_at=datetime.now().isoformat(timespec='seconds'))
        try:
            with open(path, 'w', encoding='utf-8') as handle:
                json.dump(document, handle, indent=2, sort_keys=True)
                handle.write('\n')
        except OSError as e:
            raise OSError(f"cannot write report summary {path}: {e}") from e

    def emit(self, result, out_dir: str) -> Dict[str, str]:
        """Write <experiment>_<table>.csv for every table and <experiment>_summary.json"""
        try:
            os.makedirs(out_dir, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create output directory {out_dir}: {e}") from e
        paths = {}
        for name, frame in sorted(result.tables.items()):
            path = os.path.join(out_dir, f"{result.experiment}_{name}.csv")
            self.write_table(path, self.ordered(result.experiment, name, frame))
            paths[name] = path
        summary_path = os.path.join(out_dir, result.experiment + SUMMARY_SUFFIX)
        self.write_json(summary_path, self.build_summary(result))
        paths['summary'] = summary_path
        logger.info(f"Wrote {len(paths)} report files to {out_dir}")
        return paths

    def emit_suite(self, results: Iterable, out_dir: str) -> str:
        """Combined summary.json over several experiments"""
        results = list(results)
        os.makedirs(out_dir, exist_ok=True)
        combined = {
            'schema_version': SCHEMA_VERSION,
            'passed': all(result.passed for result in results),
            'experiments': {result.experiment: self.build_summary(result) for result in results},
        }
        path = os.path.join(out_dir, SUITE_SUMMARY)
        self.write_json(path, combined)
        return path


def emit_report(result, out_dir: str) -> Dict[str, str]:
    return ReportEngine().emit(result, out_dir)


def load_summary(path: str, drop_timestamp: bool = True) -> Dict[str, Any]:
    """Read a summary back, without generated_at by default"""
    with open(path, 'r', encoding='utf-8') as handle:
        summary = json.load(handle)
    if drop_timestamp:
        summary.pop('generated_at', None)
    return summary
