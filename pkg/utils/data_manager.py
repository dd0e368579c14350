import copy
import logging
import math
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, List, Optional, Tuple

import yaml

from config import Config, ThoroughConfig
from models.dyadic import as_point
from models.errors import ConfigError, DomainError
from models.randkernel import KernelJob
from models.subgauss import DISTRIBUTIONS, CoefficientModel
from models.wavelets import HAAR, MEYER

logger = logging.getLogger(__name__)

EXPERIMENTS = (
    'haar_identity',
    'cz_sweep',
    'gradient_check',
    'concentration_smooth',
    'concentration_haar',
    'concentration_operator',
    'three_series',
    'operator_bound',
    'weak11',
    'subgauss_check',
)

MIN_REPLICATES = {
    'haar_identity': 1,
    'cz_sweep': 100,
    'gradient_check': 1,
    'concentration_smooth': 1000,
    'concentration_haar': 1000,
    'concentration_operator': 1000,
    'three_series': 1,
    'operator_bound': 1000,
    'weak11': 10,
    'subgauss_check': 1000,
}

# sections of a config document; anything else is rejected
SECTIONS = ('experiment', 'wavelet', 'model', 'job', 'sweep', 'replicates', 'seed', 'output',
            'certificates', 'threads', 'chunk_size')


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully resolved experiment configuration"""

    experiment: str
    wavelet: Dict[str, Any]
    model: Dict[str, Any]
    job: Dict[str, Any]
    sweep: Dict[str, Any]
    replicates: int
    seed: int
    confidence: float
    tolerance: float
    chunk_size: int
    output_dir: str = field(default='results', compare=False)
    threads: int = field(default=1, compare=False)

    def kernel_job(self) -> KernelJob:
        return KernelJob(**self.job)

    def coefficient_model(self, block: Optional[Dict[str, Any]] = None) -> CoefficientModel:
        return CoefficientModel.from_dict(block if block is not None else self.model)

    def echo(self) -> Dict[str, Any]:
        """
        Plain dict that rebuilds this config through ExperimentConfigManager.build(data=...).

        The output directory and thread count are left out: neither changes
        a single number in the results.
        """
        return {
            'experiment': self.experiment,
            'wavelet': copy.deepcopy(self.wavelet),
            'model': copy.deepcopy(self.model),
            'job': copy.deepcopy(self.job),
            'sweep': copy.deepcopy(self.sweep),
            'replicates': self.replicates,
            'seed': self.seed,
            'certificates': {'confidence': self.confidence, 'tolerance': self.tolerance},
            'chunk_size': self.chunk_size,
        }


class ExperimentConfigManager:
    """Built-in experiment configurations, YAML loading and validation"""

    def __init__(self, settings=Config):
        self.settings = settings
        self.experiment_configs = self._load_experiment_configs()

    def _load_experiment_configs(self) -> Dict[str, Dict[str, Any]]:
        """Load built-in experiment configurations, one per CLI subcommand"""
        gaussian = {'dist': 'gaussian', 'nu': 1.0, 'mu0': 0.0}
        return {
            'haar_identity': {
                'name': 'Haar square-summability identity',
                'description': 'square_summability * delta^2 = 4/3 on random dyadic pairs, '
                               'plus bitwise regularity on admissible triples',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': 10,
                    'sweep': {'pairs': 500, 'max_depth': 16, 'triples': 1000},
                }
            },
            'cz_sweep': {
                'name': 'Calderon-Zygmund size and gradient sweep',
                'description': 'Monte Carlo L2(Omega) norms of the kernel across distance decades',
                'config': {
                    'wavelet': {'kind': MEYER},
                    'model': gaussian,
                    'replicates': 10000,
                    'sweep': {
                        'families': ['haar', 'smooth', 'gradient'],
                        'haar_exponents': list(range(0, 13)),
                        'smooth_exponents': list(range(2, 11)),
                        'pairs_per_distance': 4,
                    },
                }
            },
            'gradient_check': {
                'name': 'Gradient consistency',
                'description': 'Analytic x-derivative of the smooth kernel against central differences '
                               'on random pairs and paths',
                'config': {
                    'wavelet': {'kind': MEYER},
                    'model': gaussian,
                    'replicates': 1,
                    'sweep': {'pairs': 100, 'min_distance': 0.05, 'max_distance': 1.0, 'step': 1e-6,
                              'tolerance': 1e-4},
                }
            },
            'concentration_smooth': {
                'name': 'Concentration of the smooth kernel',
                'description': 'Empirical tails of K(x, y) - E K(x, y) against the sharp subgaussian bound',
                'config': {
                    'wavelet': {'kind': MEYER},
                    'model': gaussian,
                    'replicates': None,
                    'sweep': {'pairs': [[0.3, 1.3], [0.3, 0.8], [0.3, 0.55]], 'bound_targets': [0.1, 0.01]},
                }
            },
            'concentration_haar': {
                'name': 'Concentration of the Haar kernel',
                'description': 'Empirical tails against 2 exp(-3 delta^2 t^2 / (16 nu))',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': None,
                    'sweep': {'distances': [1.0, 0.5, 0.25], 'bound_targets': [0.1, 0.01]},
                }
            },
            'concentration_operator': {
                'name': 'Concentration of T f at sample points',
                'description': 'Empirical tails of T f(x) - E T f(x) against the exact operator bound',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': None,
                    'sweep': {'function': {'kind': 'random', 'replicate': 0},
                              'points': [0.1, 0.3, 0.6, 0.9], 'bound_targets': [0.1, 0.01]},
                }
            },
            'three_series': {
                'name': 'Three-series certificates',
                'description': 'Kolmogorov three-series partial sums and certified remainders per pair',
                'config': {
                    'wavelet': {'kind': MEYER},
                    'model': gaussian,
                    'replicates': 1,
                    'sweep': {
                        'wavelets': [HAAR, MEYER],
                        'models': [gaussian, {'dist': 'bounded_uniform', 'a': -1.0, 'b': 1.0}],
                        'pairs': 20,
                        'min_distance': 0.125,
                        'max_distance': 1.0,
                        'truncations': [0.5, 1.0, 2.0],
                    },
                }
            },
            'operator_bound': {
                'name': 'Vector-valued L2 bound for T',
                'description': 'Monte Carlo norm of T f against (sqrt(8 nu) + sum E|a_I|) |f|_2',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': 1000,
                    'sweep': {'functions': 20},
                }
            },
            'weak11': {
                'name': 'Weak (1,1) profile',
                'description': 'lambda * |{|T f| > lambda}| / |f|_1 for a unit-mass spike',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': 200,
                    'sweep': {'spike': {'center': 0.5, 'width': 2.0 ** -8, 'mass': 1.0},
                              'lambda_min': 0.1, 'lambda_max': 100.0, 'lambda_count': 13,
                              'scales': [1.0, 10.0]},
                }
            },
            'subgauss_check': {
                'name': 'Subgaussian calculus checks',
                'description': 'Tails, log-MGF and central moments of the shipped coefficient laws',
                'config': {
                    'wavelet': {'kind': HAAR},
                    'model': gaussian,
                    'replicates': None,
                    'sweep': {
                        'models': [gaussian, {'dist': 'rademacher'},
                                   {'dist': 'bounded_uniform', 'a': -1.0, 'b': 1.0}],
                        't_multipliers': [0.5, 1.0, 1.5, 2.0, 2.5],
                        'lambdas': [-1.0, -0.5, 0.5, 1.0],
                        'moment_nus': [0.5, 1.0, 2.0],
                        'moment_terms': 4,
                        'k_max': 4,
                    },
                }
            },
        }

    def list_experiments(self) -> List[Dict[str, str]]:
        return [{'id': key, 'name': value['name'], 'description': value['description']}
                for key, value in self.experiment_configs.items()]

    def get_experiment_config(self, experiment_id: str) -> Dict[str, Any]:
        """Get a copy of a built-in experiment configuration"""
        entry = self.experiment_configs.get(experiment_id)
        if entry is None:
            raise ConfigError('experiment', f"unknown experiment '{experiment_id}'")
        return copy.deepcopy(entry['config'])

    def load_file(self, path: str) -> Dict[str, Any]:
        """Read a YAML config document"""
        try:
            with open(path, 'r', encoding='utf-8') as handle:
                data = yaml.safe_load(handle)
        except OSError as e:
            raise ConfigError('config', f"cannot read {path}: {e}") from e
        except yaml.YAMLError as e:
            raise ConfigError('config', f"{path} is not valid YAML: {e}") from e
        if data is None:
            return {}
        if not isinstance(data, dict):
            raise ConfigError('config', f"{path} must hold a mapping of sections")
        return data

    def _defaults(self, settings) -> Dict[str, Any]:
        return {
            'wavelet': {'kind': HAAR, 'table': settings.MEYER_TABLE_PATH, 'radius': settings.MEYER_RADIUS,
                        'step': settings.MEYER_STEP, 'tail_eps': settings.MEYER_TAIL_EPS,
                        'ortho_tol': settings.ORTHO_TOL},
            'job': {'scale_min': settings.SCALE_MIN, 'scale_max': settings.SCALE_MAX,
                    'tail_tol': settings.TAIL_TOL, 'grid_depth': settings.GRID_DEPTH},
            'seed': settings.MASTER_SEED,
            'certificates': {'confidence': settings.CONFIDENCE, 'tolerance': settings.CERTIFICATE_TOL},
            'threads': settings.THREADS,
        }

    def build(self, experiment_id: Optional[str] = None, config_path: Optional[str] = None,
              data: Optional[Dict[str, Any]] = None, seed: Optional[int] = None,
              replicates: Optional[int] = None, out_dir: Optional[str] = None,
              thorough: bool = False, threads: Optional[int] = None) -> ExperimentConfig:
        """
        Resolve a config: Config defaults, then the built-in experiment, then
        the YAML file, then `data`, then the command-line overrides.
        """
        layers = []
        if config_path:
            layers.append(self.load_file(config_path))
        if data:
            layers.append(data)
        for layer in layers:
            unknown = sorted(set(layer) - set(SECTIONS))
            if unknown:
                raise ConfigError(unknown[0], "unknown config section")
            named = layer.get('experiment')
            if named is not None and experiment_id is not None and named != experiment_id:
                raise ConfigError('experiment', f"config names '{named}' but '{experiment_id}' was requested")
            experiment_id = named or experiment_id
        if experiment_id not in EXPERIMENTS:
            raise ConfigError('experiment', f"unknown experiment '{experiment_id}'")

        settings = ThoroughConfig if thorough else self.settings
        raw = _deep_merge(self._defaults(settings), self.get_experiment_config(experiment_id))
        for layer in layers:
            raw = _deep_merge(raw, layer)
        raw['experiment'] = experiment_id
        if seed is not None:
            raw['seed'] = seed
        if replicates is not None:
            raw['replicates'] = replicates
        if threads is not None:
            raw['threads'] = threads
        if out_dir is not None:
            raw.setdefault('output', {})['dir'] = out_dir
        if raw.get('replicates') is None:
            raw['replicates'] = settings.CONCENTRATION_REPLICATES
        if experiment_id in ('concentration_operator', 'operator_bound', 'weak11'):
            raw['sweep'].setdefault('m', settings.OPERATOR_M)
            raw['sweep'].setdefault('depth', settings.OPERATOR_DEPTH)
        raw.setdefault('chunk_size', settings.OPERATOR_CHUNK_SIZE if experiment_id in (
            'concentration_operator', 'operator_bound', 'weak11') else settings.CHUNK_SIZE)
        raw.setdefault('output', {}).setdefault('dir', os.path.join(settings.OUTPUT_DIR, experiment_id))
        return self.validate(raw)

    def validate(self, raw: Dict[str, Any]) -> ExperimentConfig:
        """Check a merged config and freeze it"""
        experiment = raw.get('experiment')
        if experiment not in EXPERIMENTS:
            raise ConfigError('experiment', f"unknown experiment '{experiment}'")

        wavelet = dict(raw.get('wavelet') or {})
        if wavelet.get('kind') not in (HAAR, MEYER):
            raise ConfigError('wavelet.kind', f"unknown wavelet '{wavelet.get('kind')}'")
        if experiment == 'gradient_check' and wavelet['kind'] != MEYER:
            raise ConfigError('wavelet.kind', "gradient_check needs the differentiable meyer family")

        model = dict(raw.get('model') or {})
        self._check_model(model, 'model')

        job = dict(raw.get('job') or {})
        try:
            KernelJob(**job)
        except TypeError as e:
            raise ConfigError('job', str(e)) from e
        except DomainError as e:
            raise ConfigError('job', str(e)) from e

        replicates = raw.get('replicates')
        if not isinstance(replicates, int) or replicates < MIN_REPLICATES[experiment]:
            raise ConfigError('replicates', f"{experiment} needs at least {MIN_REPLICATES[experiment]} "
                                            f"replicates, got {replicates}")
        certificates = raw.get('certificates') or {}
        confidence = float(certificates.get('confidence', self.settings.CONFIDENCE))
        tolerance = float(certificates.get('tolerance', self.settings.CERTIFICATE_TOL))
        if not 0.0 < confidence < 1.0:
            raise ConfigError('certificates.confidence', f"must lie in (0, 1), got {confidence}")
        if not tolerance > 0:
            raise ConfigError('certificates.tolerance', f"must be positive, got {tolerance}")
        threads = raw.get('threads', 1)
        if not isinstance(threads, int) or threads < 1:
            raise ConfigError('threads', f"must be a positive integer, got {threads}")
        chunk_size = raw.get('chunk_size')
        if not isinstance(chunk_size, int) or chunk_size < 1:
            raise ConfigError('chunk_size', f"must be a positive integer, got {chunk_size}")

        sweep = dict(raw.get('sweep') or {})
        self._check_sweep(sweep, wavelet['kind'], job.get('grid_depth', self.settings.GRID_DEPTH))

        return ExperimentConfig(experiment=experiment, wavelet=wavelet, model=model, job=job, sweep=sweep,
                                replicates=replicates, seed=int(raw.get('seed', self.settings.MASTER_SEED)),
                                confidence=confidence, tolerance=tolerance, chunk_size=chunk_size,
                                output_dir=str((raw.get('output') or {}).get('dir', self.settings.OUTPUT_DIR)),
                                threads=threads)

    @staticmethod
    def _check_model(block: Dict[str, Any], key: str):
        if block.get('dist', 'gaussian') not in DISTRIBUTIONS:
            raise ConfigError(f"{key}.dist", f"unknown distribution '{block.get('dist')}'")
        try:
            CoefficientModel.from_dict(block)
        except (TypeError, DomainError) as e:
            raise ConfigError(key, str(e)) from e

    def _check_sweep(self, sweep: Dict[str, Any], kind: str, grid_depth: int):
        for i, pair in enumerate(sweep.get('pairs') if isinstance(sweep.get('pairs'), list) else []):
            if not isinstance(pair, (list, tuple)) or len(pair) != 2:
                raise ConfigError(f"sweep.pairs[{i}]", "a pair is a two-element list [x, y]")
            x, y = float(pair[0]), float(pair[1])
            if x == y:
                raise ConfigError(f"sweep.pairs[{i}]", f"degenerate pair (x=y={x})")
            if kind == HAAR:
                try:
                    as_point(x, grid_depth), as_point(y, grid_depth)
                except DomainError as e:
                    raise ConfigError(f"sweep.pairs[{i}]", str(e)) from e
                if x < 0 or y < 0:
                    raise ConfigError(f"sweep.pairs[{i}]", "Haar pairs must lie on the half line")
        for name in ('distances', 'truncations', 'points', 'scales', 't_multipliers', 'moment_nus'):
            for value in sweep.get(name, []):
                if not float(value) > 0:
                    raise ConfigError(f"sweep.{name}", f"values must be positive, got {value}")
        for name in ('step', 'tolerance', 'min_distance', 'max_distance'):
            if name in sweep and not float(sweep[name]) > 0:
                raise ConfigError(f"sweep.{name}", f"must be positive, got {sweep[name]}")
        if float(sweep.get('min_distance', 0.0)) > float(sweep.get('max_distance', math.inf)):
            raise ConfigError('sweep', "min_distance exceeds max_distance")
        for value in sweep.get('bound_targets', []):
            if not 0.0 < float(value) < 1.0:
                raise ConfigError('sweep.bound_targets', f"targets must lie in (0, 1), got {value}")
        for i, block in enumerate(sweep.get('models', [])):
            self._check_model(block, f"sweep.models[{i}]")
        for name in sweep.get('wavelets', []):
            if name not in (HAAR, MEYER):
                raise ConfigError('sweep.wavelets', f"unknown wavelet '{name}'")
        for name in sweep.get('families', []):
            if name not in ('haar', 'smooth', 'gradient'):
                raise ConfigError('sweep.families', f"unknown family '{name}'")


class RunManager:
    """In-memory registry of experiment runs started through the HTTP API, shared by request threads"""

    # a run in one of these states is reused rather than started again
    LIVE_STATES = ('initialized', 'running', 'completed')

    def __init__(self):
        self.active_runs = {}
        self._lock = threading.Lock()

    @staticmethod
    def _new_run(run_id: str, run_config: Dict[str, Any]) -> Dict[str, Any]:
        return {
            'id': run_id,
            'config': run_config,
            'status': 'initialized',
            'created_at': datetime.now().isoformat(),
            'progress': 0,
            'current_phase': 'Queued'
        }

    def create_run(self, run_id: str, run_config: Dict[str, Any]) -> Dict[str, Any]:
        """Create and initialize new run"""
        run = self._new_run(run_id, run_config)
        with self._lock:
            self.active_runs[run_id] = run
        return run

    def claim_run(self, run_id: str, run_config: Dict[str, Any]) -> Tuple[Dict[str, Any], bool]:
        """Return (run, True) for a newly created run, or (existing run, False) if one is live"""
        with self._lock:
            existing = self.active_runs.get(run_id)
            if existing and existing.get('status') in self.LIVE_STATES:
                return existing, False
            run = self._new_run(run_id, run_config)
            self.active_runs[run_id] = run
            return run, True

    def update_status(self, run_id: str, status: str, progress: int, phase: str):
        with self._lock:
            if run_id in self.active_runs:
                self.active_runs[run_id].update({'status': status, 'progress': progress, 'current_phase': phase})

    def store_results(self, run_id: str, results: Dict[str, Any]):
        """Store run results"""
        with self._lock:
            if run_id in self.active_runs:
                self.active_runs[run_id]['results'] = results
                self.active_runs[run_id]['status'] = 'completed'
                self.active_runs[run_id]['progress'] = 100

    def get_run(self, run_id: str) -> Dict[str, Any]:
        with self._lock:
            return dict(self.active_runs.get(run_id, {}))

    def get_recent_runs(self, limit: int = 10) -> List[Dict[str, Any]]:
        with self._lock:
            return [dict(run) for run in list(self.active_runs.values())[-limit:]]
