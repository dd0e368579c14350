import os


class Config:
    """Kernel lab configuration settings"""

    # Basic Flask configuration
    SECRET_KEY = os.environ.get('SECRET_KEY') or 'random-wavelet-kernel-lab'
    JSON_SORT_KEYS = True

    # Dyadic grid
    GRID_DEPTH = int(os.environ.get('KERNEL_LAB_GRID_DEPTH', 20))

    # Kernel truncation
    SCALE_MIN = -20
    SCALE_MAX = 20
    TAIL_TOL = 1e-10

    # Smooth wavelet table
    MEYER_TABLE_PATH = os.environ.get('KERNEL_LAB_MEYER_TABLE') or os.path.join(
        os.path.dirname(os.path.abspath(__file__)), 'data', 'meyer_table.npz')
    MEYER_RADIUS = 128
    MEYER_STEP = 2.0 ** -10
    MEYER_TAIL_EPS = 4.0
    ORTHO_TOL = 1e-6

    # Operator grid: [0, 2^m) with 2^(m + depth) cells
    OPERATOR_M = 0
    OPERATOR_DEPTH = 14

    # Statistics
    CONFIDENCE = 0.99
    CERTIFICATE_TOL = 1e-8
    LAMBDA_MAX = 10.0
    FD_STEP = 1e-6

    # Monte Carlo
    MASTER_SEED = int(os.environ.get('KERNEL_LAB_SEED', 20240601))
    CONCENTRATION_REPLICATES = 100000
    CHUNK_SIZE = 20000
    OPERATOR_CHUNK_SIZE = 64
    THREADS = int(os.environ.get('KERNEL_LAB_THREADS', os.cpu_count() or 1))

    # Output
    OUTPUT_DIR = os.environ.get('KERNEL_LAB_OUTPUT_DIR') or 'results'

    # Logging configuration
    LOG_LEVEL = os.environ.get('LOG_LEVEL') or 'INFO'
    LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

    @staticmethod
    def init_app(app):
        """Initialize application with configuration"""
        pass


class DevelopmentConfig(Config):
    """Development configuration"""
    DEBUG = True
    TESTING = False


class ThoroughConfig(Config):
    """Acceptance-size runs"""
    DEBUG = False
    TESTING = False
    CONCENTRATION_REPLICATES = 1000000


class TestingConfig(Config):
    """Testing configuration"""
    TESTING = True
    CONCENTRATION_REPLICATES = 20000
    CHUNK_SIZE = 5000
    OPERATOR_DEPTH = 10
    THREADS = 1
    LOG_LEVEL = 'WARNING'


config = {
    'development': DevelopmentConfig,
    'thorough': ThoroughConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
