import pytest

from config import TestingConfig
from models.randkernel import KernelJob
from models.subgauss import CoefficientModel
from models.wavelets import WaveletFamily
from utils.data_manager import ExperimentConfigManager


@pytest.fixture(scope='session')
def haar():
    return WaveletFamily.haar()


@pytest.fixture(scope='session')
def meyer(tmp_path_factory):
    """Meyer family synthesised once per session from the default table settings"""
    path = tmp_path_factory.mktemp('table') / 'meyer_table.npz'
    return WaveletFamily.meyer(path=str(path), radius=TestingConfig.MEYER_RADIUS, step=TestingConfig.MEYER_STEP,
                               tail_eps=TestingConfig.MEYER_TAIL_EPS, ortho_tol=TestingConfig.ORTHO_TOL)


@pytest.fixture
def job():
    return KernelJob()


@pytest.fixture
def small_job():
    return KernelJob(scale_min=-8, scale_max=12)


@pytest.fixture
def gaussian():
    return CoefficientModel.gaussian(nu=1.0)


@pytest.fixture
def manager():
    return ExperimentConfigManager(TestingConfig)


@pytest.fixture
def client():
    import app as app_module
    app_module.configure(TestingConfig)
    app_module.app.config['TESTING'] = True
    return app_module.app.test_client()
