import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / 'surge'))

from models import GradientStats, HessianSpec, LawInputs  # noqa: E402


CONFIG_DIR = ROOT / 'configs'


@pytest.fixture
def d2_inputs():
    """
    mu = sigma = (1, 1), H = [[1, .5], [.5, 1]]: b_noise = pi,
    eps_max = 1/sqrt(2).
    """
    return LawInputs(GradientStats([1.0, 1.0], [1.0, 1.0]),
                     HessianSpec.dense([[1.0, 0.5], [0.5, 1.0]]))


@pytest.fixture
def d32_inputs():
    return LawInputs(GradientStats(np.full(32, 0.1), np.ones(32)),
                     HessianSpec.uniform(1.0, 0.1, 32))


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def config_dir():
    return CONFIG_DIR
