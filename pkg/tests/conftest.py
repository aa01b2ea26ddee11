import sys
from pathlib import Path

import numpy as np
import pytest

# Add src and the project root to path
ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT / "src"))
sys.path.insert(0, str(ROOT))

from calibration import get_calibrated_noise  # noqa: E402
from optics_pipeline import NAMED_TARGETS  # noqa: E402
from protocol import NoiseParams  # noqa: E402


@pytest.fixture
def ideal_noise() -> NoiseParams:
    return NoiseParams.ideal()


@pytest.fixture(scope="session")
def calibrated_noise() -> NoiseParams:
    return get_calibrated_noise()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(params=list(NAMED_TARGETS))
def named_target(request):
    return request.param, NAMED_TARGETS[request.param]
