import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=40, derandomize=True)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_plan():
    from bandsplice import BandPlan

    return BandPlan.adjacent(num_bands=4, subcarriers_per_band=9, subcarrier_spacing=312.5e3)


@pytest.fixture
def full_plan():
    from bandsplice import BandPlan

    return BandPlan.adjacent()
