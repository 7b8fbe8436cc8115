import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mapflow import catalog


@pytest.fixture
def standard_map():
    return catalog("standard", 0.1)


@pytest.fixture
def twist_map():
    return catalog("twist", 0.0)


@pytest.fixture
def froeschle_map():
    return catalog("froeschle2", 0.05, eta=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
