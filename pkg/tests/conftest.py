import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mrfkit import GridSpec, TrainConfig, build_dictionary, default_schedule, train


@pytest.fixture(scope="session")
def schedule():
    return default_schedule()


@pytest.fixture(scope="session")
def small_grid():
    # 132 entries; big enough to exercise everything, fast to simulate.
    return GridSpec(100.0, 250.0, 5000.0, 20.0, 250.0, 2000.0)


@pytest.fixture(scope="session")
def small_dict(schedule, small_grid):
    return build_dictionary(small_grid, schedule)


@pytest.fixture(scope="session")
def quick_net(small_dict):
    """A cheaply trained network for plumbing tests (not accuracy)."""
    net, trace = train(small_dict, TrainConfig(epochs=20, batch_size=32, seed=11))
    assert np.all(np.isfinite(trace))
    return net
