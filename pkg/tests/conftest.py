import numpy as np
import pytest

from openbilliard.scenes import BUNDLED, load_bundled


@pytest.fixture(scope="session")
def scenes():
    """All bundled scenes, validated once per session."""
    return {name: load_bundled(name) for name in BUNDLED}


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
