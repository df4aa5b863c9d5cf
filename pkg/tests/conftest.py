# tests/conftest.py
import os
import sys

import numpy as np
import pytest

# Add project root to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from app.config.settings import Settings
from app.core.cache import cache_manager
from app.models.operator import Boundary, CoefficientBundleX, Grid1D
from app.services.grid_operator import grid_operator
from app.services.presets import kusuoka_weight
from app.services.spectral_calculus import spectral_calculus


# Test settings override
class TestSettings(Settings):
    ENVIRONMENT: str = "testing"
    LOG_LEVEL: str = "debug"
    OUTPUT_DIR: str = "test-output"

    class Config:
        env_file = ".env.test"


test_settings = TestSettings()


@pytest.fixture(autouse=True)
def clear_cache():
    """Every test starts with an empty decomposition cache"""
    cache_manager.clear_pattern("")
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def dirichlet_grid():
    return Grid1D(130, 0.0, 1.0, Boundary.DIRICHLET)


@pytest.fixture
def periodic_grid():
    return Grid1D(128, 0.0, 2.0 * np.pi, Boundary.PERIODIC)


@pytest.fixture
def laplacian(dirichlet_grid):
    """-d^2/dy^2 + 1 with Dirichlet conditions on [0, 1]"""
    return grid_operator.build_divergence_operator(1.0, 1.0, dirichlet_grid)


@pytest.fixture
def periodic_laplacian(periodic_grid):
    """-d^2/dy^2 + 1 on the circle"""
    return grid_operator.build_divergence_operator(1.0, 1.0, periodic_grid)


@pytest.fixture
def kusuoka_operator():
    """-d/dy(kusuoka(0.5) d/dy) + 1 on [-1/2, 1/2]"""
    grid = Grid1D(96, -0.5, 0.5)
    return grid_operator.build_divergence_operator(
        kusuoka_weight(grid.nodes, 0.5), 1.0, grid
    )


@pytest.fixture
def decomposition(laplacian):
    return spectral_calculus.decompose(laplacian)


@pytest.fixture
def bands(decomposition):
    return spectral_calculus.build_bands(decomposition)


def make_bundle(a1=0.0, a0=0.0, g=1.0, x0=0.0, span=(-1.0, 1.0), n=401):
    """Normalized coefficient bundle from callables or constants"""
    x = np.linspace(span[0], span[1], n)

    def sample(value):
        return value(x) if callable(value) else np.full_like(x, float(value))

    return CoefficientBundleX(
        x=x, a2=np.ones_like(x), a1=sample(a1), a0=sample(a0), g=sample(g), x0=x0
    )


@pytest.fixture
def constant_bundle():
    """a1 = a0 = 0, g = 1: v = cosh(sqrt(lambda) (x - x0))"""
    return make_bundle()
