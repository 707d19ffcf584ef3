# ============================================================================
# FILENAME: conftest.py
# PURPOSE: Shared fixtures and logging for the MREIT test suite
# ============================================================================
# SECTION 1: Imports & Path Configuration
# ============================================================================
#
import sys
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

# Add project root to sys.path to allow for absolute imports
project_root = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / 'src'))

# Import config after path modification
from src.config import LOG_CONFIG
from src.fields import ScalarField, Unit
from src.geometry import DomainShape, ElectrodeSegment, build_geometry, build_grid
from src.pde import clear_caches
from src.telemetry import set_telemetry_dir

CONFIG_DIR = project_root / "config"
#
# ============================================================================
# SECTION 2: Logging Configuration
# ============================================================================
#
# Remove default logger to avoid duplicate output
logger.remove()

# Configure file logger for detailed, persistent logs
log_file_path = project_root / "logs" / "test_run.log"
log_file_path.parent.mkdir(parents=True, exist_ok=True)

logger.add(
    sink=log_file_path,
    level=LOG_CONFIG['handlers']['file']['level'],
    format=LOG_CONFIG['formatters']['default']['format'],
    rotation=LOG_CONFIG['handlers']['file']['rotation'],
    retention=LOG_CONFIG['handlers']['file']['retention'],
    enqueue=True,  # Make logging thread-safe
    backtrace=True,
    diagnose=True
)

# Configure console logger for immediate, high-level feedback
logger.add(
    sink=sys.stdout,
    level="WARNING",
    format=LOG_CONFIG['formatters']['default']['format']
)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full 128x128 experiment runs")
#
# ============================================================================
# SECTION 3: Fixtures
# ============================================================================
# Function 3.1: telemetry_dir
# Purpose: Keep telemetry rows out of the project log directory.
# ============================================================================
#
@pytest.fixture(autouse=True, scope="session")
def telemetry_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("telemetry")
    set_telemetry_dir(path)
    yield path
    set_telemetry_dir(None)
    clear_caches()
#
# ============================================================================
# Function 3.2: toy geometry helpers
# ============================================================================
#
def make_toy_geometry(n: int, margin: int = 4):
    """Square [-1, 1]^2 with box electrodes on the left (E+) and right (E-) edges."""
    grid = build_grid(n, n, 2.0, 2.0, (-1.0, -1.0))
    plus = ElectrodeSegment(kind="box", box=(-1.0, -1.0, -0.15, 0.15))
    minus = ElectrodeSegment(kind="box", box=(1.0, 1.0, -0.15, 0.15))
    return build_geometry(grid, DomainShape(shape="square"), plus, minus, margin)


def constant_field(grid, value: float, unit: Unit = Unit.SIEMENS_PER_M) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)), unit)


def smooth_bump(grid, amplitude: float = 0.5, width: float = 0.3) -> ScalarField:
    """1 + amplitude * exp(-(r/width)^2), smooth on the pixel scale."""
    X, Y = grid.meshgrid()
    return ScalarField(grid, 1.0 + amplitude * np.exp(-(X * X + Y * Y) / (width * width)),
                       Unit.SIEMENS_PER_M)


@pytest.fixture(scope="session")
def make_toy():
    return make_toy_geometry


@pytest.fixture(scope="session")
def fields():
    """Field builders: constant and smooth bump."""
    return {"constant": constant_field, "bump": smooth_bump}


@pytest.fixture(scope="session")
def toy64():
    return make_toy_geometry(64)


@pytest.fixture(scope="session")
def toy128():
    return make_toy_geometry(128)
#
#
## End of Script
