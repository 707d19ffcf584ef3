# ============================================================================
# FILENAME: config.py
# PURPOSE: Physical constants, numerical defaults and logging configuration
# ============================================================================
# SECTION 1: Physical Constants
# ============================================================================
#
import math

# Magnetic permeability of free space (H/m)
MU0 = 4.0e-7 * math.pi
#
# ============================================================================
# SECTION 2: Numerical Defaults
# ============================================================================
#
# Smallest accepted pixel count per axis
MIN_GRID_PIXELS = 8

# Width of the band between the domain and the reconstruction region (pixels)
DEFAULT_MARGIN = 4

# |J| floor as a fraction of max |J| over the reconstruction region
DEFAULT_J_FLOOR_FRACTION = 1.0e-3

# ln(sigma) is clamped to +-LOG_CLAMP during the iteration
LOG_CLAMP = math.log(1.0e6)

# Linear solver
DEFAULT_SOLVER_METHOD = "direct"
DEFAULT_SOLVER_RTOL = 1.0e-10
DEFAULT_SOLVER_MAXITER = 20000

# Zero padding of the Biot-Savart convolution (multiple of the grid size)
DEFAULT_PADDING_FACTOR = 2

# Convergence verdict
VERDICT_WINDOW = 20
ZIGZAG_FRACTION = 0.3
PLATEAU_RELATIVE_CHANGE = 1.0e-3
MIN_RATE_POINTS = 5

# Rows reported by `compare`
COMPARE_STEPS = tuple(range(5, 55, 5))
#
# ============================================================================
# SECTION 3: Environment Variables and Paths
# ============================================================================
#
OUTPUT_ROOT_ENV = "MREIT_OUTPUT_ROOT"
TELEMETRY_DIR_ENV = "MREIT_TELEMETRY_DIR"
DEFAULT_OUTPUT_ROOT = "runs"
LOG_DIR = "logs"
#
# ============================================================================
# SECTION 4: Logging Configuration
# ============================================================================
#
LOG_CONFIG = {
    "handlers": {
        "file": {
            "path": "logs/mreit.log",
            "level": "DEBUG",
            "rotation": "10 MB",
            "retention": "30 days",
        },
        "console": {
            "level": "INFO",
        }
    },
    "formatters": {
        "default": {
            "format": "{time:YYYY-MM-DD HH:mm:ss.SSS} | {level: <8} | {name}:{function}:{line} - {message}"
        }
    }
}

#
#
## END config.py
