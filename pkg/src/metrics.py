# ============================================================================
#  File:    metrics.py
#  Purpose: Relative sup-norm error of ln(sigma) and contraction-rate fits
# ============================================================================
# SECTION 1: Imports
# ============================================================================
#
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from src.config import MIN_RATE_POINTS, PLATEAU_RELATIVE_CHANGE
from src.error_handling import MetricsError
from src.fields import ScalarField
from src.geometry import DomainMask
#
# ============================================================================
# SECTION 2: Relative Error
# ============================================================================
# Function 2.1: compute_re
# Purpose: ||ln s_n - ln s*||_C / ||ln s*||_C over the mask; +inf when the
#          denominator vanishes.
# ============================================================================
#
def compute_re(sigma_n: ScalarField, sigma_star: ScalarField, mask: DomainMask) -> float:
    if sigma_n.grid != sigma_star.grid or mask.grid != sigma_n.grid:
        raise MetricsError("relative error needs fields on one grid")
    inside = mask.inside
    a = sigma_n.values[inside]
    b = sigma_star.values[inside]
    if np.any(a <= 0) or np.any(b <= 0):
        raise MetricsError("relative error of a nonpositive conductivity")
    log_star = np.log(b)
    denominator = float(np.max(np.abs(log_star)))
    numerator = float(np.max(np.abs(np.log(a) - log_star)))
    if denominator == 0.0:
        return math.inf
    return numerator / denominator
#
# ============================================================================
# SECTION 3: Rate Fit
# ============================================================================
# Class 3.1: RateFit
# ============================================================================
#
@dataclass(frozen=True)
class RateFit:
    theta: Optional[float]
    flag: str
    window: int

    def as_dict(self) -> dict:
        return {"theta": self.theta, "flag": self.flag, "window": self.window}
#
# ============================================================================
# Function 3.2: fit_theta
# Purpose: Least-squares slope of log(series) over the pre-plateau window,
#          theta = exp(slope). The window ends before the first relative
#          change below the plateau threshold or the first nonpositive value.
# ============================================================================
#
def fit_theta(series: Sequence[float], plateau: float = PLATEAU_RELATIVE_CHANGE,
              min_points: int = MIN_RATE_POINTS) -> RateFit:
    values = np.asarray(list(series), dtype=float)
    window = 0
    while window < values.size and values[window] > 0 and np.isfinite(values[window]):
        if window > 0:
            change = abs(values[window] - values[window - 1]) / values[window - 1]
            if change < plateau:
                break
        window += 1
    if window < min_points:
        raise MetricsError(f"rate fit needs {min_points} pre-plateau points, got {window}")
    n = np.arange(1, window + 1, dtype=float)
    slope = float(np.polyfit(n, np.log(values[:window]), 1)[0])
    if slope >= 0:
        return RateFit(None, "no-rate", window)
    return RateFit(math.exp(slope), "rate", window)
#
#
## End of Script
