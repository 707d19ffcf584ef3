# ============================================================================
#  File: test_metrics.py
#  Purpose: Relative error and contraction-rate fits
# ============================================================================
# SECTION 1: Imports & Test Configuration
# ============================================================================
#
import math

import numpy as np
import pytest

from src.error_handling import MetricsError
from src.metrics import compute_re, fit_theta
#
# ============================================================================
# SECTION 2: Relative Error
# ============================================================================
# Class 2.1: TestRelativeError
# ============================================================================
#
class TestRelativeError:
    #
    # ========================================================================
    # Method 2.1.1: test_identical_fields
    # ========================================================================
    #
    def test_identical_fields(self, toy64, fields):
        sigma = fields["bump"](toy64.grid)
        assert compute_re(sigma, sigma, toy64.mask) == 0.0
    #
    # ========================================================================
    # Method 2.1.2: test_scaled_by_e
    # ========================================================================
    #
    def test_scaled_by_e(self, toy64, fields):
        """ln(e s) - ln s = 1 everywhere; the denominator is max |ln s| = 1."""
        sigma = fields["constant"](toy64.grid, math.e)
        scaled = fields["constant"](toy64.grid, math.e * math.e)
        assert compute_re(scaled, sigma, toy64.mask) == pytest.approx(1.0)
    #
    # ========================================================================
    # Method 2.1.3: test_zero_denominator
    # ========================================================================
    #
    def test_zero_denominator(self, toy64, fields):
        one = fields["constant"](toy64.grid, 1.0)
        assert compute_re(fields["bump"](toy64.grid), one, toy64.mask) == math.inf
    #
    # ========================================================================
    # Method 2.1.4: test_nonpositive_input
    # ========================================================================
    #
    def test_nonpositive_input(self, toy64, fields):
        with pytest.raises(MetricsError):
            compute_re(fields["constant"](toy64.grid, -1.0), fields["bump"](toy64.grid), toy64.mask)
#
# ============================================================================
# SECTION 3: Rate Fit
# ============================================================================
# Class 3.1: TestFitTheta
# ============================================================================
#
class TestFitTheta:
    #
    # ========================================================================
    # Method 3.1.1: test_geometric_series
    # ========================================================================
    #
    def test_geometric_series(self):
        fit = fit_theta([0.8 ** n for n in range(1, 31)])
        assert fit.flag == "rate"
        assert fit.theta == pytest.approx(0.8, abs=1e-6)
        assert fit.window == 30
    #
    # ========================================================================
    # Method 3.1.2: test_window_stops_at_plateau
    # ========================================================================
    #
    def test_window_stops_at_plateau(self):
        series = [0.5 ** n for n in range(1, 11)] + [0.5 ** 10] * 10
        fit = fit_theta(series)
        assert fit.window == 10
        assert fit.theta == pytest.approx(0.5, abs=1e-9)
    #
    # ========================================================================
    # Method 3.1.3: test_increasing_series
    # ========================================================================
    #
    def test_increasing_series(self):
        fit = fit_theta(list(np.linspace(1.0, 2.0, 10)))
        assert fit.flag == "no-rate" and fit.theta is None
        assert fit.as_dict() == {"theta": None, "flag": "no-rate", "window": 10}
    #
    # ========================================================================
    # Method 3.1.4: test_short_series
    # ========================================================================
    #
    def test_short_series(self):
        with pytest.raises(MetricsError):
            fit_theta([0.5, 0.25, 0.125])
#
#
## End of Script
