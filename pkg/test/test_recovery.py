# ============================================================================
#  File: test_recovery.py
#  Purpose: Current density recovered from Bz without knowledge of sigma
# ============================================================================
# SECTION 1: Imports & Test Configuration
# ============================================================================
#
import numpy as np
import pytest

from src.fields import ScalarField, Unit, divergence
from src.forward import run_forward
from src.geometry import shrink_interior
from src.phantom import toy_sigma
from src.recovery import _junction_value, check_beta, recover_current

CURRENT = 0.01


def _relative_error(solution, result, inside) -> float:
    """Relative L2 distance of the recovered current from the forward current."""
    ex = (result.J.vx - solution.J.vx)[inside]
    ey = (result.J.vy - solution.J.vy)[inside]
    reference = np.hypot(solution.J.vx[inside], solution.J.vy[inside])
    return float(np.linalg.norm(np.hypot(ex, ey)) / np.linalg.norm(reference))
#
# ============================================================================
# SECTION 2: Recovery
# ============================================================================
# Class 2.1: TestRecoverCurrent
# ============================================================================
#
class TestRecoverCurrent:
    """Toy square at 128x128, homogeneous and with the lens."""

    @pytest.fixture(scope="class", params=["uniform", "lens"])
    def recovered(self, request, toy128, fields):
        if request.param == "uniform":
            sigma = fields["constant"](toy128.grid, 1.0)
        else:
            sigma = toy_sigma(toy128.grid)
        solution = run_forward(sigma, toy128, CURRENT)
        return solution, recover_current(solution.Bz, CURRENT, toy128.bc, toy128.region)
    #
    # ========================================================================
    # Method 2.1.1: test_beta_line_integrals
    # ========================================================================
    #
    def test_beta_line_integrals(self, toy128, recovered):
        _, result = recovered
        phi_int, psi_int = check_beta(result.phi, result.psi, toy128.bc)
        assert (phi_int, psi_int) == (result.phi_line_integral, result.psi_line_integral)
        assert abs(phi_int) <= 0.02 * np.abs(result.phi.values).max()
        assert psi_int == pytest.approx(-2.0, abs=0.04)
        assert result.beta == -0.5 * CURRENT
        assert result.beta_from_integrals == pytest.approx(-0.5 * CURRENT, rel=0.1)
    #
    # ========================================================================
    # Method 2.1.2: test_matches_forward_current
    # ========================================================================
    #
    def test_matches_forward_current(self, toy128, recovered):
        solution, result = recovered
        assert _relative_error(solution, result, toy128.region.inside) <= 0.02
        assert result.J.vx[64, 64] > 0
    #
    # ========================================================================
    # Method 2.1.3: test_recovered_current_is_divergence_free
    # ========================================================================
    #
    def test_recovered_current_is_divergence_free(self, toy128, recovered):
        _, result = recovered
        div = divergence(result.J, toy128.mask).values
        deep = shrink_interior(toy128.mask, 2).inside
        assert np.abs(div[deep]).max() <= 1e-9 * np.abs(result.J.vx).max() / toy128.grid.hx
    #
    # ========================================================================
    # Method 2.1.4: test_diagnostics
    # ========================================================================
    #
    def test_diagnostics(self, recovered):
        _, result = recovered
        info = result.diagnostics()
        assert info["beta"] == -0.5 * CURRENT
        assert 0 < info["min_J"] <= info["max_J"]
        assert info["j_floor"] == pytest.approx(1e-3 * info["max_J"])
        assert info["floor_active"] == (info["min_J"] < info["j_floor"])
#
# ============================================================================
# Class 2.2: TestRefinement
# ============================================================================
#
class TestRefinement:
    #
    # ========================================================================
    # Method 2.2.1: test_error_falls_with_resolution
    # ========================================================================
    #
    def test_error_falls_with_resolution(self, make_toy, fields):
        errors = []
        for n in (32, 64, 128):
            toy = make_toy(n)
            solution = run_forward(fields["constant"](toy.grid, 1.0), toy, CURRENT)
            result = recover_current(solution.Bz, CURRENT, toy.bc, toy.region)
            errors.append(_relative_error(solution, result, toy.region.inside))
        assert errors[0] > errors[1] > errors[2]
        assert errors[2] <= 0.02
    #
    # ========================================================================
    # Method 2.2.2: test_junction_extrapolation
    # ========================================================================
    #
    @pytest.mark.parametrize("pixels, expected", [(4, 1.0), (2, None), (1, None)])
    def test_junction_extrapolation(self, toy64, pixels, expected):
        grid = toy64.grid
        d = np.arange(grid.nx) * grid.hx
        trace = 1.0 - 0.3 * np.sqrt(d) + 0.1 * d
        field = ScalarField(grid, np.tile(trace, (grid.ny, 1)), Unit.AMPERE)
        chain = np.column_stack([np.full(pixels + 1, 10), np.arange(pixels + 1)])
        value = _junction_value(field, chain)
        if expected is not None:
            assert value == pytest.approx(expected, abs=1e-12)
        elif pixels == 1:
            assert value == trace[1]
        else:
            assert trace[1] < value < 1.0
#
#
## End of Script
