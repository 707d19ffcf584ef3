# ============================================================================
#  File: test_pde.py
#  Purpose: Finite-volume elliptic solver and its conduction, Poisson and
#           phi/psi uses
# ============================================================================
# SECTION 1: Imports & Test Configuration
# ============================================================================
#
import math

import numpy as np
import pytest

from src.config_manager import SolverSettings
from src.error_handling import SolverError
from src.fields import ScalarField, Unit
from src.pde import (EllipticOperator, edge_weights, electrode_flux, recording_solves, solve_conduction,
                     solve_elliptic, solve_phi, solve_poisson_dirichlet, solve_psi)

CURRENT = 0.01

# u = exp(a x) sin(pi y / 2) solves div(exp(x) grad u) = 0 for this a
MANUFACTURED_A = (-1.0 + math.sqrt(1.0 + math.pi ** 2)) / 2.0


def _manufactured_error(geometry) -> float:
    X, Y = geometry.grid.meshgrid()
    exact = np.exp(MANUFACTURED_A * X) * np.sin(0.5 * math.pi * Y)
    mask = geometry.mask
    values = solve_elliptic(mask, mask.rim, exact, coefficient=np.exp(X))
    return float(np.abs(values - exact)[mask.inside].max())
#
# ============================================================================
# SECTION 2: Discretization
# ============================================================================
# Class 2.1: TestFiniteVolumeWeights
# ============================================================================
#
class TestFiniteVolumeWeights:
    #
    # ========================================================================
    # Method 2.1.1: test_square_weights
    # ========================================================================
    #
    def test_square_weights(self):
        inside = np.ones((6, 6), dtype=bool)
        wx, wy, volume = edge_weights(inside)
        assert volume[3, 3] == 1.0 and volume[0, 3] == 0.5 and volume[0, 0] == 0.25
        assert wx[3, 2] == 1.0 and wx[0, 2] == 0.5
        assert wy[2, 3] == 1.0 and wy[2, 0] == 0.5
    #
    # ========================================================================
    # Method 2.1.2: test_missing_dirichlet_set
    # ========================================================================
    #
    def test_missing_dirichlet_set(self, toy64):
        with pytest.raises(SolverError, match="no Dirichlet"):
            EllipticOperator(toy64.mask, np.zeros(toy64.grid.shape, dtype=bool))
    #
    # ========================================================================
    # Method 2.1.3: test_nonpositive_coefficient
    # ========================================================================
    #
    def test_nonpositive_coefficient(self, toy64):
        k = np.ones(toy64.grid.shape)
        k[30, 30] = 0.0
        with pytest.raises(SolverError, match="positive"):
            EllipticOperator(toy64.mask, toy64.mask.rim, k)
#
# ============================================================================
# SECTION 3: Accuracy
# ============================================================================
# Class 3.1: TestEllipticAccuracy
# ============================================================================
#
class TestEllipticAccuracy:
    #
    # ========================================================================
    # Method 3.1.1: test_second_order_convergence
    # ========================================================================
    #
    def test_second_order_convergence(self, make_toy):
        errors = [_manufactured_error(make_toy(n)) for n in (32, 64, 128)]
        assert errors[0] > errors[1] > errors[2]
        for coarse, fine in zip(errors, errors[1:]):
            assert 3.5 <= coarse / fine <= 4.5
    #
    # ========================================================================
    # Method 3.1.2: test_poisson_exact_on_quadratic
    # ========================================================================
    #
    def test_poisson_exact_on_quadratic(self, toy64):
        X, Y = toy64.grid.meshgrid()
        exact = ScalarField(toy64.grid, X * X + Y * Y)
        rhs = ScalarField(toy64.grid, np.full(toy64.grid.shape, 4.0))
        result = solve_poisson_dirichlet(rhs, exact, toy64.region)
        inside = toy64.region.inside
        np.testing.assert_allclose(result.values[inside], exact.values[inside], atol=1e-9)
    #
    # ========================================================================
    # Method 3.1.3: test_cg_matches_direct
    # ========================================================================
    #
    def test_cg_matches_direct(self, toy64, fields):
        sigma = fields["bump"](toy64.grid)
        direct = solve_conduction(sigma, toy64.bc, CURRENT, SolverSettings(method="direct"))
        iterative = solve_conduction(sigma, toy64.bc, CURRENT, SolverSettings(method="cg", rtol=1e-12))
        scale = np.abs(direct.values).max()
        assert np.abs(direct.values - iterative.values).max() <= 1e-7 * scale
    #
    # ========================================================================
    # Method 3.1.4: test_residual_history
    # ========================================================================
    #
    def test_residual_history(self, toy64, fields):
        sigma = fields["bump"](toy64.grid)
        with recording_solves() as reports:
            solve_conduction(sigma, toy64.bc, CURRENT, SolverSettings(method="cg", rtol=1e-10))
            solve_conduction(sigma, toy64.bc, CURRENT, SolverSettings(method="direct"))
        iterative, direct = reports
        assert iterative.label == "conduction" and iterative.method == "cg"
        assert iterative.iterations == len(iterative.residuals) - 1 > 1
        assert iterative.residuals[0] == 1.0
        assert iterative.residuals[-1] < 1e-9
        assert direct.iterations == 1 and direct.residuals == (1.0, direct.relative_residual)
        rows = iterative.rows(3)
        assert [r["iteration"] for r in rows] == list(range(iterative.iterations + 1))
        assert {r["solve"] for r in rows} == {3}
        with recording_solves() as outside:
            pass
        assert outside == []
#
# ============================================================================
# SECTION 4: Conduction Problem
# ============================================================================
# Class 4.1: TestConduction
# ============================================================================
#
class TestConduction:
    """Homogeneous toy square: equipotential electrodes, total current I."""

    @pytest.fixture(scope="class")
    def homogeneous(self, toy64):
        sigma = ScalarField(toy64.grid, np.ones(toy64.grid.shape), Unit.SIEMENS_PER_M)
        return sigma, solve_conduction(sigma, toy64.bc, CURRENT)
    #
    # ========================================================================
    # Method 4.1.1: test_electrode_currents
    # ========================================================================
    #
    def test_electrode_currents(self, toy64, homogeneous):
        sigma, u = homogeneous
        assert electrode_flux(sigma, u, toy64.bc, "e_plus") == pytest.approx(CURRENT, rel=1e-10)
        assert electrode_flux(sigma, u, toy64.bc, "e_minus") == pytest.approx(-CURRENT, rel=1e-8)
    #
    # ========================================================================
    # Method 4.1.2: test_equipotential_electrodes
    # ========================================================================
    #
    def test_equipotential_electrodes(self, toy64, homogeneous):
        _, u = homogeneous
        on_plus = u.values[toy64.bc.piece_mask("e_plus")]
        assert np.all(u.values[toy64.bc.piece_mask("e_minus")] == 0.0)
        assert np.ptp(on_plus) == 0.0 and on_plus[0] > 0
    #
    # ========================================================================
    # Method 4.1.3: test_mirror_symmetries
    # ========================================================================
    #
    def test_mirror_symmetries(self, toy64, homogeneous):
        _, u = homogeneous
        potential = u.values[toy64.bc.piece_mask("e_plus")][0]
        tol = 1e-9 * potential
        np.testing.assert_allclose(u.values + u.values[:, ::-1], potential, atol=tol)
        np.testing.assert_allclose(u.values, u.values[::-1, :], atol=tol)
    #
    # ========================================================================
    # Method 4.1.4: test_nonpositive_conductivity
    # ========================================================================
    #
    def test_nonpositive_conductivity(self, toy64):
        values = np.ones(toy64.grid.shape)
        values[20, 20] = -1.0
        with pytest.raises(SolverError):
            solve_conduction(ScalarField(toy64.grid, values), toy64.bc, CURRENT)
    #
    # ========================================================================
    # Method 4.1.5: test_flux_conservation
    # ========================================================================
    #
    def test_flux_conservation(self, toy64, fields):
        sigma = fields["bump"](toy64.grid)
        u = solve_conduction(sigma, toy64.bc, CURRENT)
        bc = toy64.bc
        operator = EllipticOperator(bc.mask, bc.piece_mask("e_plus") | bc.piece_mask("e_minus"), sigma.values)
        flux_plus = operator.flux(u.values, bc.piece_mask("e_plus"))
        flux_minus = operator.flux(u.values, bc.piece_mask("e_minus"))
        arcs = bc.piece_mask("gamma_plus") | bc.piece_mask("gamma_minus")
        X, Y = toy64.grid.meshgrid()
        pocket = np.hypot(X - 0.2, Y) < 0.4
        assert flux_plus == pytest.approx(CURRENT, rel=1e-10)
        assert abs(flux_plus + flux_minus) <= 1e-8 * CURRENT
        assert abs(operator.flux(u.values, arcs)) <= 1e-8 * CURRENT
        assert abs(operator.flux(u.values, pocket)) <= 1e-8 * CURRENT
    #
    # ========================================================================
    # Method 4.1.6: test_maximum_principle
    # ========================================================================
    #
    @pytest.mark.parametrize("amplitude", [0.5, -0.4, 3.0])
    def test_maximum_principle(self, toy64, fields, amplitude):
        u = solve_conduction(fields["bump"](toy64.grid, amplitude), toy64.bc, CURRENT).values
        potential = u[toy64.bc.piece_mask("e_plus")][0]
        electrodes = toy64.bc.piece_mask("e_plus") | toy64.bc.piece_mask("e_minus")
        free = toy64.mask.inside & ~electrodes
        assert potential > 0
        assert np.all(u[free] > 0.0) and np.all(u[free] < potential)
#
# ============================================================================
# SECTION 5: Phi and Psi
# ============================================================================
# Class 5.1: TestMixedProblems
# ============================================================================
#
class TestMixedProblems:
    #
    # ========================================================================
    # Method 5.1.1: test_psi_boundary_values_and_symmetry
    # ========================================================================
    #
    def test_psi_boundary_values_and_symmetry(self, toy64):
        psi = solve_psi(toy64.bc).values
        assert np.all(psi[toy64.bc.piece_mask("gamma_plus")] == 1.0)
        assert np.all(psi[toy64.bc.piece_mask("gamma_minus")] == -1.0)
        np.testing.assert_allclose(psi, -psi[::-1, :], atol=1e-10)
        np.testing.assert_allclose(psi, psi[:, ::-1], atol=1e-10)
        assert np.abs(psi).max() <= 1.0 + 1e-12
    #
    # ========================================================================
    # Method 5.1.2: test_psi_is_cached
    # ========================================================================
    #
    def test_psi_is_cached(self, toy64):
        assert solve_psi(toy64.bc) is solve_psi(toy64.bc)
    #
    # ========================================================================
    # Method 5.1.3: test_phi_of_zero_data
    # ========================================================================
    #
    def test_phi_of_zero_data(self, toy64):
        zero = ScalarField(toy64.grid, np.zeros(toy64.grid.shape), Unit.AMPERE)
        phi = solve_phi(zero, toy64.bc)
        assert np.abs(phi.values).max() == 0.0
#
#
## End of Script
