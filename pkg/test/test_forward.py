# ============================================================================
#  File: test_forward.py
#  Purpose: Current density, Biot-Savart Bz and measurement perturbations
# ============================================================================
# SECTION 1: Imports & Test Configuration
# ============================================================================
#
import math

import numpy as np
import pytest
from scipy import integrate

from src.config import MU0
from src.error_handling import FieldError
from src.fields import ScalarField, Unit, VectorField2D, laplacian
from src.forward import (add_noise, add_stray_field, analytic_laplacian_bz, bz_direct, bz_fft,
                         cell_kernels, compute_J, convolve_free_space, run_forward)
from src.geometry import build_grid

CURRENT = 0.01
#
# ============================================================================
# SECTION 2: Biot-Savart Quadrature
# ============================================================================
# Class 2.1: TestBiotSavart
# ============================================================================
#
class TestBiotSavart:
    #
    # ========================================================================
    # Method 2.1.1: test_fft_matches_direct_sum
    # ========================================================================
    #
    def test_fft_matches_direct_sum(self, toy64, fields):
        solution = run_forward(fields["bump"](toy64.grid), toy64, CURRENT)
        direct = bz_direct(solution.J)
        scale = np.abs(direct.values).max()
        assert scale > 0
        assert np.abs(solution.Bz.values - direct.values).max() <= 1e-10 * scale
    #
    # ========================================================================
    # Method 2.1.2: test_single_source_pixel
    # ========================================================================
    #
    def test_single_source_pixel(self):
        """Away from the source the pixel-integrated kernel is the point kernel."""
        grid = build_grid(16, 16, 1.0, 1.0, (0.0, 0.0))
        jy = np.zeros(grid.shape)
        jy[8, 5] = 2.0
        Bz = bz_fft(VectorField2D(grid, np.zeros(grid.shape), jy, Unit.AMPERE_PER_M))
        X, Y = grid.meshgrid()
        dx, dy = X - X[8, 5], Y - Y[8, 5]
        r2 = dx * dx + dy * dy
        expected = np.divide(-MU0 / (2.0 * math.pi) * grid.cell_area * 2.0 * dx, r2,
                             out=np.zeros_like(r2), where=r2 > 0)
        far = r2 >= (4.0 * grid.hx) ** 2
        np.testing.assert_allclose(Bz.values[far], expected[far], rtol=1e-3,
                                   atol=2e-4 * np.abs(expected[far]).max())
        assert Bz.values[8, 5] == pytest.approx(0.0, abs=1e-12 * np.abs(expected).max())
    #
    # ========================================================================
    # Method 2.1.3: test_cell_kernel_quadrature
    # ========================================================================
    #
    @pytest.mark.parametrize("oy, ox", [(2, 3), (0, 1), (-5, 4)])
    def test_cell_kernel_quadrature(self, oy, ox):
        grid = build_grid(16, 16, 1.0, 1.0, (0.0, 0.0))
        kx, ky = cell_kernels(grid)
        h = grid.hx
        value, _ = integrate.dblquad(lambda y, x: x / (x * x + y * y), (ox - 0.5) * h, (ox + 0.5) * h,
                                     (oy - 0.5) * h, (oy + 0.5) * h, epsabs=1e-14, epsrel=1e-12)
        assert kx[grid.ny - 1 + oy, grid.nx - 1 + ox] == pytest.approx(value / grid.cell_area, rel=1e-8)
        assert ky[grid.ny - 1 + ox, grid.nx - 1 + oy] == pytest.approx(value / grid.cell_area, rel=1e-8)
        assert kx[grid.ny - 1, grid.nx - 1] == ky[grid.ny - 1, grid.nx - 1] == 0.0
    #
    # ========================================================================
    # Method 2.1.4: test_padding_factor_checked

    # ========================================================================
    #
    def test_padding_factor_checked(self, toy64):
        with pytest.raises(FieldError):
            convolve_free_space(np.zeros(toy64.grid.shape), toy64.grid, lambda dx, dy: dx, 1)
    #
    # ========================================================================
    # Method 2.1.5: test_laplacian_orientation
    # ========================================================================
    #
    def test_laplacian_orientation(self, toy128, fields):
        """Laplace(Bz) from the measurement matches mu0 (d_x(s u_y) - d_y(s u_x))."""
        sigma = fields["bump"](toy128.grid)
        solution = run_forward(sigma, toy128, CURRENT)
        measured = laplacian(solution.Bz, toy128.mask).values
        analytic = analytic_laplacian_bz(sigma, solution.u, toy128.mask).values
        X, Y = toy128.grid.meshgrid()
        core = np.hypot(X, Y) <= 0.6
        difference = np.linalg.norm((measured - analytic)[core])
        assert difference <= 0.1 * np.linalg.norm(analytic[core])
#
# ============================================================================
# SECTION 3: Current Density
# ============================================================================
# Class 3.1: TestCurrentDensity
# ============================================================================
#
class TestCurrentDensity:
    #
    # ========================================================================
    # Method 3.1.1: test_flow_from_e_plus_to_e_minus
    # ========================================================================
    #
    def test_flow_from_e_plus_to_e_minus(self, toy64, fields):
        solution = run_forward(fields["constant"](toy64.grid, 1.0), toy64, CURRENT)
        assert solution.J.vx[32, 32] > 0
        assert abs(solution.J.vy[32, 32]) < 0.05 * solution.J.vx[32, 32]
        assert np.all(solution.J.vx[~toy64.mask.inside] == 0)
    #
    # ========================================================================
    # Method 3.1.2: test_compute_j_grid_mismatch
    # ========================================================================
    #
    def test_compute_j_grid_mismatch(self, toy64, make_toy, fields):
        other = make_toy(32, margin=2)
        with pytest.raises(FieldError):
            compute_J(fields["constant"](toy64.grid, 1.0), fields["constant"](other.grid, 0.0, Unit.VOLT),
                      toy64.mask)
    #
    # ========================================================================
    # Method 3.1.3: test_face_flux_exact_for_exponential_pair
    # ========================================================================
    #
    def test_face_flux_exact_for_exponential_pair(self, toy64):
        """sigma = e^x with u = e^-x carries the uniform current (1, 0)."""
        grid = toy64.grid
        X, _ = grid.meshgrid()
        sigma = ScalarField(grid, np.exp(X), Unit.SIEMENS_PER_M)
        u = ScalarField(grid, np.exp(-X), Unit.VOLT)
        J = compute_J(sigma, u, toy64.mask)
        inside = toy64.mask.inside
        np.testing.assert_allclose(J.vx[inside], 1.0, atol=1e-3)
        assert np.all(J.vy[inside] == 0.0)
#
# ============================================================================
# SECTION 4: Perturbations

# ============================================================================
# Class 4.1: TestPerturbations
# ============================================================================
#
class TestPerturbations:

    @pytest.fixture(scope="class")
    def bz(self, toy64, fields):
        return run_forward(fields["bump"](toy64.grid), toy64, CURRENT).Bz
    #
    # ========================================================================
    # Method 4.1.1: test_stray_field_invisible_to_laplacian
    # ========================================================================
    #
    def test_stray_field_invisible_to_laplacian(self, toy64, bz):
        shifted = add_stray_field(bz, (1e-8, 2e-8, -3e-8))
        assert not np.array_equal(shifted.values, bz.values)
        before = laplacian(bz, toy64.mask).values
        after = laplacian(shifted, toy64.mask).values
        assert np.abs(after - before).max() <= 1e-6 * np.abs(before).max()
    #
    # ========================================================================
    # Method 4.1.2: test_zero_stray_and_zero_noise_are_identity
    # ========================================================================
    #
    def test_zero_stray_and_zero_noise_are_identity(self, bz):
        assert add_stray_field(bz, (0.0, 0.0, 0.0)) is bz
        assert add_noise(bz, 0.0, seed=5) is bz
    #
    # ========================================================================
    # Method 4.1.3: test_seeded_noise_is_reproducible
    # ========================================================================
    #
    def test_seeded_noise_is_reproducible(self, bz):
        a = add_noise(bz, 1e-10, seed=7)
        b = add_noise(bz, 1e-10, seed=7)
        c = add_noise(bz, 1e-10, seed=8)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)
        assert np.std(a.values - bz.values) == pytest.approx(1e-10, rel=0.1)
#
#
## End of Script
