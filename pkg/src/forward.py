# ============================================================================
#  File:    forward.py
#  Purpose: Synthetic measurements: current density J = -sigma grad u and the
#           magnetic flux density Bz by the planar Biot-Savart integral
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy import fft

from src.config import DEFAULT_PADDING_FACTOR, MU0
from src.config_manager import SolverSettings
from src.error_handling import FieldError
from src.fields import FaceField, ScalarField, Unit, VectorField2D, divergence, harmonic_mean, open_faces
from src.geometry import DomainMask, Grid2D, ImagingGeometry
from src.pde import solve_conduction

# Target pixels per chunk of the direct quadrature
_DIRECT_CHUNK = 512
#
# ============================================================================
# SECTION 2: Types
# ============================================================================
# Class 2.1: ForwardSolution
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class ForwardSolution:
    sigma: ScalarField
    u: ScalarField
    J: VectorField2D
    Bz: ScalarField
    current: float
    mu0: float = MU0
    padding_factor: int = DEFAULT_PADDING_FACTOR
#
# ============================================================================
# SECTION 3: Current Density
# ============================================================================
# Function 3.1: compute_J
# Purpose: Face fluxes -k_f (u_q - u_p) / h with the harmonic-mean face
#          conductivity of the conduction solve, averaged onto each pixel
#          over its open faces.
# ============================================================================
#
def compute_J(sigma: ScalarField, u: ScalarField, mask: DomainMask) -> VectorField2D:
    if sigma.grid != u.grid:
        raise FieldError("conductivity and potential live on different grids")
    sigma.require_on(mask)
    u.require_on(mask)
    grid, inside = u.grid, mask.inside
    s = np.where(inside, sigma.values, 0.0)
    v = np.where(inside, u.values, 0.0)
    x_open, y_open = open_faces(inside)
    flux_x = -harmonic_mean(s[:, :-1], s[:, 1:]) * (v[:, 1:] - v[:, :-1]) / grid.hx
    flux_y = -harmonic_mean(s[:-1, :], s[1:, :]) * (v[1:, :] - v[:-1, :]) / grid.hy
    zeros_x, zeros_y = np.zeros(x_open.shape), np.zeros(y_open.shape)
    faces = FaceField(grid, flux_x, zeros_x, zeros_y, flux_y, x_open, y_open, Unit.AMPERE_PER_M)
    return faces.at_pixels().restricted(inside)
#
# ============================================================================
# SECTION 4: Biot-Savart Convolution
# ============================================================================
# Function 4.1: convolve_free_space
# Purpose: Linear (non-periodic) convolution of a grid field with a kernel
#          given as a function of the offset (dx, dy), via zero-padded FFT.
#          The kernel callback receives offsets with the singular cell at
#          (0, 0) and must return its value there too.
# ============================================================================
#
def convolve_free_space(values: np.ndarray, grid: Grid2D,
                        kernel: Callable[[np.ndarray, np.ndarray], np.ndarray],
                        padding_factor: int = DEFAULT_PADDING_FACTOR) -> np.ndarray:
    if padding_factor < 2:
        raise FieldError(f"padding factor must be at least 2, got {padding_factor}")
    py = fft.next_fast_len(padding_factor * grid.ny, real=True)
    px = fft.next_fast_len(padding_factor * grid.nx, real=True)
    ay = np.arange(py)
    ay = np.where(ay < grid.ny, ay, ay - py)
    ax = np.arange(px)
    ax = np.where(ax < grid.nx, ax, ax - px)
    valid = (np.abs(ay) < grid.ny)[:, None] & (np.abs(ax) < grid.nx)[None, :]
    DX = np.broadcast_to(ax[None, :] * grid.hx, (py, px))
    DY = np.broadcast_to(ay[:, None] * grid.hy, (py, px))
    K = np.where(valid, kernel(DX, DY), 0.0)
    spectrum = fft.rfft2(K) * fft.rfft2(values, s=(py, px))
    return fft.irfft2(spectrum, s=(py, px))[:grid.ny, :grid.nx]


def _corner_antiderivative(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """F with d2F/dxdy = x / (x^2 + y^2); finite wherever x != 0."""
    return 0.5 * y * np.log(x * x + y * y) + x * np.arctan(y / x)
#
# ============================================================================
# Function 4.2: cell_kernels
# Purpose: Kernels dx/r^2 and dy/r^2 integrated exactly over a source pixel
#          of size hx by hy, divided by its area, for every offset
#          (iy, ix) in [-(ny - 1), ny - 1] x [-(nx - 1), nx - 1]. Pixel
#          corners sit at half-integer offsets, so the antiderivative never
#          meets the origin. The centred pixel integrates to 0 by symmetry.
# ============================================================================
#
def cell_kernels(grid: Grid2D) -> Tuple[np.ndarray, np.ndarray]:
    cx = (np.arange(2 * grid.nx) - grid.nx + 0.5) * grid.hx
    cy = (np.arange(2 * grid.ny) - grid.ny + 0.5) * grid.hy
    X, Y = np.meshgrid(cx, cy)

    def integrate(F: np.ndarray) -> np.ndarray:
        return (F[1:, 1:] - F[1:, :-1] - F[:-1, 1:] + F[:-1, :-1]) / grid.cell_area

    kx = integrate(_corner_antiderivative(X, Y))
    ky = integrate(_corner_antiderivative(Y, X))
    centre = (grid.ny - 1, grid.nx - 1)
    kx[centre] = ky[centre] = 0.0
    return kx, ky


def _tabulated(table: np.ndarray, grid: Grid2D) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    def kernel(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        ix = np.rint(dx / grid.hx).astype(int) + grid.nx - 1
        iy = np.rint(dy / grid.hy).astype(int) + grid.ny - 1
        ok = (ix >= 0) & (ix < table.shape[1]) & (iy >= 0) & (iy < table.shape[0])
        return np.where(ok, table[np.clip(iy, 0, table.shape[0] - 1), np.clip(ix, 0, table.shape[1] - 1)], 0.0)
    return kernel
#
# ============================================================================
# Function 4.3: bz_fft
# Purpose: Bz(r) = mu0/(2 pi) sum h^2 [Ky(r - r') Jx - Kx(r - r') Jy] with
#          the pixel-integrated kernels of cell_kernels. With this
#          orientation Laplace(Bz) = mu0 (d_x(sigma u_y) - d_y(sigma u_x)).
# ============================================================================
#
def bz_fft(J: VectorField2D, padding_factor: int = DEFAULT_PADDING_FACTOR, mu0: float = MU0) -> ScalarField:
    grid = J.grid
    jx = np.where(J.support, J.vx, 0.0)
    jy = np.where(J.support, J.vy, 0.0)
    if not (np.all(np.isfinite(jx)) and np.all(np.isfinite(jy))):
        raise FieldError("current density is not finite")
    kx, ky = cell_kernels(grid)
    total = (convolve_free_space(jx, grid, _tabulated(ky, grid), padding_factor)
             - convolve_free_space(jy, grid, _tabulated(kx, grid), padding_factor))
    scale = mu0 / (2.0 * np.pi) * grid.cell_area
    return ScalarField(grid, scale * total, Unit.TESLA)
#
# ============================================================================
# Function 4.4: bz_direct
# Purpose: The same quadrature by explicit summation over pixel pairs.
# ============================================================================
#
def bz_direct(J: VectorField2D, mu0: float = MU0) -> ScalarField:
    grid = J.grid
    iy, ix = np.divmod(np.arange(grid.ny * grid.nx), grid.nx)
    jx = np.where(J.support, J.vx, 0.0).ravel()
    jy = np.where(J.support, J.vy, 0.0).ravel()
    sources = np.flatnonzero((jx != 0) | (jy != 0))
    kx, ky = cell_kernels(grid)
    out = np.zeros(iy.size)
    for start in range(0, iy.size, _DIRECT_CHUNK):
        stop = min(start + _DIRECT_CHUNK, iy.size)
        oy = iy[start:stop, None] - iy[None, sources] + grid.ny - 1
        ox = ix[start:stop, None] - ix[None, sources] + grid.nx - 1
        out[start:stop] = (ky[oy, ox] * jx[sources] - kx[oy, ox] * jy[sources]).sum(axis=1)
    scale = mu0 / (2.0 * np.pi) * grid.cell_area
    return ScalarField(grid, scale * out.reshape(grid.shape), Unit.TESLA)
#
# ============================================================================
# SECTION 5: Measurement Perturbations
# ============================================================================
# Function 5.1: add_stray_field
# ============================================================================
#
def add_stray_field(Bz: ScalarField, coeffs: Sequence[float]) -> ScalarField:
    a, b, c = coeffs
    if a == 0 and b == 0 and c == 0:
        return Bz
    X, Y = Bz.grid.meshgrid()
    return Bz.with_values(Bz.values + (a + b * X + c * Y))


def add_noise(Bz: ScalarField, std: float, seed: int = 0) -> ScalarField:
    """Additive white Gaussian noise (T); std = 0 returns the input."""
    if std <= 0:
        return Bz
    rng = np.random.default_rng(seed)
    return Bz.with_values(Bz.values + rng.normal(0.0, std, Bz.grid.shape))


def analytic_laplacian_bz(sigma: ScalarField, u: ScalarField, mask: DomainMask, mu0: float = MU0) -> ScalarField:
    """mu0 (d_x(sigma u_y) - d_y(sigma u_x)) from first differences only."""
    current = compute_J(sigma, u, mask)
    # sigma grad u = -J, and perp(-J) = (sigma u_y, -sigma u_x)
    flux = current.scaled(-1.0).perp()
    result = divergence(flux, mask)
    return ScalarField(mask.grid, mu0 * result.values, Unit.TESLA_PER_M2, mask.inside)
#
# ============================================================================
# SECTION 6: Forward Run
# ============================================================================
# Function 6.1: run_forward
# ============================================================================
#
def run_forward(sigma: ScalarField, geometry: ImagingGeometry, current: float,
                padding_factor: int = DEFAULT_PADDING_FACTOR,
                settings: Optional[SolverSettings] = None, mu0: float = MU0) -> ForwardSolution:
    u = solve_conduction(sigma, geometry.bc, current, settings)
    J = compute_J(sigma, u, geometry.mask)
    Bz = bz_fft(J, padding_factor, mu0)
    logger.info("forward: max|J| = {:.4e} A/m^2, max|Bz| = {:.4e} T",
                float(J.magnitude().max()), float(np.abs(Bz.values).max()))
    return ForwardSolution(sigma, u, J, Bz, current, mu0, padding_factor)
#
#
## End of Script
