# ============================================================================
#  File:    recovery.py
#  Purpose: Current density from Bz alone: J = perp grad(phi - (I/2) psi)
# ============================================================================
# SECTION 1: Imports
# ============================================================================
#
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from loguru import logger

from src.config import DEFAULT_J_FLOOR_FRACTION, MU0
from src.config_manager import SolverSettings
from src.fields import ScalarField, Unit, VectorField2D, gradient, laplacian
from src.geometry import BoundarySpec, DomainMask
from src.pde import solve_phi, solve_psi
#
# ============================================================================
# SECTION 2: Types
# ============================================================================
# Class 2.1: RecoveredCurrent
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class RecoveredCurrent:
    J: VectorField2D
    phi: ScalarField
    psi: ScalarField
    laplace_bz: ScalarField
    beta: float
    phi_line_integral: float
    psi_line_integral: float
    min_j: float
    max_j: float
    j_floor: float

    @property
    def beta_from_integrals(self) -> Optional[float]:
        """(I - int phi) / int psi, which reproduces beta = -I/2."""
        if self.psi_line_integral == 0:
            return None
        return (-2.0 * self.beta - self.phi_line_integral) / self.psi_line_integral

    def diagnostics(self) -> dict:
        return {
            "beta": self.beta,
            "beta_from_integrals": self.beta_from_integrals,
            "phi_line_integral": self.phi_line_integral,
            "psi_line_integral": self.psi_line_integral,
            "phi_sup": float(np.abs(self.phi.values).max()),
            "min_J": self.min_j,
            "max_J": self.max_j,
            "j_floor": self.j_floor,
            "floor_active": bool(self.min_j < self.j_floor),
        }
#
# ============================================================================
# SECTION 3: Line Integrals
# ============================================================================
# Function 3.1: check_beta
# Purpose: Tangential integrals over E+ as endpoint differences of the trace,
#          f(gamma- junction) - f(gamma+ junction). Each junction value is
#          extrapolated from the free E+ end pixels with f_J + a sqrt(d) + b d,
#          d the arc length from the Dirichlet neighbour node.
# ============================================================================
#
_END_PIXELS = 4


def _junction_value(field: ScalarField, chain: np.ndarray) -> float:
    """chain[0] is the Dirichlet neighbour, chain[1:] the E+ pixels walking inward."""
    grid = field.grid
    xy = np.column_stack([chain[:, 1] * grid.hx, chain[:, 0] * grid.hy])
    d = np.cumsum(np.hypot(*np.diff(xy, axis=0).T))
    values = field.values[chain[1:, 0], chain[1:, 1]]
    if d.size >= _END_PIXELS:
        basis = np.column_stack([np.ones_like(d), np.sqrt(d), d])
    elif d.size >= 2:
        basis = np.column_stack([np.ones_like(d), np.sqrt(d)])
    else:
        return float(values[0])
    coeffs, *_ = np.linalg.lstsq(basis, values, rcond=None)
    return float(coeffs[0])


def check_beta(phi: ScalarField, psi: ScalarField, bc: BoundarySpec) -> Tuple[float, float]:
    loop = bc.mask.boundary_pixels
    count = len(loop)
    e_plus = np.asarray(bc.e_plus, dtype=int)
    take = min(_END_PIXELS, e_plus.size)
    start = np.concatenate([[(e_plus[0] - 1) % count], e_plus[:take]])
    end = np.concatenate([[(e_plus[-1] + 1) % count], e_plus[::-1][:take]])

    def across(field: ScalarField) -> float:
        return _junction_value(field, loop[start]) - _junction_value(field, loop[end])

    return across(phi), across(psi)
#
# ============================================================================
# SECTION 4: Recovery
# ============================================================================
# Function 4.1: recover_current
# Purpose: phi from Laplace(Bz)/mu0, psi from the boundary partition, then
#          J = perp grad(phi - (I/2) psi). Never reads sigma.
# ============================================================================
#
def recover_current(Bz: ScalarField, current: float, bc: BoundarySpec,
                    region: Optional[DomainMask] = None,
                    settings: Optional[SolverSettings] = None,
                    floor_fraction: float = DEFAULT_J_FLOOR_FRACTION,
                    laplace_bz: Optional[ScalarField] = None,
                    mu0: float = MU0) -> RecoveredCurrent:
    mask = bc.mask
    if laplace_bz is None:
        laplace_bz = laplacian(Bz, mask, Unit.TESLA_PER_M2)
    rhs = laplace_bz.with_values(laplace_bz.values / mu0, Unit.AMPERE)
    phi = solve_phi(rhs, bc, settings)
    psi = solve_psi(bc, settings)

    beta = -0.5 * current
    potential = ScalarField(mask.grid, phi.values + beta * psi.values, Unit.AMPERE, mask.inside)
    J = gradient(potential, mask).perp()
    J = VectorField2D(mask.grid, J.vx, J.vy, Unit.AMPERE_PER_M, mask.inside).restricted(mask.inside)

    phi_int, psi_int = check_beta(phi, psi, bc)
    where = (region.inside if region is not None else mask.interior)
    magnitude = J.magnitude()[where]
    max_j = float(magnitude.max()) if magnitude.size else 0.0
    min_j = float(magnitude.min()) if magnitude.size else 0.0
    j_floor = floor_fraction * max_j
    if min_j < j_floor:
        logger.warning("min |J| = {:.3e} below floor {:.3e} ({:.0e} x max |J|); 1/|J|^2 is clamped there",
                       min_j, j_floor, floor_fraction)
    logger.info("recovery: int phi = {:.3e}, int psi = {:.6f}, |J| in [{:.3e}, {:.3e}]",
                phi_int, psi_int, min_j, max_j)
    return RecoveredCurrent(J, phi, psi, laplace_bz, beta, phi_int, psi_int, min_j, max_j, j_floor)
#
#
## End of Script
