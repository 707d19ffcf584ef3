# ============================================================================
#  File:    pde.py
#  Purpose: One finite-volume elliptic solver on pixel masks, reused for the
#           conduction problem, the phi/psi problems and the per-iteration
#           Poisson problem of the reconstruction
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu

from src.config_manager import SolverSettings
from src.error_handling import SolverError
from src.fields import ScalarField, Unit, harmonic_mean
from src.geometry import BoundarySpec, DomainMask

_cache_lock = threading.Lock()
_poisson_cache: Dict[Tuple[str, SolverSettings], "EllipticOperator"] = {}
_mixed_cache: Dict[Tuple[str, SolverSettings], "EllipticOperator"] = {}
_psi_cache: Dict[Tuple[str, SolverSettings], ScalarField] = {}
_CACHE_LIMIT = 8
_report_sinks: List[List["SolveReport"]] = []
#
# ============================================================================
# SECTION 2: Finite-Volume Geometry
# ============================================================================
# Function 2.1: edge_weights
# Purpose: Each 4-neighbour edge carries half of each adjacent 2x2 block that
#          lies fully inside: 1 in the interior, 1/2 along the boundary.
#          Pixel volumes count a quarter per adjacent full block.
# ============================================================================
#
def edge_weights(inside: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    full = (inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, :-1] & inside[1:, 1:]).astype(float)
    ny, nx = inside.shape
    wx = np.zeros((ny, nx - 1))
    wx[:-1, :] += 0.5 * full
    wx[1:, :] += 0.5 * full
    wy = np.zeros((ny - 1, nx))
    wy[:, :-1] += 0.5 * full
    wy[:, 1:] += 0.5 * full
    volume = np.zeros((ny, nx))
    volume[:-1, :-1] += 0.25 * full
    volume[:-1, 1:] += 0.25 * full
    volume[1:, :-1] += 0.25 * full
    volume[1:, 1:] += 0.25 * full
    return wx, wy, volume
#
# ============================================================================
# SECTION 3: Elliptic Operator
# ============================================================================
# Class 3.1: SolveReport
# Purpose: One linear solve: the relative residual of the starting point
#          (iteration 0), then after every iteration of the iterative path or
#          once after the direct one.
# ============================================================================
#
@dataclass(frozen=True)
class SolveReport:
    label: str
    method: str
    unknowns: int
    iterations: int
    relative_residual: float
    residuals: Tuple[float, ...] = ()

    def rows(self, solve: int) -> List[dict]:
        return [{"solve": solve, "label": self.label, "method": self.method, "unknowns": self.unknowns,
                 "iteration": i, "relative_residual": r} for i, r in enumerate(self.residuals)]


@contextmanager
def recording_solves() -> Iterator[List[SolveReport]]:
    """Collect the report of every linear solve run inside the block."""
    sink: List[SolveReport] = []
    with _cache_lock:
        _report_sinks.append(sink)
    try:
        yield sink
    finally:
        with _cache_lock:
            _report_sinks[:] = [s for s in _report_sinks if s is not sink]


def _publish(report: SolveReport) -> None:
    for sink in list(_report_sinks):
        sink.append(report)
#
# ============================================================================
# Class 3.2: EllipticOperator
# Purpose: Discretizes div(k grad f) = rhs on a mask with Dirichlet values on
#          a pixel subset and zero flux on the rest of the boundary. The
#          system over the unknowns is symmetric positive definite.
# ============================================================================
#
class EllipticOperator:

    def __init__(self, mask: DomainMask, dirichlet: np.ndarray,
                 coefficient: Optional[np.ndarray] = None,
                 settings: Optional[SolverSettings] = None, label: str = "elliptic"):
        self.mask = mask
        self.label = label
        self.settings = settings or SolverSettings()
        grid = mask.grid
        inside = mask.inside
        dirichlet = np.asarray(dirichlet, dtype=bool)
        if np.any(dirichlet & ~inside):
            raise SolverError("Dirichlet pixels must lie inside the mask")
        if not dirichlet.any():
            raise SolverError("singular system: no Dirichlet pixels")

        k = np.ones(grid.shape) if coefficient is None else np.asarray(coefficient, dtype=float)
        if not np.all(np.isfinite(k[inside])) or np.any(k[inside] <= 0):
            raise SolverError("singular system: coefficient must be finite and positive inside the mask")
        k = np.where(inside, k, 0.0)

        wx, wy, volume = edge_weights(inside)
        gx = wx * harmonic_mean(k[:, :-1], k[:, 1:]) * (grid.hy / grid.hx)
        gy = wy * harmonic_mean(k[:-1, :], k[1:, :]) * (grid.hx / grid.hy)

        flat = np.arange(inside.size).reshape(grid.shape)
        p = np.concatenate([flat[:, :-1].ravel(), flat[:-1, :].ravel()])
        q = np.concatenate([flat[:, 1:].ravel(), flat[1:, :].ravel()])
        g = np.concatenate([gx.ravel(), gy.ravel()])
        keep = g > 0
        self._p, self._q, self._g = p[keep], q[keep], g[keep]
        self.volume = volume * grid.cell_area

        rows = np.concatenate([self._p, self._q, self._p, self._q])
        cols = np.concatenate([self._p, self._q, self._q, self._p])
        data = np.concatenate([self._g, self._g, -self._g, -self._g])
        full = sp.coo_matrix((data, (rows, cols)), shape=(inside.size, inside.size)).tocsr()

        self.dirichlet = dirichlet
        self.unknown = inside & ~dirichlet
        self._unknown_idx = np.flatnonzero(self.unknown)
        self._dirichlet_idx = np.flatnonzero(dirichlet)
        self.matrix = full[self._unknown_idx][:, self._unknown_idx].tocsc()
        self._coupling = full[self._unknown_idx][:, self._dirichlet_idx].tocsr()
        self._check_grounded()
        self._lu = None
        self._last: Optional[np.ndarray] = None

    def _check_grounded(self) -> None:
        n = self.matrix.shape[0]
        if n == 0:
            return
        count, labels = connected_components(self.matrix, directed=False)
        grounded = np.zeros(count, dtype=bool)
        touches = np.asarray(abs(self._coupling).sum(axis=1)).ravel() > 0
        grounded[np.unique(labels[touches])] = True
        if not grounded.all():
            raise SolverError(f"singular system: {int((~grounded).sum())} group(s) of unknowns "
                              "have no path to a Dirichlet pixel")

    # =========================================================================
    # Method 3.2.1: solve
    # =========================================================================
    def solve(self, rhs: Optional[np.ndarray] = None,
              dirichlet_values: Optional[np.ndarray] = None) -> Tuple[np.ndarray, SolveReport]:
        """Full-grid solution; Dirichlet pixels carry their values, outside is 0."""
        shape = self.mask.grid.shape
        g = np.zeros(shape) if dirichlet_values is None else np.broadcast_to(dirichlet_values, shape)
        b = -self._coupling @ g.ravel()[self._dirichlet_idx]
        if rhs is not None:
            r = np.asarray(rhs, dtype=float).ravel()[self._unknown_idx]
            if not np.all(np.isfinite(r)):
                raise SolverError("right-hand side is not finite on the unknowns")
            b = b - self.volume.ravel()[self._unknown_idx] * r

        x, report = self._solve_system(b)
        out = np.zeros(shape)
        out.ravel()[self._unknown_idx] = x
        out.ravel()[self._dirichlet_idx] = g.ravel()[self._dirichlet_idx]
        return out, report

    def _solve_system(self, b: np.ndarray) -> Tuple[np.ndarray, SolveReport]:
        n = self.matrix.shape[0]
        if n == 0:
            return np.zeros(0), SolveReport(self.label, self.settings.method, 0, 0, 0.0)
        method = self.settings.method
        norm_b = np.linalg.norm(b)
        scale = norm_b if norm_b > 0 else 1.0
        history: List[float] = []
        if method == "direct":
            if self._lu is None:
                try:
                    self._lu = splu(self.matrix)
                except RuntimeError as e:
                    raise SolverError(f"sparse factorization failed: {e}") from e
            x = self._lu.solve(b)
        else:
            diagonal = self.matrix.diagonal()
            preconditioner = sp.diags(1.0 / diagonal)

            def _track(xk):
                history.append(float(np.linalg.norm(self.matrix @ xk - b) / scale))

            x0 = self._last if self._last is not None and self._last.shape == b.shape else None
            start = x0 if x0 is not None else np.zeros_like(b)
            history.append(float(np.linalg.norm(self.matrix @ start - b) / scale))
            x, info = cg(self.matrix, b, x0=x0, rtol=self.settings.rtol, atol=0.0,
                         maxiter=self.settings.maxiter, M=preconditioner, callback=_track)
            if info != 0:
                raise SolverError(f"conjugate gradient did not converge in {self.settings.maxiter} "
                                  f"iterations (info={info})")
            self._last = x
        if not np.all(np.isfinite(x)):
            raise SolverError("linear solve produced non-finite values")
        residual = float(np.linalg.norm(self.matrix @ x - b) / norm_b) if norm_b > 0 else 0.0
        if method == "direct":
            history.extend([float(norm_b / scale), residual])
        report = SolveReport(self.label, method, n, len(history) - 1, residual, tuple(history))
        _publish(report)
        logger.debug("solve {} ({}): {} unknowns, {} iterations, residual {:.2e}",
                     self.label, method, n, report.iterations, residual)
        return x, report

    # =========================================================================
    # Method 3.2.2: flux
    # Purpose: Net flux leaving a pixel set into the rest of the domain,
    #          summed over faces: sum G_pq (f_p - f_q).
    # =========================================================================
    def flux(self, values: np.ndarray, piece: np.ndarray) -> float:
        f = np.asarray(values, dtype=float).ravel()
        member = np.asarray(piece, dtype=bool).ravel()
        out_pq = member[self._p] & ~member[self._q]
        out_qp = member[self._q] & ~member[self._p]
        total = np.sum(self._g[out_pq] * (f[self._p[out_pq]] - f[self._q[out_pq]]))
        total += np.sum(self._g[out_qp] * (f[self._q[out_qp]] - f[self._p[out_qp]]))
        return float(total)
#
# ============================================================================
# SECTION 4: Solver Uses
# ============================================================================
# Function 4.1: solve_elliptic
# ============================================================================
#
def solve_elliptic(mask: DomainMask, dirichlet: np.ndarray, dirichlet_values: Optional[np.ndarray] = None,
                   rhs: Optional[np.ndarray] = None, coefficient: Optional[np.ndarray] = None,
                   settings: Optional[SolverSettings] = None) -> np.ndarray:
    operator = EllipticOperator(mask, dirichlet, coefficient, settings)
    values, _ = operator.solve(rhs, dirichlet_values)
    return values


def _remember(cache: dict, key, value):
    if len(cache) >= _CACHE_LIMIT:
        cache.pop(next(iter(cache)))
    cache[key] = value
    return value
#
# ============================================================================
# Function 4.2: solve_conduction
# Purpose: Equipotential electrodes with total current I. Solves w with
#          w = 1 on E+, w = 0 on E-, zero flux on the insulated arcs, then
#          scales u = (I / I_w) w where I_w is the flux of w through E+.
# ============================================================================
#
def solve_conduction(sigma: ScalarField, bc: BoundarySpec, current: float,
                     settings: Optional[SolverSettings] = None) -> ScalarField:
    mask = bc.mask
    sigma.require_on(mask)
    if np.any(sigma.values[mask.inside] <= 0):
        raise SolverError("singular system: conductivity must be positive inside the domain")
    e_plus = bc.piece_mask("e_plus")
    e_minus = bc.piece_mask("e_minus")
    operator = EllipticOperator(mask, e_plus | e_minus, sigma.values, settings, "conduction")
    w, _ = operator.solve(None, e_plus.astype(float))
    flux_w = operator.flux(w, e_plus)
    if not flux_w > 0:
        raise SolverError(f"auxiliary potential carries no current (flux {flux_w})")
    u = (current / flux_w) * w
    logger.debug("conduction: I_w = {:.6e}, electrode potential {:.6e} V", flux_w, current / flux_w)
    return ScalarField(mask.grid, u, Unit.VOLT, mask.inside)


def electrode_flux(sigma: ScalarField, u: ScalarField, bc: BoundarySpec, piece: str = "e_plus") -> float:
    """Current leaving the electrode `piece` into the domain."""
    e_plus = bc.piece_mask("e_plus")
    e_minus = bc.piece_mask("e_minus")
    operator = EllipticOperator(bc.mask, e_plus | e_minus, sigma.values)
    return operator.flux(u.values, bc.piece_mask(piece))
#
# ============================================================================
# Function 4.3: solve_poisson_dirichlet
# Purpose: 5-point Poisson problem on a region with Dirichlet values on the
#          region's boundary loop. Factorizations are cached per region.
# ============================================================================
#
def _poisson_operator(region: DomainMask, settings: SolverSettings) -> EllipticOperator:
    key = (region.fingerprint, settings)
    with _cache_lock:
        operator = _poisson_cache.get(key)
        if operator is None:
            operator = _remember(_poisson_cache, key, EllipticOperator(region, region.rim, None, settings, "poisson"))
        else:
            logger.debug("poisson operator cache hit")
        return operator


def solve_poisson_dirichlet(rhs: ScalarField, boundary_value: Union[ScalarField, float],
                            region: DomainMask, settings: Optional[SolverSettings] = None) -> ScalarField:
    settings = settings or SolverSettings()
    if rhs.grid != region.grid:
        raise SolverError("right-hand side and region grids differ")
    if isinstance(boundary_value, ScalarField):
        g = np.asarray(boundary_value.values)
    else:
        g = np.full(region.grid.shape, float(boundary_value))
    source = np.where(region.interior, rhs.values, 0.0)
    operator = _poisson_operator(region, settings)
    with _cache_lock:
        values, _ = operator.solve(source, g)
    return ScalarField(region.grid, values, rhs.unit, region.inside)
#
# ============================================================================
# Function 4.4: solve_phi / solve_psi
# Purpose: Zero flux on E+ and E-, Dirichlet on the insulated arcs. Both share
#          one cached operator per boundary partition.
# ============================================================================
#
def _mixed_operator(bc: BoundarySpec, settings: SolverSettings) -> EllipticOperator:
    key = (bc.fingerprint, settings)
    with _cache_lock:
        operator = _mixed_cache.get(key)
        if operator is None:
            gamma = bc.piece_mask("gamma_plus") | bc.piece_mask("gamma_minus")
            operator = _remember(_mixed_cache, key, EllipticOperator(bc.mask, gamma, None, settings, "phi_psi"))
        return operator


def solve_phi(laplace_bz_over_mu0: ScalarField, bc: BoundarySpec,
              settings: Optional[SolverSettings] = None) -> ScalarField:
    """Laplace(phi) = data inside, zero flux on E+-, phi = 0 on the arcs."""
    settings = settings or SolverSettings()
    laplace_bz_over_mu0.require_on(bc.mask)
    operator = _mixed_operator(bc, settings)
    with _cache_lock:
        values, _ = operator.solve(np.where(bc.mask.inside, laplace_bz_over_mu0.values, 0.0), None)
    return ScalarField(bc.mask.grid, values, Unit.AMPERE, bc.mask.inside)


def solve_psi(bc: BoundarySpec, settings: Optional[SolverSettings] = None) -> ScalarField:
    """Harmonic psi, zero flux on E+-, psi = +1 on gamma+ and -1 on gamma-."""
    settings = settings or SolverSettings()
    key = (bc.fingerprint, settings)
    with _cache_lock:
        cached = _psi_cache.get(key)
    if cached is not None:
        logger.debug("psi cache hit")
        return cached
    operator = _mixed_operator(bc, settings)
    g = bc.piece_mask("gamma_plus").astype(float) - bc.piece_mask("gamma_minus").astype(float)
    with _cache_lock:
        values, _ = operator.solve(None, g)
        psi = _remember(_psi_cache, key, ScalarField(bc.mask.grid, values, Unit.DIMENSIONLESS, bc.mask.inside))
    return psi


def clear_caches() -> None:
    with _cache_lock:
        _poisson_cache.clear()
        _mixed_cache.clear()
        _psi_cache.clear()
#
#
## End of Script
