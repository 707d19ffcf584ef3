# ============================================================================
#  File:    reconstruct.py
#  Purpose: Single-current harmonic Bz iteration
#             ln s^{n+1} = Poisson^{-1}(div s^n) on the region, ln s_b on its
#             boundary, s^{n+1} = s_b on the outer band
#           plus convergence verdicts and admissibility diagnostics
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger

from src.config import MU0, PLATEAU_RELATIVE_CHANGE, VERDICT_WINDOW, ZIGZAG_FRACTION
from src.config_manager import ReconstructionConfig, SolverSettings
from src.error_handling import FieldError, MetricsError, NumericError
from src.fields import (FaceField, ScalarField, Unit, VectorField2D, face_average, face_divergence, face_gradient,
                        face_vectors, gaussian_blur, gradient, laplacian)
from src.forward import compute_J, convolve_free_space
from src.geometry import DomainMask, ImagingGeometry
from src.metrics import RateFit, compute_re, fit_theta
from src.pde import solve_conduction, solve_poisson_dirichlet
from src.recovery import RecoveredCurrent, recover_current

VERDICTS = ("converged", "plateaued", "zigzag", "cap")
#
# ============================================================================
# SECTION 2: Types
# ============================================================================
# Class 2.1: MeasurementBundle
# Purpose: Everything derived once from Bz: Laplace(Bz), recovered J and the
#          |J| floor.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class MeasurementBundle:
    geometry: ImagingGeometry
    Bz: ScalarField
    laplace_bz: ScalarField
    recovered: RecoveredCurrent

    @property
    def J(self) -> VectorField2D:
        return self.recovered.J

    @property
    def j_floor(self) -> float:
        return self.recovered.j_floor
#
# ============================================================================
# Class 2.2: IterationState
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class IterationState:
    n: int
    sigma: ScalarField
    u: Optional[ScalarField] = None
    step_norm: Optional[float] = None
    re: Optional[float] = None
    min_j: Optional[float] = None
    clamped: bool = False
#
# ============================================================================
# Class 2.3: AdmissibilityReport
# ============================================================================
#
@dataclass(frozen=True)
class AdmissibilityReport:
    grad_log_sup: float
    sigma_min: float
    sigma_max: float
    band_deviation: float
    band_is_background: bool
    k_estimate: float
    eps0: float
    eps0_bound: float
    eps0_below_bound: bool
    gradient_within_eps0: bool
    gradient_below_bound: bool
    range_ok: bool

    @property
    def passed(self) -> bool:
        return (self.band_is_background and self.eps0_below_bound
                and self.gradient_within_eps0 and self.range_ok)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__}
        out["passed"] = self.passed
        return out
#
# ============================================================================
# Class 2.4: ReconstructionResult
# ============================================================================
#
@dataclass(eq=False)
class ReconstructionResult:
    sigma: ScalarField
    iterations: int
    step_norms: List[float]
    re_series: Optional[List[float]]
    reference_re: Optional[List[float]]
    min_j: List[float]
    clamped: List[bool]
    verdict: str
    rate: RateFit
    snapshots: Dict[int, ScalarField] = field(default_factory=dict)
    diagnostics: Dict[str, object] = field(default_factory=dict)
#
# ============================================================================
# SECTION 3: Iteration
# ============================================================================
# Function 3.1: assemble_s
# Purpose: s = t - t*, t = (sigma Lap u / |J|^2) J with sigma Lap u taken as
#          -grad u . grad sigma, t* = (Lap Bz / mu0 / |J|^2) perp(J), built on
#          the open faces of the mask. Normal derivatives are exact face
#          differences and J, Lap Bz are face means, so face_divergence of s
#          is consistent with the 5-point Poisson solve. |J|^2 is floored at
#          j_floor^2.
# ============================================================================
#
def assemble_s(sigma_n: ScalarField, u_n: ScalarField, J: VectorField2D, laplace_bz: ScalarField,
               mask: DomainMask, j_floor: float = 0.0, mu0: float = MU0) -> FaceField:
    grids = {sigma_n.grid, u_n.grid, J.grid, laplace_bz.grid, mask.grid}
    if len(grids) != 1:
        raise FieldError("assemble_s needs all inputs on one grid")
    grad_u = face_gradient(u_n, mask)
    grad_sigma = face_gradient(sigma_n, mask)
    current = face_vectors(J.restricted(mask.inside), mask)
    data_x, data_y = face_average(np.where(mask.inside, laplace_bz.values, 0.0) / mu0)

    def family(ux, uy, gx, gy, jx, jy, data):
        sigma_lap_u = -(ux * gx + uy * gy)
        j2 = np.maximum(jx * jx + jy * jy, j_floor * j_floor)
        safe = np.where(j2 > 0, j2, 1.0)
        a = np.where(j2 > 0, sigma_lap_u / safe, 0.0)
        b = np.where(j2 > 0, data / safe, 0.0)
        # perp(J) = (jy, -jx)
        return a * jx - b * jy, a * jy + b * jx

    xs = family(grad_u.xface_vx, grad_u.xface_vy, grad_sigma.xface_vx, grad_sigma.xface_vy,
                current.xface_vx, current.xface_vy, data_x)
    ys = family(grad_u.yface_vx, grad_u.yface_vy, grad_sigma.yface_vx, grad_sigma.yface_vy,
                current.yface_vx, current.yface_vy, data_y)
    x_open, y_open = current.x_open, current.y_open
    s = FaceField(mask.grid, np.where(x_open, xs[0], 0.0), np.where(x_open, xs[1], 0.0),
                  np.where(y_open, ys[0], 0.0), np.where(y_open, ys[1], 0.0), x_open, y_open, Unit.PER_M)
    if not all(np.all(np.isfinite(c)) for c in (s.xface_vx, s.xface_vy, s.yface_vx, s.yface_vy)):
        raise NumericError("non-finite values in the iteration vector field")
    return s
#
# ============================================================================
# Function 3.2: schbz_step
# ============================================================================
#
def schbz_step(state: IterationState, cfg: ReconstructionConfig, data: MeasurementBundle,
               settings: Optional[SolverSettings] = None) -> IterationState:
    geometry = data.geometry
    mask, region = geometry.mask, geometry.region
    sigma_n = state.sigma
    if np.any(sigma_n.values[mask.inside] <= 0):
        raise NumericError(f"iterate {state.n} lost positivity")

    u_n = solve_conduction(sigma_n, geometry.bc, cfg.current, settings)
    s_n = assemble_s(sigma_n, u_n, data.J, data.laplace_bz, mask, data.j_floor)
    div_s = face_divergence(s_n, Unit.PER_M2)
    log_b = math.log(cfg.sigma_b)
    log_next = solve_poisson_dirichlet(div_s, log_b, region, settings).values

    inside = region.inside
    clamped = bool(np.any(np.abs(log_next[inside]) > cfg.log_clamp))
    if clamped:
        logger.warning("iteration {}: ln(sigma) clamped to +-{:.3f}", state.n + 1, cfg.log_clamp)
        log_next = np.clip(log_next, -cfg.log_clamp, cfg.log_clamp)

    sigma_next = np.full(mask.grid.shape, cfg.sigma_b)
    sigma_next[inside] = np.exp(log_next[inside])
    step_norm = float(np.max(np.abs(log_next[inside] - np.log(sigma_n.values[inside]))))

    min_j = float(compute_J(sigma_n, u_n, mask).magnitude()[inside].min())
    return IterationState(
        n=state.n + 1,
        sigma=ScalarField(mask.grid, sigma_next, Unit.SIEMENS_PER_M),
        u=u_n,
        step_norm=step_norm,
        min_j=min_j,
        clamped=clamped,
    )
#
# ============================================================================
# Function 3.3: judge_verdict
# Purpose: converged when stopped by the tolerance without clamping;
#          plateaued when every relative change in the last VERDICT_WINDOW
#          steps is below the plateau threshold; zigzag when at least
#          ZIGZAG_FRACTION of those changes are increases of any size; cap
#          otherwise.
# ============================================================================
#
def judge_verdict(series: Sequence[float], stopped: bool, clamped: bool,
                  window: int = VERDICT_WINDOW, fraction: float = ZIGZAG_FRACTION,
                  flat: float = PLATEAU_RELATIVE_CHANGE) -> str:
    if stopped and not clamped:
        return "converged"
    tail = np.asarray(list(series)[-window:], dtype=float)
    if tail.size >= 3:
        previous, diffs = tail[:-1], np.diff(tail)
        scale = np.where(np.abs(previous) > 0, np.abs(previous), 1.0)
        if np.all(np.abs(diffs / scale) < flat):
            return "plateaued"
        if np.count_nonzero(diffs > 0) >= fraction * diffs.size:
            return "zigzag"
    return "cap"
#
# ============================================================================
# Function 3.4: prepare_measurement
# ============================================================================
#
def prepare_measurement(Bz: ScalarField, geometry: ImagingGeometry, cfg: ReconstructionConfig,
                        settings: Optional[SolverSettings] = None,
                        laplace_bz: Optional[ScalarField] = None) -> MeasurementBundle:
    if laplace_bz is None:
        source = Bz
        if cfg.presmooth is not None:
            source = gaussian_blur(Bz, cfg.presmooth.nu, cfg.presmooth.window)
        laplace_bz = laplacian(source, geometry.mask, Unit.TESLA_PER_M2)
    recovered = recover_current(Bz, cfg.current, geometry.bc, geometry.region, settings,
                                cfg.j_floor_fraction, laplace_bz)
    return MeasurementBundle(geometry, Bz, laplace_bz, recovered)
#
# ============================================================================
# Function 3.5: run_schbz
# ============================================================================
#
def run_schbz(cfg: ReconstructionConfig, Bz: ScalarField, geometry: ImagingGeometry,
              sigma_star: Optional[ScalarField] = None,
              settings: Optional[SolverSettings] = None,
              initial_sigma: Optional[ScalarField] = None,
              laplace_bz: Optional[ScalarField] = None,
              reference: Optional[ScalarField] = None,
              measurement: Optional[MeasurementBundle] = None) -> ReconstructionResult:
    """
    Iterate from sigma^0 = sigma_b until the sup-norm of ln(s^{n+1}/s^n) over
    the region drops to eps_stop or max_iter steps have run.

    `sigma_star` drives the RE series; `reference` adds a second RE series
    against another target (the unblurred phantom when the data come from
    its blurred twin). A precomputed `measurement` skips the recovery step.
    """
    data = measurement or prepare_measurement(Bz, geometry, cfg, settings, laplace_bz)
    mask = geometry.mask
    if initial_sigma is None:
        sigma0 = ScalarField(geometry.grid, np.full(geometry.grid.shape, cfg.sigma_b), Unit.SIEMENS_PER_M)
    else:
        sigma0 = initial_sigma
    state = IterationState(0, sigma0)

    step_norms: List[float] = []
    re_series: Optional[List[float]] = [] if sigma_star is not None else None
    reference_re: Optional[List[float]] = [] if reference is not None else None
    min_j: List[float] = []
    clamped: List[bool] = []
    snapshots: Dict[int, ScalarField] = {}
    wanted = set(cfg.snapshots)
    stopped = False

    for _ in range(cfg.max_iter):
        state = schbz_step(state, cfg, data, settings)
        if sigma_star is not None:
            state = replace(state, re=compute_re(state.sigma, sigma_star, mask))
            re_series.append(state.re)
        if reference is not None:
            reference_re.append(compute_re(state.sigma, reference, mask))
        step_norms.append(state.step_norm)
        min_j.append(state.min_j)
        clamped.append(state.clamped)
        if state.n in wanted:
            snapshots[state.n] = state.sigma
        logger.info("iteration {}: step {:.3e}{}", state.n, state.step_norm,
                    f", RE {state.re:.5f}" if state.re is not None else "")
        if state.step_norm <= cfg.eps_stop:
            stopped = True
            break

    series = re_series if re_series is not None else step_norms
    verdict = judge_verdict(series, stopped, any(clamped))
    try:
        rate = fit_theta(step_norms)
    except MetricsError:
        rate = RateFit(None, "insufficient", len(step_norms))

    final = state.sigma
    diagnostics = dict(data.recovered.diagnostics())
    diagnostics["xi0_proxy"] = data.recovered.min_j / float(final.values[mask.inside].max())
    diagnostics["stopped_by_tolerance"] = stopped
    diagnostics["any_clamped"] = any(clamped)
    logger.info("reconstruction finished after {} iterations: verdict {}, rate {}",
                state.n, verdict, rate.flag)
    return ReconstructionResult(final, state.n, step_norms, re_series, reference_re, min_j, clamped,
                                verdict, rate, snapshots, diagnostics)
#
# ============================================================================
# SECTION 4: Admissibility
# ============================================================================
# Function 4.1: estimate_k
# Purpose: sup over the domain of the integral over the region of
#          |grad Psi| = 1/(2 pi r). The singular cell uses the exact integral
#          of 1/r over a centered hx-by-hy rectangle.
# ============================================================================
#
def estimate_k(region: DomainMask, mask: DomainMask) -> float:
    grid = region.grid
    a, b = 0.5 * grid.hx, 0.5 * grid.hy
    centre = 4.0 * (a * math.asinh(b / a) + b * math.asinh(a / b)) / (2.0 * math.pi)

    def kernel(dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
        r = np.hypot(dx, dy)
        out = np.divide(grid.cell_area / (2.0 * math.pi), r, out=np.zeros_like(r), where=r > 0)
        return np.where(r > 0, out, centre)

    field_ = convolve_free_space(region.inside.astype(float), grid, kernel)
    return float(field_[mask.inside].max())
#
# ============================================================================
# Function 4.2: validate_admissible
# ============================================================================
#
def validate_admissible(sigma: ScalarField, cfg: ReconstructionConfig, geometry: ImagingGeometry) -> AdmissibilityReport:
    mask, region = geometry.mask, geometry.region
    log_sigma = sigma.log()
    grad = gradient(log_sigma, mask)
    grad_sup = float(grad.magnitude()[mask.inside].max())
    values = sigma.values[mask.inside]
    band = mask.inside & ~region.inside
    deviation = float(np.max(np.abs(sigma.values[band] - cfg.sigma_b))) if band.any() else 0.0
    k = estimate_k(region, mask)
    bound = 1.0 / (4.0 * k)
    low, high = cfg.sigma_bounds
    report = AdmissibilityReport(
        grad_log_sup=grad_sup,
        sigma_min=float(values.min()),
        sigma_max=float(values.max()),
        band_deviation=deviation,
        band_is_background=deviation <= 1e-12 * cfg.sigma_b,
        k_estimate=k,
        eps0=cfg.eps0,
        eps0_bound=bound,
        eps0_below_bound=cfg.eps0 < bound,
        gradient_within_eps0=grad_sup <= cfg.eps0,
        gradient_below_bound=grad_sup < bound,
        range_ok=bool(low <= values.min() and values.max() <= high),
    )
    if not report.passed:
        logger.warning("conductivity outside the admissible set: {}",
                       {k: v for k, v in report.as_dict().items() if v is False})
    return report
#
#
## End of Script
