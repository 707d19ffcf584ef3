# ============================================================================
#  File:    experiment.py
#  Purpose: Staged experiment pipeline: geometry, phantom, forward,
#           recovery, reconstruct, emit
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np
from loguru import logger

from src.artifacts import (ArtifactRecord, read_series_csv, write_field, write_field_csv,
                           write_heatmap, write_manifest, write_series_csv, content_hash)
from src.config import COMPARE_STEPS, MU0
from src.config_manager import ExperimentConfig, ExperimentConfigManager
from src.error_handling import ArtifactError, MreitError, StageError
from src.fields import ScalarField, Unit
from src.forward import ForwardSolution, add_noise, add_stray_field, analytic_laplacian_bz, run_forward
from src.geometry import DomainShape, ElectrodeSegment, ImagingGeometry, build_geometry, build_grid
from src.pde import SolveReport, recording_solves
from src.phantom import PhantomSpec, build_phantom
from src.reconstruct import (AdmissibilityReport, MeasurementBundle, ReconstructionResult,
                             prepare_measurement, run_schbz, validate_admissible)
from src.telemetry import record_telemetry

SERIES_FILE = "re_series.csv"
MANIFEST_FILE = "manifest.json"
BLURRED_DIR = "blurred"
RESIDUALS_FILE = "residuals.csv"
RESIDUAL_COLUMNS = ("solve", "label", "method", "unknowns", "iteration", "relative_residual")

T = TypeVar("T")
#
# ============================================================================
# SECTION 2: Settings Converters
# ============================================================================
# Function 2.1: geometry_from_config
# ============================================================================
#
def _segment(settings) -> ElectrodeSegment:
    return ElectrodeSegment(kind=settings.kind, box=settings.box,
                            angle_deg=settings.angle_deg, length=settings.length or 0.0)


def geometry_from_config(config: ExperimentConfig) -> ImagingGeometry:
    g = config.grid
    grid = build_grid(g.nx, g.ny, g.fov_x, g.fov_y, g.origin)
    d = config.domain
    shape = DomainShape(shape=d.shape, center=d.center, diameter=d.diameter,
                        path=Path(d.path) if d.path else None, threshold=d.threshold)
    return build_geometry(grid, shape, _segment(config.electrodes.plus),
                          _segment(config.electrodes.minus), config.reconstruction.margin)


def phantom_spec_from_config(config: ExperimentConfig) -> PhantomSpec:
    p = config.phantom
    return PhantomSpec(
        kind=p.kind,
        background=config.reconstruction.sigma_b,
        variant=p.variant,
        path=Path(p.path) if p.path else None,
        scale=p.scale,
        center=p.center,
        sigma_range=p.sigma_range,
        blur=(p.blur.nu, p.blur.window) if p.blur else None,
    )
#
# ============================================================================
# SECTION 3: Data Structures
# ============================================================================
# Class 3.1: ArmResult
# Purpose: One reconstruction from one target: raw phantom or blurred twin.
# ============================================================================
#
@dataclass(eq=False)
class ArmResult:
    name: str
    target: ScalarField
    admissibility: AdmissibilityReport
    forward: Optional[ForwardSolution] = None
    Bz: Optional[ScalarField] = None
    measurement: Optional[MeasurementBundle] = None
    result: Optional[ReconstructionResult] = None
    artifacts: List[ArtifactRecord] = field(default_factory=list)
    solves: List[SolveReport] = field(default_factory=list)

    def series_rows(self) -> List[Dict[str, Any]]:
        """re is always against the raw phantom, re_hat against a blurred target."""
        r = self.result
        rows = []
        for i in range(r.iterations):
            if self.name == "blurred":
                re = r.reference_re[i] if r.reference_re is not None else None
                re_hat = r.re_series[i]
            else:
                re, re_hat = r.re_series[i], None
            rows.append({"n": i + 1, "step_norm": r.step_norms[i], "re": re, "re_hat": re_hat,
                         "min_J": r.min_j[i], "clamped_flag": r.clamped[i]})
        return rows

    def residual_rows(self) -> List[Dict[str, Any]]:
        return [row for k, report in enumerate(self.solves, start=1) for row in report.rows(k)]

    def summary(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"admissibility": self.admissibility.as_dict()}
        if self.forward is not None:
            out["forward"] = {
                "max_J": float(self.forward.J.magnitude().max()),
                "max_abs_Bz": float(np.abs(self.forward.Bz.values).max()),
            }
        if self.result is not None:
            r = self.result
            out.update({
                "iterations": r.iterations,
                "verdict": r.verdict,
                "rate": r.rate.as_dict(),
                "final_step_norm": r.step_norms[-1] if r.step_norms else None,
                "final_re": r.re_series[-1] if r.re_series else None,
                "final_reference_re": r.reference_re[-1] if r.reference_re else None,
                "diagnostics": r.diagnostics,
            })
        return out
#
# ============================================================================
# SECTION 4: Runner
# ============================================================================
# Class 4.1: ExperimentRunner
# ============================================================================
#
class ExperimentRunner:
    """
    Runs one experiment file end to end. Every stage is timed through the
    telemetry decorator; a failure is re-raised as StageError naming it.
    """

    def __init__(self, manager: ExperimentConfigManager, output_root: Optional[str] = None):
        self.manager = manager
        self.config: ExperimentConfig = manager.get()
        self.recon_cfg = self.config.reconstruction_config()
        self.solver = self.config.solver
        self.run_dir = manager.output_root(output_root) / self.config.name
        self.geometry: Optional[ImagingGeometry] = None
        self.arms: List[ArmResult] = []
        self._raw_target: Optional[ScalarField] = None
        self.heatmap_range: Tuple[float, float] = (0.0, 1.0)

    # =========================================================================
    # Method 4.1.1: _stage
    # =========================================================================
    def _stage(self, name: str, func: Callable[..., T], *args) -> T:
        logger.info("stage {}: start", name)
        try:
            result = func(*args)
        except StageError:
            raise
        except MreitError as e:
            raise StageError(name, e) from e
        except (ArithmeticError, ValueError, MemoryError) as e:
            raise StageError(name, e) from e
        logger.info("stage {}: done", name)
        return result

    # =========================================================================
    # Method 4.1.2: stages
    # =========================================================================
    @record_telemetry("experiment", "geometry")
    def geometry_stage(self) -> ImagingGeometry:
        geometry = geometry_from_config(self.config)
        logger.info("geometry: {}", geometry.describe())
        return geometry

    @record_telemetry("experiment", "phantom")
    def phantom_stage(self, geometry: ImagingGeometry) -> List[ArmResult]:
        spec = phantom_spec_from_config(self.config)
        raw, blurred = build_phantom(spec, geometry)
        targets = []
        if blurred is None or self.config.phantom.paired:
            targets.append(("raw", raw))
        if blurred is not None:
            targets.append(("blurred", blurred))
        inside = geometry.mask.inside
        values = np.concatenate([t.values[inside] for _, t in targets])
        self.heatmap_range = (float(values.min()), float(values.max()))
        self._raw_target = raw
        return [ArmResult(name, target, validate_admissible(target, self.recon_cfg, geometry))
                for name, target in targets]

    @record_telemetry("experiment", "forward")
    def forward_stage(self, arm: ArmResult) -> None:
        fwd = self.config.forward
        arm.forward = run_forward(arm.target, self.geometry, self.config.current,
                                  fwd.padding_factor, self.solver, MU0)
        Bz = add_noise(arm.forward.Bz, fwd.noise_std, fwd.noise_seed)
        arm.Bz = add_stray_field(Bz, fwd.stray_field)

    @record_telemetry("experiment", "recovery")
    def recovery_stage(self, arm: ArmResult) -> None:
        laplace_bz = None
        if self.config.forward.analytic_laplacian:
            laplace_bz = analytic_laplacian_bz(arm.target, arm.forward.u, self.geometry.mask, MU0)
        arm.measurement = prepare_measurement(arm.Bz, self.geometry, self.recon_cfg, self.solver, laplace_bz)

    @record_telemetry("experiment", "reconstruct")
    def reconstruct_stage(self, arm: ArmResult) -> None:
        reference = self._raw_target if arm.name == "blurred" else None
        arm.result = run_schbz(self.recon_cfg, arm.Bz, self.geometry, sigma_star=arm.target,
                               settings=self.solver, reference=reference, measurement=arm.measurement)

    @record_telemetry("experiment", "emit")
    def emit_stage(self) -> Path:
        out = self.config.output
        vmin, vmax = self.heatmap_range
        inside = self.geometry.mask.inside
        for arm in self.arms:
            folder = self.run_dir if arm.name == "raw" else self.run_dir / BLURRED_DIR
            records = arm.artifacts
            records.append(write_series_csv(folder / SERIES_FILE, arm.series_rows()))
            fields = {"sigma_star": arm.target, "sigma_final": arm.result.sigma, "bz": arm.Bz}
            J = arm.measurement.J
            fields["jx"] = ScalarField(J.grid, J.vx, Unit.AMPERE_PER_M)
            fields["jy"] = ScalarField(J.grid, J.vy, Unit.AMPERE_PER_M)
            snapshots = {f"sigma_n{n:03d}": s for n, s in sorted(arm.result.snapshots.items())}
            if out.emit_fields:
                for name, f in {**fields, **snapshots}.items():
                    records.append(write_field(folder / f"{name}.field", f))
            if out.emit_csv:
                records.append(write_field_csv(folder / "sigma_final.csv", arm.result.sigma))
            if out.emit_residuals:
                records.append(write_series_csv(folder / RESIDUALS_FILE, arm.residual_rows(), RESIDUAL_COLUMNS))
            if out.emit_heatmaps:
                images = {"sigma_star": arm.target, "sigma_final": arm.result.sigma, **snapshots}
                for name, f in images.items():
                    records.append(write_heatmap(folder / f"{name}.png", f.values, vmin, vmax, inside))
        manifest = self.manifest()
        write_manifest(self.run_dir / MANIFEST_FILE, manifest)
        return self.run_dir

    # =========================================================================
    # Method 4.1.3: manifest
    # =========================================================================
    def manifest(self) -> Dict[str, Any]:
        config = self.config
        inputs = self.manager.referenced_files()
        blur = config.phantom.blur
        knobs = {
            "mu0": MU0,
            "current": config.current,
            "padding_factor": config.forward.padding_factor,
            "analytic_laplacian": config.forward.analytic_laplacian,
            "stray_field": list(config.forward.stray_field),
            "noise_std": config.forward.noise_std,
            "noise_seed": config.forward.noise_seed,
            "blur": {"nu": blur.nu, "window": blur.window} if blur else None,
            "presmooth": self.recon_cfg.presmooth.model_dump() if self.recon_cfg.presmooth else None,
            "margin": self.recon_cfg.margin,
            "j_floor_fraction": self.recon_cfg.j_floor_fraction,
            "log_clamp": self.recon_cfg.log_clamp,
            "sigma_b": self.recon_cfg.sigma_b,
            "eps_stop": self.recon_cfg.eps_stop,
            "max_iter": self.recon_cfg.max_iter,
            "eps0": self.recon_cfg.eps0,
            "solver": self.solver.model_dump(),
            "heatmap_range": list(self.heatmap_range),
        }
        return {
            "name": config.name,
            "config": self.manager.as_written(),
            "knobs": knobs,
            "content_hash": content_hash(self.manager.canonical_text(), inputs),
            "inputs": [p.name for p in inputs],
            "geometry": self.geometry.describe(),
            "arms": {arm.name: {**arm.summary(),
                                "artifacts": [a.as_dict(self.run_dir) for a in arm.artifacts]}
                     for arm in self.arms},
        }

    # =========================================================================
    # Method 4.1.4: run / dry_run
    # =========================================================================
    def run(self) -> Path:
        logger.info("experiment {} -> {}", self.config.name, self.run_dir)
        self.geometry = self._stage("geometry", self.geometry_stage)
        self.arms = self._stage("phantom", self.phantom_stage, self.geometry)
        for arm in self.arms:
            logger.info("arm {}", arm.name)
            with recording_solves() as solves:
                self._stage("forward", self.forward_stage, arm)
                self._stage("recovery", self.recovery_stage, arm)
                self._stage("reconstruct", self.reconstruct_stage, arm)
            arm.solves = solves
        return self._stage("emit", self.emit_stage)

    def dry_run(self) -> Dict[str, Any]:
        """Geometry, phantom and admissibility only; no linear solves."""
        self.geometry = self._stage("geometry", self.geometry_stage)
        self.arms = self._stage("phantom", self.phantom_stage, self.geometry)
        missing = [str(p) for p in self.manager.referenced_files() if not p.exists()]
        return {
            "name": self.config.name,
            "geometry": self.geometry.describe(),
            "missing_inputs": missing,
            "arms": {arm.name: arm.admissibility.as_dict() for arm in self.arms},
            "run_dir": str(self.run_dir),
        }
#
# ============================================================================
# SECTION 5: Comparison
# ============================================================================
# Function 5.1: compare_runs
# Purpose: RE at the reporting steps for two run folders. A folder's value is
#          re_hat when present, else re; a run that stopped early carries its
#          last value forward.
# ============================================================================
#
def _series_values(run_dir: Path) -> List[float]:
    path = Path(run_dir) / SERIES_FILE
    if not path.exists():
        raise ArtifactError(f"no {SERIES_FILE} in {run_dir}")
    values = []
    for row in read_series_csv(path):
        cell = row.get("re_hat") or row.get("re") or ""
        if cell == "":
            raise ArtifactError(f"{path}: series without RE values")
        values.append(float(cell))
    if not values:
        raise ArtifactError(f"{path}: empty series")
    return values


def compare_runs(dir_a: Path, dir_b: Path, steps=COMPARE_STEPS) -> List[Tuple[int, float, float]]:
    a, b = _series_values(dir_a), _series_values(dir_b)
    return [(n, a[min(n, len(a)) - 1], b[min(n, len(b)) - 1]) for n in steps]
#
#
## End of Script
