"""
╔═════════════════════════════════════════════════════════════════════════════╗
║                      EXPERIMENT CONFIGURATION MANAGER                       ║
║ Purpose: Loading, validation and path resolution of experiment files       ║
║ File:    config_manager.py                                                  ║
╠═════════════════════════════════════════════════════════════════════════════╣
║ Section 1: Initial Settings and Imports                                     ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
import copy
import json
import os
import threading
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config import (DEFAULT_J_FLOOR_FRACTION, DEFAULT_MARGIN, DEFAULT_OUTPUT_ROOT,
                        DEFAULT_PADDING_FACTOR, DEFAULT_SOLVER_MAXITER, DEFAULT_SOLVER_METHOD,
                        DEFAULT_SOLVER_RTOL, LOG_CLAMP, OUTPUT_ROOT_ENV)
from src.config_validate import format_errors, get_validation_errors, yaml_line_index
from src.error_handling import ConfigError

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(PROJECT_ROOT, "config")

_config_lock = threading.Lock()
#
"""
╔═════════════════════════════════════════════════════════════════════════════╗
║ Section 2: Pydantic Configuration Models                                    ║
╠═════════════════════════════════════════════════════════════════════════════╣
║ Class 2.1: GridSettings, DomainSettings, ElectrodeSettings                  ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSettings(_Section):
    nx: int = Field(ge=8)
    ny: int = Field(ge=8)
    fov_x: float = Field(gt=0)
    fov_y: float = Field(gt=0)
    origin: Tuple[float, float]


class DomainSettings(_Section):
    shape: Literal["square", "disc", "mask_image"]
    center: Tuple[float, float] = (0.0, 0.0)
    diameter: Optional[float] = Field(default=None, gt=0)
    path: Optional[str] = None
    threshold: int = Field(default=128, ge=0, le=255)

    @model_validator(mode="after")
    def _shape_arguments(self):
        if self.shape == "disc" and self.diameter is None:
            raise ValueError("disc domain requires 'diameter'")
        if self.shape == "mask_image" and not self.path:
            raise ValueError("mask_image domain requires 'path'")
        return self


class ElectrodeSettings(_Section):
    kind: Literal["box", "arc"]
    box: Optional[Tuple[float, float, float, float]] = None
    angle_deg: float = 0.0
    length: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _kind_arguments(self):
        if self.kind == "box":
            if self.box is None:
                raise ValueError("box electrode requires 'box: [xmin, xmax, ymin, ymax]'")
            xmin, xmax, ymin, ymax = self.box
            if xmin > xmax or ymin > ymax:
                raise ValueError("electrode box bounds are inverted")
        if self.kind == "arc" and self.length is None:
            raise ValueError("arc electrode requires 'length'")
        return self


class ElectrodePairSettings(_Section):
    plus: ElectrodeSettings
    minus: ElectrodeSettings
# End class
"""
╔═════════════════════════════════════════════════════════════════════════════╗
║ Class 2.2: PhantomSettings, ForwardSettings, SolverSettings                 ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
class BlurSettings(_Section):
    nu: float = Field(gt=0)
    window: int = Field(ge=3)

    @model_validator(mode="after")
    def _odd_window(self):
        if self.window % 2 == 0:
            raise ValueError(f"blur window must be odd, got {self.window}")
        return self


class PhantomSettings(_Section):
    kind: Literal["toy_lens", "shepp_logan", "image"]
    variant: Literal["verbatim", "single_offset"] = "verbatim"
    path: Optional[str] = None
    scale: float = Field(default=0.2, gt=0)
    center: Tuple[float, float] = (0.0, 0.0)
    sigma_range: Tuple[float, float] = (0.5, 2.0)
    blur: Optional[BlurSettings] = None
    paired: bool = True

    @model_validator(mode="after")
    def _phantom_arguments(self):
        if self.kind == "image" and not self.path:
            raise ValueError("image phantom requires 'path'")
        low, high = self.sigma_range
        if not 0 < low < high:
            raise ValueError(f"sigma_range must satisfy 0 < low < high, got {self.sigma_range}")
        return self


class ForwardSettings(_Section):
    padding_factor: int = Field(default=DEFAULT_PADDING_FACTOR, ge=2)
    analytic_laplacian: bool = False
    stray_field: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    noise_std: float = Field(default=0.0, ge=0)
    noise_seed: int = Field(default=0, ge=0)


class SolverSettings(_Section):
    method: Literal["direct", "cg"] = DEFAULT_SOLVER_METHOD
    rtol: float = Field(default=DEFAULT_SOLVER_RTOL, gt=0)
    maxiter: int = Field(default=DEFAULT_SOLVER_MAXITER, ge=1)
# End class
"""
╔═════════════════════════════════════════════════════════════════════════════╗
║ Class 2.3: ReconstructionSettings, ReconstructionConfig                     ║
║ Purpose:   Iteration knobs; the config adds the injected current.          ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
class ReconstructionSettings(_Section):
    sigma_b: float = Field(gt=0)
    margin: int = Field(default=DEFAULT_MARGIN, ge=1)
    eps_stop: float = Field(gt=0)
    max_iter: int = Field(ge=1)
    j_floor_fraction: float = Field(default=DEFAULT_J_FLOOR_FRACTION, ge=0, le=1)
    eps0: float = Field(default=0.2, gt=0)
    sigma_minus0: Optional[float] = Field(default=None, gt=0)
    sigma_plus0: Optional[float] = Field(default=None, gt=0)
    presmooth: Optional[BlurSettings] = None
    log_clamp: float = Field(default=LOG_CLAMP, gt=0)
    snapshots: List[int] = Field(default_factory=lambda: [1, 20, 50])

    @model_validator(mode="after")
    def _admissible_bounds(self):
        low = self.sigma_minus0 if self.sigma_minus0 is not None else self.sigma_b
        high = self.sigma_plus0 if self.sigma_plus0 is not None else self.sigma_b
        if not low <= self.sigma_b <= high:
            raise ValueError(f"need sigma_minus0 <= sigma_b <= sigma_plus0, got {low}, {self.sigma_b}, {high}")
        return self

    @property
    def sigma_bounds(self) -> Tuple[float, float]:
        low = self.sigma_minus0 if self.sigma_minus0 is not None else self.sigma_b
        high = self.sigma_plus0 if self.sigma_plus0 is not None else self.sigma_b
        return low, high


class ReconstructionConfig(ReconstructionSettings):
    current: float = Field(ge=0)


class OutputSettings(_Section):
    root: str = DEFAULT_OUTPUT_ROOT
    emit_fields: bool = True
    emit_csv: bool = True
    emit_heatmaps: bool = True
    emit_residuals: bool = False
# End class
"""
╔═════════════════════════════════════════════════════════════════════════════╗
║ Class 2.4: ExperimentConfig                                                 ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
class ExperimentConfig(_Section):
    name: str
    grid: GridSettings
    domain: DomainSettings
    electrodes: ElectrodePairSettings
    phantom: PhantomSettings
    current: float = Field(gt=0)
    forward: ForwardSettings = ForwardSettings()
    reconstruction: ReconstructionSettings
    solver: SolverSettings = SolverSettings()
    output: OutputSettings = OutputSettings()

    def reconstruction_config(self) -> ReconstructionConfig:
        return ReconstructionConfig(current=self.current, **self.reconstruction.model_dump())
# End class
"""
╔═════════════════════════════════════════════════════════════════════════════╗
║ Section 3: ExperimentConfigManager                                          ║
║ Purpose:   Thread-safe loading of one experiment file                       ║
╚═════════════════════════════════════════════════════════════════════════════╝
"""
PATH_KEYS = (("domain", "path"), ("phantom", "path"))


class ExperimentConfigManager:
    """
    Loads an experiment YAML file, validates it against the JSON schema and
    the pydantic models, and resolves image paths against the file's folder.
    """

    def __init__(self, config_path):
        self.config_path = Path(config_path).resolve()
        self._config: Optional[ExperimentConfig] = None
        self._as_written: Dict[str, Any] = {}
        self.reload()

    # =========================================================================
    # Function 3.1: reload
    # =========================================================================
    def reload(self) -> None:
        with _config_lock:
            try:
                text = self.config_path.read_text(encoding="utf-8")
            except FileNotFoundError:
                raise ConfigError(f"configuration file not found: {self.config_path}")
            except OSError as e:
                raise ConfigError(f"cannot read configuration {self.config_path}: {e}")

            try:
                data = yaml.safe_load(text)
            except yaml.YAMLError as e:
                mark = getattr(e, "problem_mark", None)
                where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
                raise ConfigError(f"{self.config_path.name}: YAML syntax error{where}: "
                                  f"{getattr(e, 'problem', None) or e}")
            if not isinstance(data, dict):
                raise ConfigError(f"{self.config_path.name}: top level must be a mapping")

            errors = get_validation_errors(data, source_text=text)
            if errors:
                raise ConfigError(f"{self.config_path.name}: schema validation failed\n{format_errors(errors)}",
                                  context={"errors": [{k: e[k] for k in ('path', 'message', 'line')} for e in errors]})

            resolved = copy.deepcopy(data)
            for section, key in PATH_KEYS:
                value = resolved.get(section, {}).get(key)
                if value:
                    resolved[section][key] = str(self._resolve(value))

            try:
                config = ExperimentConfig(**resolved)
            except ValidationError as e:
                index = yaml_line_index(text)
                details = []
                for err in e.errors():
                    loc = tuple(p for p in err["loc"] if isinstance(p, (str, int)))
                    line = next((index[loc[:i]] for i in range(len(loc), -1, -1) if loc[:i] in index), None)
                    prefix = f"line {line}: " if line else ""
                    details.append(f"{prefix}{'.'.join(str(p) for p in loc) or '<root>'}: {err['msg']}")
                raise ConfigError(f"{self.config_path.name}: invalid configuration\n" + "\n".join(details))

            self._as_written = data
            self._config = config
    # End function

    # =========================================================================
    # Function 3.2: get
    # =========================================================================
    def get(self) -> ExperimentConfig:
        """Returns the current, validated experiment configuration."""
        with _config_lock:
            assert self._config is not None
            return self._config

    def as_written(self) -> Dict[str, Any]:
        """The parsed file before path resolution (used for hashing)."""
        return copy.deepcopy(self._as_written)

    def canonical_text(self) -> str:
        return json.dumps(self._as_written, sort_keys=True, separators=(",", ":"))

    def referenced_files(self) -> List[Path]:
        config = self.get()
        paths = [config.domain.path if config.domain.shape == "mask_image" else None,
                 config.phantom.path if config.phantom.kind == "image" else None]
        return sorted({Path(p) for p in paths if p})

    # =========================================================================
    # Function 3.3: output_root
    # Purpose: CLI override, then MREIT_OUTPUT_ROOT (.env honoured), then
    #          the file's output.root.
    # =========================================================================
    def output_root(self, override: Optional[str] = None) -> Path:
        if override:
            return Path(override)
        load_dotenv(override=False)
        env_root = os.environ.get(OUTPUT_ROOT_ENV)
        if env_root:
            return Path(env_root)
        return Path(self.get().output.root)

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else (self.config_path.parent / path).resolve()
# End class
#
#
## End of Script
