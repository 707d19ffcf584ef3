# ============================================================================
#  File:    artifacts.py
#  Purpose: Run outputs: binary and CSV fields, PNG heatmaps, per-iteration
#           series, the JSON manifest and content hashes
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
from loguru import logger
from matplotlib import colors

from src.error_handling import ArtifactError
from src.fields import ScalarField, Unit
from src.geometry import build_grid

FIELD_MAGIC = b"MREITFIELD 1\n"
HEATMAP_UPSCALE = 3
HEATMAP_CMAP = "viridis"
SERIES_COLUMNS = ("n", "step_norm", "re", "re_hat", "min_J", "clamped_flag")
#
# ============================================================================
# SECTION 2: Data Structures
# ============================================================================
# Class 2.1: ArtifactRecord
# ============================================================================
#
@dataclass
class ArtifactRecord:
    """One written file with its size and digest."""
    path: Path
    kind: str
    bytes_written: int
    sha256: str

    def as_dict(self, root: Optional[Path] = None) -> dict:
        shown = self.path.relative_to(root) if root is not None else self.path
        return {"path": shown.as_posix(), "kind": self.kind,
                "bytes": self.bytes_written, "sha256": self.sha256}
#
# ============================================================================
# SECTION 3: Low-level Writing
# ============================================================================
# Function 3.1: _atomic_write
# Purpose: Write to a temporary sibling and move it into place.
# ============================================================================
#
def _atomic_write(path: Union[str, Path], payload: bytes, kind: str) -> ArtifactRecord:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path.parent, prefix=f".{path.name}.", delete=False) as tmp:
            tmp.write(payload)
            temp_path = Path(tmp.name)
        os.replace(temp_path, path)
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}", context={"path": str(path)})
    logger.debug("wrote {} ({} bytes)", path, len(payload))
    return ArtifactRecord(path, kind, len(payload), hashlib.sha256(payload).hexdigest())
#
# ============================================================================
# SECTION 4: Fields
# ============================================================================
# Function 4.1: write_field / read_field
# Purpose: Two text header lines, then nx*ny little-endian float64 values in
#          row-major (iy, ix) order.
# ============================================================================
#
def write_field(path: Union[str, Path], field: ScalarField) -> ArtifactRecord:
    grid = field.grid
    header = (f"nx={grid.nx} ny={grid.ny} fov_x={grid.fov_x!r} fov_y={grid.fov_y!r} "
              f"origin_x={grid.origin[0]!r} origin_y={grid.origin[1]!r} unit={field.unit.value}\n")
    body = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    return _atomic_write(path, FIELD_MAGIC + header.encode("ascii") + body, "field")


def read_field(path: Union[str, Path]) -> ScalarField:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}")
    if not raw.startswith(FIELD_MAGIC):
        raise ArtifactError(f"{path} is not a field file")
    end = raw.find(b"\n", len(FIELD_MAGIC))
    if end < 0:
        raise ArtifactError(f"{path}: truncated header")
    try:
        meta = dict(item.split("=", 1) for item in raw[len(FIELD_MAGIC):end].decode("ascii").split())
        grid = build_grid(int(meta["nx"]), int(meta["ny"]), float(meta["fov_x"]), float(meta["fov_y"]),
                          (float(meta["origin_x"]), float(meta["origin_y"])))
        unit = Unit(meta["unit"])
    except (KeyError, ValueError) as e:
        raise ArtifactError(f"{path}: malformed header ({e})")
    values = np.frombuffer(raw[end + 1:], dtype="<f8")
    if values.size != grid.nx * grid.ny:
        raise ArtifactError(f"{path}: expected {grid.nx * grid.ny} values, found {values.size}")
    return ScalarField(grid, values.reshape(grid.shape).astype(np.float64), unit)


def write_field_csv(path: Union[str, Path], field: ScalarField) -> ArtifactRecord:
    buffer = io.StringIO()
    np.savetxt(buffer, field.values, fmt="%.17g", delimiter=",")
    return _atomic_write(path, buffer.getvalue().encode("ascii"), "field_csv")
#
# ============================================================================
# SECTION 5: Heatmaps
# ============================================================================
# Function 5.1: heatmap_rgb
# Purpose: Colormap lookup with a fixed value range; pixels outside `inside`
#          are black.
# ============================================================================
#
def heatmap_rgb(values: np.ndarray, vmin: float, vmax: float, inside: Optional[np.ndarray] = None,
                cmap: str = HEATMAP_CMAP) -> np.ndarray:
    if not vmax > vmin:
        vmax = vmin + 1.0
    norm = colors.Normalize(vmin=vmin, vmax=vmax, clip=True)
    rgb = plt.get_cmap(cmap)(norm(np.nan_to_num(np.asarray(values, dtype=float))), bytes=True)[..., :3]
    if inside is not None:
        rgb[~np.asarray(inside, dtype=bool)] = 0
    return rgb
#
# ============================================================================
# Function 5.2: write_heatmap
# Purpose: Fixed colour range so heatmaps of one run compare directly. The
#          first grid row is drawn at the bottom of the image.
# ============================================================================
#
def write_heatmap(path: Union[str, Path], values: np.ndarray, vmin: float, vmax: float,
                  inside: Optional[np.ndarray] = None, upscale: int = HEATMAP_UPSCALE,
                  cmap: str = HEATMAP_CMAP) -> ArtifactRecord:
    rgb = heatmap_rgb(values, vmin, vmax, inside, cmap)
    if upscale > 1:
        rgb = np.repeat(np.repeat(rgb, upscale, axis=0), upscale, axis=1)
    buffer = io.BytesIO()
    plt.imsave(buffer, np.ascontiguousarray(rgb), format="png", origin="lower")
    return _atomic_write(path, buffer.getvalue(), "heatmap")
#
# ============================================================================
# SECTION 6: Series and Manifest
# ============================================================================
# Function 6.1: write_series_csv
# ============================================================================
#
def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_series_csv(path: Union[str, Path], rows: Iterable[Mapping[str, Any]],
                     columns: Sequence[str] = SERIES_COLUMNS) -> ArtifactRecord:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return _atomic_write(path, buffer.getvalue().encode("utf-8"), "series")


def read_series_csv(path: Union[str, Path]) -> List[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as f:
            return list(csv.DictReader(f))
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}")
#
# ============================================================================
# Function 6.2: write_manifest
# Purpose: Sorted keys and no wall-clock fields, so identical runs produce
#          identical manifests. Non-finite floats become strings.
# ============================================================================
#
def to_jsonable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, Path):
        return value.as_posix()
    if hasattr(value, "as_dict"):
        return to_jsonable(value.as_dict())
    return value


def write_manifest(path: Union[str, Path], data: Mapping[str, Any]) -> ArtifactRecord:
    text = json.dumps(to_jsonable(data), sort_keys=True, indent=2, ensure_ascii=False)
    return _atomic_write(path, (text + "\n").encode("utf-8"), "manifest")


def read_manifest(path: Union[str, Path]) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ArtifactError(f"cannot read manifest {path}: {e}")
#
# ============================================================================
# Function 6.3: content_hash
# Purpose: sha256 over the canonical configuration text followed by the
#          bytes of every referenced input file, in the given order.
# ============================================================================
#
def content_hash(canonical_text: str, files: Sequence[Path] = ()) -> str:
    digest = hashlib.sha256(canonical_text.encode("utf-8"))
    for path in files:
        try:
            digest.update(Path(path).read_bytes())
        except OSError as e:
            raise ArtifactError(f"cannot hash input {path}: {e}")
    return digest.hexdigest()
#
#
## End of Script
