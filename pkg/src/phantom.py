# ============================================================================
#  File:    phantom.py
#  Purpose: Target conductivities: the lens toy model, a modified Shepp-Logan
#           head and an image-derived torso, plus their blurred variants
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Tuple, Union

import numpy as np
from loguru import logger

from src.error_handling import PhantomError
from src.fields import ScalarField, Unit, fill_outside, gaussian_blur
from src.geometry import DomainMask, Grid2D, ImagingGeometry, load_grayscale_raster, resample_nearest

LENS_RADIUS = math.pi / 8

# Modified Shepp-Logan table on the unit square:
# (intensity, semi-axis a, semi-axis b, x0, y0, rotation in degrees)
MODIFIED_SHEPP_LOGAN = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)
#
# ============================================================================
# SECTION 2: Phantom Description
# ============================================================================
# Class 2.1: PhantomSpec
# ============================================================================
#
@dataclass(frozen=True)
class PhantomSpec:
    kind: Literal["toy_lens", "shepp_logan", "image"]
    background: float
    variant: Literal["verbatim", "single_offset"] = "verbatim"
    path: Optional[Path] = None
    scale: float = 0.2
    center: Tuple[float, float] = (0.0, 0.0)
    sigma_range: Tuple[float, float] = (0.5, 2.0)
    blur: Optional[Tuple[float, int]] = None
#
# ============================================================================
# SECTION 3: Generators
# ============================================================================
# Function 3.1: toy_sigma
# Purpose: 1 + (cos r - sqrt(3)/2)/2 + 1 inside r <= pi/8, 1 elsewhere. The
#          `single_offset` variant drops the trailing +1.
# ============================================================================
#
def toy_sigma(grid: Grid2D, variant: str = "verbatim") -> ScalarField:
    if not grid.contains_box(-1.0, 1.0, -1.0, 1.0):
        raise PhantomError("toy phantom needs a grid covering [-1, 1]^2")
    if variant not in ("verbatim", "single_offset"):
        raise PhantomError(f"unknown toy variant {variant!r}")
    X, Y = grid.meshgrid()
    r = np.hypot(X, Y)
    bump = 0.5 * (np.cos(r) - math.sqrt(3.0) / 2.0)
    lens = 1.0 + bump + (1.0 if variant == "verbatim" else 0.0)
    return ScalarField(grid, np.where(r <= LENS_RADIUS, lens, 1.0), Unit.SIEMENS_PER_M)
#
# ============================================================================
# Function 3.2: shepp_logan_intensity
# Purpose: Additive ellipse rendering on physical coordinates, the unit
#          table stretched by `scale` metres around `center`.
# ============================================================================
#
def shepp_logan_intensity(grid: Grid2D, scale: float = 0.2,
                          center: Tuple[float, float] = (0.0, 0.0)) -> np.ndarray:
    X, Y = grid.meshgrid()
    u = (X - center[0]) / scale
    v = (Y - center[1]) / scale
    image = np.zeros(grid.shape)
    for intensity, a, b, x0, y0, phi in MODIFIED_SHEPP_LOGAN:
        t = math.radians(phi)
        du, dv = u - x0, v - y0
        along = du * math.cos(t) + dv * math.sin(t)
        across = -du * math.sin(t) + dv * math.cos(t)
        image[(along / a) ** 2 + (across / b) ** 2 <= 1.0] += intensity
    return image


def shepp_logan_sigma(grid: Grid2D, disc: DomainMask, scale: float = 0.2,
                      center: Tuple[float, float] = (0.0, 0.0),
                      sigma_range: Tuple[float, float] = (0.5, 2.0)) -> ScalarField:
    """Intensities clipped to [0, 1] and mapped affinely onto sigma_range."""
    if disc.grid != grid:
        raise PhantomError("disc mask and grid differ")
    low, high = sigma_range
    if not 0 < low < high:
        raise PhantomError(f"invalid conductivity range {sigma_range}")
    intensity = np.clip(shepp_logan_intensity(grid, scale, center), 0.0, 1.0)
    if np.any((intensity > 0) & ~disc.inside):
        raise PhantomError("Shepp-Logan phantom extends beyond the disc; reduce 'scale'")
    return ScalarField(grid, low + (high - low) * intensity, Unit.SIEMENS_PER_M)
#
# ============================================================================
# Function 3.3: image_sigma
# Purpose: sigma = gray/255 + 1 after nearest-neighbour subsampling.
# ============================================================================
#
def image_sigma(image: Union[np.ndarray, Path, str], grid: Grid2D) -> ScalarField:
    if isinstance(image, (str, Path)):
        raster = load_grayscale_raster(Path(image), error_cls=PhantomError)
    else:
        raster = np.asarray(image)
        if raster.dtype != np.uint8 or raster.ndim != 2:
            raise PhantomError(f"image must be an 8-bit grayscale raster, got {raster.dtype} {raster.shape}")
    gray = resample_nearest(raster, grid).astype(float)
    return ScalarField(grid, gray / 255.0 + 1.0, Unit.SIEMENS_PER_M)
#
# ============================================================================
# SECTION 4: Blur and Assembly
# ============================================================================
# Function 4.1: apply_blur
# ============================================================================
#
def apply_blur(spec: PhantomSpec, sigma: ScalarField) -> ScalarField:
    if spec.blur is None:
        return sigma
    nu, window = spec.blur
    return gaussian_blur(sigma, nu, window)
#
# ============================================================================
# Function 4.2: build_phantom
# Purpose: Generate sigma*, set the background outside the domain and, when
#          a blur is configured, return the blurred twin as well.
# ============================================================================
#
def build_phantom(spec: PhantomSpec, geometry: ImagingGeometry) -> Tuple[ScalarField, Optional[ScalarField]]:
    grid = geometry.grid
    if spec.kind == "toy_lens":
        sigma = toy_sigma(grid, spec.variant)
    elif spec.kind == "shepp_logan":
        sigma = shepp_logan_sigma(grid, geometry.mask, spec.scale, spec.center, spec.sigma_range)
    elif spec.kind == "image":
        if spec.path is None:
            raise PhantomError("image phantom needs a path")
        sigma = image_sigma(spec.path, grid)
    else:
        raise PhantomError(f"unknown phantom kind {spec.kind!r}")

    sigma = fill_outside(sigma, geometry.mask, spec.background)
    blurred = apply_blur(spec, sigma) if spec.blur is not None else None
    for field in (sigma, blurred):
        if field is not None and not np.min(field.values) > 0:
            raise PhantomError("phantom conductivity must be strictly positive")
    logger.info("phantom {}: sigma in [{:.4f}, {:.4f}] S/m{}", spec.kind,
                float(sigma.values.min()), float(sigma.values.max()),
                f", blurred with nu={spec.blur[0]}, window={spec.blur[1]}" if spec.blur else "")
    return sigma, blurred
#
#
## End of Script
