# ============================================================================
#  File:    fields.py
#  Purpose: Grid-aligned scalar and vector fields, masked difference
#           operators and Gaussian smoothing
# ============================================================================
# SECTION 1: Imports and Units
# ============================================================================
#
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np
from scipy import ndimage

from src.error_handling import FieldError
from src.geometry import DomainMask, Grid2D


class Unit(str, Enum):
    SIEMENS_PER_M = "S/m"
    VOLT = "V"
    TESLA = "T"
    TESLA_PER_M2 = "T/m^2"
    AMPERE_PER_M = "A/m^2"
    VOLT_PER_M = "V/m"
    PER_M = "1/m"
    PER_M2 = "1/m^2"
    AMPERE = "A"
    DIMENSIONLESS = "1"


def _frozen(values: np.ndarray) -> np.ndarray:
    out = np.array(values, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


def _full_support(grid: Grid2D, support: Optional[np.ndarray]) -> np.ndarray:
    out = np.ones(grid.shape, dtype=bool) if support is None else np.array(support, dtype=bool, copy=True)
    out.setflags(write=False)
    return out
#
# ============================================================================
# SECTION 2: Field Types
# ============================================================================
# Class 2.1: ScalarField
# Purpose: Real values per pixel, a unit tag and the support on which the
#          values are defined. Operators refuse to read outside the support.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid2D
    values: np.ndarray
    unit: Unit = Unit.DIMENSIONLESS
    support: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.shape(self.values) != self.grid.shape:
            raise FieldError(f"values of shape {np.shape(self.values)} do not fit grid {self.grid.shape}")
        object.__setattr__(self, "values", _frozen(self.values))
        object.__setattr__(self, "support", _full_support(self.grid, self.support))

    def require_on(self, mask: DomainMask) -> None:
        if mask.grid != self.grid:
            raise FieldError(f"field grid {self.grid} does not match mask grid {mask.grid}")
        if not self.support[mask.inside].all():
            raise FieldError("field is not defined on every pixel of the mask")
        if not np.isfinite(self.values[mask.inside]).all():
            raise FieldError("field has non-finite values inside the mask")

    def with_values(self, values: np.ndarray, unit: Optional[Unit] = None,
                    support: Optional[np.ndarray] = None) -> "ScalarField":
        return ScalarField(self.grid, values, unit or self.unit,
                           self.support if support is None else support)

    def map(self, func, unit: Optional[Unit] = None) -> "ScalarField":
        """Apply an elementwise numpy function on the support; zero elsewhere."""
        values = np.zeros(self.grid.shape)
        values[self.support] = func(self.values[self.support])
        return ScalarField(self.grid, values, unit or self.unit, self.support)

    def log(self) -> "ScalarField":
        if np.any(self.values[self.support] <= 0):
            raise FieldError("logarithm of a nonpositive field")
        return self.map(np.log, Unit.DIMENSIONLESS)

    def sup(self, mask: np.ndarray) -> float:
        return float(np.max(np.abs(self.values[mask]))) if mask.any() else 0.0
#
# ============================================================================
# Class 2.2: VectorField2D
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class VectorField2D:
    grid: Grid2D
    vx: np.ndarray
    vy: np.ndarray
    unit: Unit = Unit.DIMENSIONLESS
    support: Optional[np.ndarray] = None

    def __post_init__(self):
        for comp in (self.vx, self.vy):
            if np.shape(comp) != self.grid.shape:
                raise FieldError(f"component of shape {np.shape(comp)} does not fit grid {self.grid.shape}")
        object.__setattr__(self, "vx", _frozen(self.vx))
        object.__setattr__(self, "vy", _frozen(self.vy))
        object.__setattr__(self, "support", _full_support(self.grid, self.support))

    def perp(self) -> "VectorField2D":
        """(vy, -vx); applying it twice negates the field exactly."""
        return VectorField2D(self.grid, self.vy, -self.vx, self.unit, self.support)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.vx, self.vy)

    def scaled(self, factor, unit: Optional[Unit] = None) -> "VectorField2D":
        return VectorField2D(self.grid, self.vx * factor, self.vy * factor, unit or self.unit, self.support)

    def restricted(self, inside: np.ndarray) -> "VectorField2D":
        return VectorField2D(self.grid, np.where(inside, self.vx, 0.0), np.where(inside, self.vy, 0.0),
                             self.unit, inside)

    def require_on(self, mask: DomainMask) -> None:
        if mask.grid != self.grid:
            raise FieldError(f"field grid {self.grid} does not match mask grid {mask.grid}")
        if not self.support[mask.inside].all():
            raise FieldError("vector field is not defined on every pixel of the mask")
        if not (np.isfinite(self.vx[mask.inside]).all() and np.isfinite(self.vy[mask.inside]).all()):
            raise FieldError("vector field has non-finite values inside the mask")
#
# ============================================================================
# SECTION 3: One-dimensional Stencils
# ============================================================================
#
def _shift(a: np.ndarray, k: int, axis: int, fill) -> np.ndarray:
    """out[i] = a[i + k] along `axis`, `fill` where i + k leaves the array."""
    out = np.full_like(a, fill)
    n = a.shape[axis]
    if abs(k) >= n:
        return out
    src = [slice(None), slice(None)]
    dst = [slice(None), slice(None)]
    if k > 0:
        src[axis], dst[axis] = slice(k, None), slice(0, n - k)
    else:
        src[axis], dst[axis] = slice(0, n + k), slice(-k, None)
    out[tuple(dst)] = a[tuple(src)]
    return out


def _first_derivative(f: np.ndarray, inside: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.where(inside, f, 0.0)
    m = {k: _shift(inside, k, axis, False) for k in (-2, -1, 1, 2)}
    v = {k: _shift(f, k, axis, 0.0) for k in (-2, -1, 1, 2)}
    out = np.zeros_like(f)
    todo = inside.copy()

    rules = (
        (m[1] & m[-1], lambda: (v[1] - v[-1]) / (2 * h)),
        (m[1] & m[2], lambda: (-3 * f + 4 * v[1] - v[2]) / (2 * h)),
        (m[-1] & m[-2], lambda: (3 * f - 4 * v[-1] + v[-2]) / (2 * h)),
        (m[1], lambda: (v[1] - f) / h),
        (m[-1], lambda: (f - v[-1]) / h),
    )
    for available, stencil in rules:
        use = todo & available
        if use.any():
            out[use] = stencil()[use]
            todo &= ~use
    return out


def _second_derivative(f: np.ndarray, inside: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.where(inside, f, 0.0)
    m = {k: _shift(inside, k, axis, False) for k in (-3, -2, -1, 1, 2, 3)}
    v = {k: _shift(f, k, axis, 0.0) for k in (-3, -2, -1, 1, 2, 3)}
    out = np.zeros_like(f)
    todo = inside.copy()
    h2 = h * h

    rules = (
        (m[1] & m[-1], lambda: (v[1] - 2 * f + v[-1]) / h2),
        (m[1] & m[2] & m[3], lambda: (2 * f - 5 * v[1] + 4 * v[2] - v[3]) / h2),
        (m[-1] & m[-2] & m[-3], lambda: (2 * f - 5 * v[-1] + 4 * v[-2] - v[-3]) / h2),
        (m[1] & m[2], lambda: (f - 2 * v[1] + v[2]) / h2),
        (m[-1] & m[-2], lambda: (f - 2 * v[-1] + v[-2]) / h2),
    )
    for available, stencil in rules:
        use = todo & available
        if use.any():
            out[use] = stencil()[use]
            todo &= ~use
    return out
#
# ============================================================================
# SECTION 4: Differential Operators
# ============================================================================
# Function 4.1: gradient
# Purpose: Central differences where both axis neighbours are inside,
#          one-sided second order where one is missing.
# ============================================================================
#
def gradient(f: ScalarField, mask: DomainMask, unit: Optional[Unit] = None) -> VectorField2D:
    f.require_on(mask)
    grid = f.grid
    gx = _first_derivative(f.values, mask.inside, grid.hx, axis=1)
    gy = _first_derivative(f.values, mask.inside, grid.hy, axis=0)
    return VectorField2D(grid, gx, gy, unit or Unit.DIMENSIONLESS, mask.inside)
#
# ============================================================================
# Function 4.2: divergence
# ============================================================================
#
def divergence(v: VectorField2D, mask: DomainMask, unit: Optional[Unit] = None) -> ScalarField:
    v.require_on(mask)
    grid = v.grid
    div = (_first_derivative(v.vx, mask.inside, grid.hx, axis=1)
           + _first_derivative(v.vy, mask.inside, grid.hy, axis=0))
    return ScalarField(grid, div, unit or Unit.DIMENSIONLESS, mask.inside)
#
# ============================================================================
# Function 4.3: laplacian
# Purpose: 5-point stencil (anisotropic when hx != hy) on the interior,
#          one-sided second differences on the rim.
# ============================================================================
#
def laplacian(f: ScalarField, mask: DomainMask, unit: Optional[Unit] = None) -> ScalarField:
    f.require_on(mask)
    grid = f.grid
    lap = (_second_derivative(f.values, mask.inside, grid.hx, axis=1)
           + _second_derivative(f.values, mask.inside, grid.hy, axis=0))
    return ScalarField(grid, lap, unit or Unit.DIMENSIONLESS, mask.inside)
#
# ============================================================================
# SECTION 5: Face Fields
# ============================================================================
# Class 5.1: FaceField
# Purpose: Vectors on the two face families of the pixel lattice. x-faces
#          join (iy, ix) to (iy, ix + 1) and have shape (ny, nx - 1);
#          y-faces join (iy, ix) to (iy + 1, ix) and have shape (ny - 1, nx).
#          A face is open when both of its pixels are inside the mask.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class FaceField:
    grid: Grid2D
    xface_vx: np.ndarray
    xface_vy: np.ndarray
    yface_vx: np.ndarray
    yface_vy: np.ndarray
    x_open: np.ndarray
    y_open: np.ndarray
    unit: Unit = Unit.DIMENSIONLESS

    def __post_init__(self):
        ny, nx = self.grid.shape
        for name, shape in (("xface_vx", (ny, nx - 1)), ("xface_vy", (ny, nx - 1)), ("x_open", (ny, nx - 1)),
                            ("yface_vx", (ny - 1, nx)), ("yface_vy", (ny - 1, nx)), ("y_open", (ny - 1, nx))):
            if np.shape(getattr(self, name)) != shape:
                raise FieldError(f"{name} of shape {np.shape(getattr(self, name))} does not fit grid {self.grid.shape}")
        for name in ("xface_vx", "xface_vy", "yface_vx", "yface_vy"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        for name in ("x_open", "y_open"):
            flags = np.array(getattr(self, name), dtype=bool, copy=True)
            flags.setflags(write=False)
            object.__setattr__(self, name, flags)

    def at_pixels(self) -> VectorField2D:
        """Normal components averaged onto pixels over the open faces on either side."""
        return VectorField2D(self.grid, _faces_to_pixels(self.xface_vx, self.x_open, axis=1),
                             _faces_to_pixels(self.yface_vy, self.y_open, axis=0), self.unit)


def open_faces(inside: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    return inside[:, :-1] & inside[:, 1:], inside[:-1, :] & inside[1:, :]


def face_average(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Mean of the two pixels of every x-face and every y-face."""
    a = np.asarray(values, dtype=float)
    return 0.5 * (a[:, :-1] + a[:, 1:]), 0.5 * (a[:-1, :] + a[1:, :])


def harmonic_mean(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    total = a + b
    return np.divide(2.0 * a * b, total, out=np.zeros_like(total), where=total > 0)


def _faces_to_pixels(values: np.ndarray, is_open: np.ndarray, axis: int) -> np.ndarray:
    """Average of the open faces before and after each pixel along `axis`; 0 where none is open."""
    v = np.where(is_open, values, 0.0)
    w = is_open.astype(float)
    pad = [(0, 0), (0, 0)]
    pad[axis] = (1, 0)
    before_v, before_w = np.pad(v, pad), np.pad(w, pad)
    pad[axis] = (0, 1)
    after_v, after_w = np.pad(v, pad), np.pad(w, pad)
    count = before_w + after_w
    return np.divide(before_v + after_v, count, out=np.zeros(count.shape), where=count > 0)
#
# ============================================================================
# Function 5.2: face_gradient
# Purpose: Exact two-point difference across each open face for the normal
#          component; the tangential component is the mean of the masked
#          pixel derivatives on either side.
# ============================================================================
#
def face_gradient(f: ScalarField, mask: DomainMask, unit: Optional[Unit] = None) -> FaceField:
    f.require_on(mask)
    grid, inside = f.grid, mask.inside
    values = np.where(inside, f.values, 0.0)
    x_open, y_open = open_faces(inside)
    dx_pixels = _first_derivative(values, inside, grid.hx, axis=1)
    dy_pixels = _first_derivative(values, inside, grid.hy, axis=0)
    x_tangent, _ = face_average(dy_pixels)
    _, y_tangent = face_average(dx_pixels)
    x_normal = (values[:, 1:] - values[:, :-1]) / grid.hx
    y_normal = (values[1:, :] - values[:-1, :]) / grid.hy
    return FaceField(grid,
                     np.where(x_open, x_normal, 0.0), np.where(x_open, x_tangent, 0.0),
                     np.where(y_open, y_tangent, 0.0), np.where(y_open, y_normal, 0.0),
                     x_open, y_open, unit or Unit.DIMENSIONLESS)
#
# ============================================================================
# Function 5.3: face_vectors
# ============================================================================
#
def face_vectors(v: VectorField2D, mask: DomainMask) -> FaceField:
    """Pixel vectors averaged onto the open faces."""
    v.require_on(mask)
    x_open, y_open = open_faces(mask.inside)
    vx = np.where(mask.inside, v.vx, 0.0)
    vy = np.where(mask.inside, v.vy, 0.0)
    xx, yx = face_average(vx)
    xy, yy = face_average(vy)
    return FaceField(v.grid, np.where(x_open, xx, 0.0), np.where(x_open, xy, 0.0),
                     np.where(y_open, yx, 0.0), np.where(y_open, yy, 0.0), x_open, y_open, v.unit)
#
# ============================================================================
# Function 5.4: face_divergence
# Purpose: Net outward normal component over the four faces of a pixel,
#          defined where all four faces are open. On such pixels
#          face_divergence(face_gradient(f)) is the 5-point Laplacian of f.
# ============================================================================
#
def face_divergence(s: FaceField, unit: Optional[Unit] = None) -> ScalarField:
    grid = s.grid
    fx = np.where(s.x_open, s.xface_vx, 0.0)
    fy = np.where(s.y_open, s.yface_vy, 0.0)
    out = np.zeros(grid.shape)
    out[:, 1:-1] += (fx[:, 1:] - fx[:, :-1]) / grid.hx
    out[1:-1, :] += (fy[1:, :] - fy[:-1, :]) / grid.hy
    enclosed = np.zeros(grid.shape, dtype=bool)
    enclosed[:, 1:-1] = s.x_open[:, 1:] & s.x_open[:, :-1]
    enclosed[1:-1, :] &= s.y_open[1:, :] & s.y_open[:-1, :]
    enclosed[0, :] = enclosed[-1, :] = False
    return ScalarField(grid, np.where(enclosed, out, 0.0), unit or Unit.DIMENSIONLESS, enclosed)
#
# ============================================================================
# SECTION 6: Smoothing and Masking
# ============================================================================
# Function 6.1: gaussian_kernel
# ============================================================================
#
def gaussian_kernel(nu: float, window: int) -> np.ndarray:
    if nu <= 0:
        raise FieldError(f"blur width must be positive, got {nu}")
    if window < 3 or window % 2 == 0:
        raise FieldError(f"blur window must be odd and at least 3, got {window}")
    half = window // 2
    offsets = np.arange(-half, half + 1)
    kernel = np.exp(-(offsets[:, None] ** 2 + offsets[None, :] ** 2) / (2.0 * nu * nu))
    return kernel / kernel.sum()
#
# ============================================================================
# Function 6.2: gaussian_blur
# Purpose: Periodic extension of the whole grid, then normalized discrete
#          convolution. `nu` is in pixels. Reads every pixel, so the field
#          must be defined on the whole grid (see fill_outside).
# ============================================================================
#
def gaussian_blur(f: ScalarField, nu: float, window: int) -> ScalarField:
    kernel = gaussian_kernel(nu, window)
    if not f.support.all():
        raise FieldError("blur reads the whole grid; fill the field outside its support first")
    blurred = ndimage.convolve(np.asarray(f.values), kernel, mode="wrap")
    return ScalarField(f.grid, blurred, f.unit, np.ones(f.grid.shape, dtype=bool))


def fill_outside(f: ScalarField, mask: DomainMask, value: float) -> ScalarField:
    """Replace values outside the mask by a constant; the result is defined everywhere."""
    return ScalarField(f.grid, np.where(mask.inside, f.values, value), f.unit, None)
#
#
## End of Script
