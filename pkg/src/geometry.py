# ============================================================================
#  File:    geometry.py
#  Purpose: Pixel grid, domain masks, boundary segmentation into electrodes
#           and insulated arcs, and the eroded reconstruction region
# ============================================================================
# SECTION 1: Imports and Globals
# ============================================================================
#
import hashlib
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Literal, Optional, Sequence, Tuple, Type

import numpy as np
from loguru import logger
from PIL import Image, UnidentifiedImageError
from scipy import ndimage

from src.config import MIN_GRID_PIXELS
from src.error_handling import GeometryError, MreitError

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)

PIECE_ORDER = ("e_plus", "gamma_plus", "e_minus", "gamma_minus")
#
# ============================================================================
# SECTION 2: Grid
# ============================================================================
# Class 2.1: Grid2D
# Purpose: Uniform pixel grid. Arrays on the grid have shape (ny, nx) and are
#          indexed [iy, ix]; x = origin_x + ix*hx, y = origin_y + iy*hy.
# ============================================================================
#
@dataclass(frozen=True)
class Grid2D:
    nx: int
    ny: int
    fov_x: float
    fov_y: float
    origin: Tuple[float, float]

    @property
    def hx(self) -> float:
        return self.fov_x / (self.nx - 1)

    @property
    def hy(self) -> float:
        return self.fov_y / (self.ny - 1)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def x_coords(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.nx) * self.hx

    def y_coords(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.ny) * self.hy

    def meshgrid(self) -> Tuple[np.ndarray, np.ndarray]:
        """Physical coordinates (X, Y), each of shape (ny, nx)."""
        return np.meshgrid(self.x_coords(), self.y_coords())

    def to_physical(self, ix, iy):
        return self.origin[0] + np.asarray(ix) * self.hx, self.origin[1] + np.asarray(iy) * self.hy

    def to_pixel(self, x, y):
        ix = np.rint((np.asarray(x) - self.origin[0]) / self.hx).astype(int)
        iy = np.rint((np.asarray(y) - self.origin[1]) / self.hy).astype(int)
        return ix, iy

    def contains_box(self, xmin: float, xmax: float, ymin: float, ymax: float) -> bool:
        tol = 1e-9 * max(self.fov_x, self.fov_y)
        x0, y0 = self.origin
        return (xmin >= x0 - tol and xmax <= x0 + self.fov_x + tol
                and ymin >= y0 - tol and ymax <= y0 + self.fov_y + tol)

    def describe(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "fov_x": self.fov_x, "fov_y": self.fov_y,
                "origin": list(self.origin), "hx": self.hx, "hy": self.hy}
#
# ============================================================================
# Function 2.2: build_grid
# Purpose: Validated constructor for Grid2D.
# ============================================================================
#
def build_grid(nx: int, ny: int, fov_x: float, fov_y: float,
               origin: Sequence[float] = (0.0, 0.0)) -> Grid2D:
    if nx < MIN_GRID_PIXELS or ny < MIN_GRID_PIXELS:
        raise GeometryError(f"grid needs at least {MIN_GRID_PIXELS} pixels per axis, got {nx}x{ny}")
    if not (fov_x > 0 and fov_y > 0):
        raise GeometryError(f"field of view must be positive, got {fov_x}x{fov_y}")
    if len(origin) != 2 or not all(math.isfinite(v) for v in origin):
        raise GeometryError(f"origin must be a finite point, got {origin!r}")
    return Grid2D(int(nx), int(ny), float(fov_x), float(fov_y), (float(origin[0]), float(origin[1])))
#
# ============================================================================
# SECTION 3: Domain Mask
# ============================================================================
# Class 3.1: DomainMask
# Purpose: Inside pixels plus the counterclockwise boundary loop.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class DomainMask:
    """
    Pixel mask of a domain.

    ``boundary_pixels`` is an (K, 2) array of (iy, ix) pairs: the inside pixels
    with at least one outside pixel among their 8 neighbours, ordered
    counterclockwise about the mask centroid.
    """

    grid: Grid2D
    inside: np.ndarray
    boundary_pixels: np.ndarray

    @cached_property
    def rim(self) -> np.ndarray:
        rim = np.zeros(self.grid.shape, dtype=bool)
        rim[self.boundary_pixels[:, 0], self.boundary_pixels[:, 1]] = True
        return rim

    @cached_property
    def interior(self) -> np.ndarray:
        """Inside pixels whose full 8-neighbourhood is inside."""
        return self.inside & ~self.rim

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha1(repr(self.grid).encode())
        digest.update(np.packbits(self.inside).tobytes())
        return digest.hexdigest()

    @property
    def n_inside(self) -> int:
        return int(self.inside.sum())

    def loop_xy(self) -> Tuple[np.ndarray, np.ndarray]:
        return self.grid.to_physical(self.boundary_pixels[:, 1], self.boundary_pixels[:, 0])

    def centroid(self) -> Tuple[float, float]:
        iy, ix = np.nonzero(self.inside)
        x, y = self.grid.to_physical(ix.mean(), iy.mean())
        return float(x), float(y)

    def require_grid(self, grid: Grid2D, what: str = "field") -> None:
        if grid != self.grid:
            raise GeometryError(f"{what} grid {grid} does not match mask grid {self.grid}")
#
# ============================================================================
# Function 3.2: mask construction helpers
# ============================================================================
#
def _prune_to_full_quads(inside: np.ndarray) -> np.ndarray:
    """Drop pixels that are not a corner of any fully inside 2x2 block."""
    full = inside[:-1, :-1] & inside[:-1, 1:] & inside[1:, :-1] & inside[1:, 1:]
    covered = np.zeros_like(inside)
    covered[:-1, :-1] |= full
    covered[:-1, 1:] |= full
    covered[1:, :-1] |= full
    covered[1:, 1:] |= full
    return inside & covered


def _rim(inside: np.ndarray) -> np.ndarray:
    padded = np.pad(inside, 1, constant_values=False)
    core = ndimage.binary_erosion(padded, structure=EIGHT_CONNECTED, border_value=0)[1:-1, 1:-1]
    return inside & ~core


def _require_connected(inside: np.ndarray, what: str) -> None:
    if not inside.any():
        raise GeometryError(f"{what} is empty")
    _, count = ndimage.label(inside, structure=FOUR_CONNECTED)
    if count != 1:
        raise GeometryError(f"{what} is disconnected ({count} components)")


def _order_loop(grid: Grid2D, inside: np.ndarray, rim: np.ndarray) -> np.ndarray:
    iy_in, ix_in = np.nonzero(inside)
    cy, cx = iy_in.mean(), ix_in.mean()
    iy, ix = np.nonzero(rim)
    dx = (ix - cx) * grid.hx
    dy = (iy - cy) * grid.hy
    order = np.lexsort((np.hypot(dx, dy), np.arctan2(dy, dx)))
    loop = np.stack([iy[order], ix[order]], axis=1)
    step = np.abs(loop - np.roll(loop, -1, axis=0)).max(axis=1)
    if loop.shape[0] > 1 and step.max() > 2:
        raise GeometryError("boundary is not star-shaped about the domain centroid")
    return loop


def mask_from_pixels(grid: Grid2D, inside: np.ndarray, what: str = "domain interior") -> DomainMask:
    """Prune, validate and wrap a boolean pixel set as a DomainMask."""
    if inside.shape != grid.shape:
        raise GeometryError(f"mask shape {inside.shape} does not match grid shape {grid.shape}")
    pruned = _prune_to_full_quads(np.asarray(inside, dtype=bool))
    _require_connected(pruned, what)
    rim = _rim(pruned)
    loop = _order_loop(grid, pruned, rim)
    pruned.setflags(write=False)
    loop.setflags(write=False)
    return DomainMask(grid, pruned, loop)
#
# ============================================================================
# Function 3.3: raster helpers
# Purpose: 8-bit grayscale loading and nearest-neighbour resampling. Image
#          row 0 is the top of the picture, grid row 0 the bottom.
# ============================================================================
#
def load_grayscale_raster(path: Path, error_cls: Type[MreitError] = GeometryError) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise error_cls(f"image not found: {path}")
    try:
        with Image.open(path) as image:
            if image.mode != "L":
                raise error_cls(f"image {path.name} is not 8-bit grayscale (mode {image.mode})")
            return np.array(image, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise error_cls(f"cannot read image {path}: {exc}") from exc


def resample_nearest(raster: np.ndarray, grid: Grid2D) -> np.ndarray:
    height, width = raster.shape
    rows = (np.arange(grid.ny) * height) // grid.ny
    cols = (np.arange(grid.nx) * width) // grid.nx
    return raster[::-1][np.ix_(rows, cols)]
#
# ============================================================================
# Function 3.4: build_domain
# Purpose: Square, disc or image-derived domain masks.
# ============================================================================
#
@dataclass(frozen=True)
class DomainShape:
    shape: Literal["square", "disc", "mask_image"] = "square"
    center: Tuple[float, float] = (0.0, 0.0)
    diameter: Optional[float] = None
    path: Optional[Path] = None
    threshold: int = 128


def build_domain(grid: Grid2D, shape: DomainShape) -> DomainMask:
    if shape.shape == "square":
        inside = np.ones(grid.shape, dtype=bool)
    elif shape.shape == "disc":
        if shape.diameter is None or shape.diameter <= 0:
            raise GeometryError("disc domain needs a positive diameter")
        cx, cy = shape.center
        r = 0.5 * shape.diameter
        if not grid.contains_box(cx - r, cx + r, cy - r, cy + r):
            raise GeometryError(f"disc of diameter {shape.diameter} at {shape.center} exceeds the field of view")
        X, Y = grid.meshgrid()
        inside = (X - cx) ** 2 + (Y - cy) ** 2 <= r * r
    elif shape.shape == "mask_image":
        if shape.path is None:
            raise GeometryError("mask_image domain needs a path")
        raster = resample_nearest(load_grayscale_raster(shape.path), grid)
        inside = raster >= shape.threshold
    else:
        raise GeometryError(f"unknown domain shape {shape.shape!r}")
    mask = mask_from_pixels(grid, inside)
    logger.debug("domain {}: {} inside pixels, {} boundary pixels",
                 shape.shape, mask.n_inside, len(mask.boundary_pixels))
    return mask
#
# ============================================================================
# SECTION 4: Electrodes
# ============================================================================
# Class 4.1: ElectrodeSegment
# Purpose: Electrode given as a physical box on the boundary or as an arc
#          (direction about the centroid plus arc length).
# ============================================================================
#
@dataclass(frozen=True)
class ElectrodeSegment:
    kind: Literal["box", "arc"] = "box"
    box: Optional[Tuple[float, float, float, float]] = None
    angle_deg: float = 0.0
    length: float = 0.0
#
# ============================================================================
# Class 4.2: BoundarySpec
# Purpose: Partition of the boundary loop into E+, G+, E-, G- (ccw order).
#          Each piece is an array of loop indices in ccw order.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class BoundarySpec:
    mask: DomainMask
    e_plus: np.ndarray
    gamma_plus: np.ndarray
    e_minus: np.ndarray
    gamma_minus: np.ndarray
    ordering: Tuple[str, ...] = field(default=PIECE_ORDER)

    def pixels(self, piece: str) -> np.ndarray:
        return self.mask.boundary_pixels[getattr(self, piece)]

    def piece_mask(self, piece: str) -> np.ndarray:
        out = np.zeros(self.mask.grid.shape, dtype=bool)
        px = self.pixels(piece)
        out[px[:, 0], px[:, 1]] = True
        return out

    @cached_property
    def fingerprint(self) -> str:
        digest = hashlib.sha1(self.mask.fingerprint.encode())
        for piece in PIECE_ORDER:
            digest.update(np.asarray(getattr(self, piece), dtype=np.int64).tobytes())
        return digest.hexdigest()

    def sizes(self) -> dict:
        return {piece: int(len(getattr(self, piece))) for piece in PIECE_ORDER}
#
# ============================================================================
# Function 4.3: segment selection
# ============================================================================
#
def _select_box(mask: DomainMask, segment: ElectrodeSegment) -> np.ndarray:
    if segment.box is None:
        raise GeometryError("box electrode needs (xmin, xmax, ymin, ymax)")
    xmin, xmax, ymin, ymax = segment.box
    tol = 1e-9 * max(mask.grid.fov_x, mask.grid.fov_y)
    x, y = mask.loop_xy()
    return (x >= xmin - tol) & (x <= xmax + tol) & (y >= ymin - tol) & (y <= ymax + tol)


def _select_arc(mask: DomainMask, segment: ElectrodeSegment) -> np.ndarray:
    if segment.length <= 0:
        raise GeometryError("arc electrode needs a positive length")
    x, y = mask.loop_xy()
    cx, cy = mask.centroid()
    angles = np.arctan2(y - cy, x - cx)
    target = math.radians(segment.angle_deg)
    k0 = int(np.argmin(np.abs(np.angle(np.exp(1j * (angles - target))))))
    count = len(x)
    seg = np.hypot(np.roll(x, -1) - x, np.roll(y, -1) - y)
    tol = 1e-9 * segment.length
    member = np.zeros(count, dtype=bool)
    member[k0] = True
    lo = hi = k0
    forward = backward = 0.0
    while member.sum() < count - 2:
        fwd_cost = seg[hi % count]
        bwd_cost = seg[(lo - 1) % count]
        span = forward + backward
        options = [("f", fwd_cost), ("b", bwd_cost)]
        if backward < forward:
            options.reverse()
        for side, cost in options:
            if span + cost <= segment.length + tol:
                if side == "f":
                    hi += 1
                    forward += cost
                    member[hi % count] = True
                else:
                    lo -= 1
                    backward += cost
                    member[lo % count] = True
                break
        else:
            break
    return member


def _contiguous_run(member: np.ndarray, name: str) -> np.ndarray:
    """Loop indices of a single cyclic run, in ccw order."""
    count = len(member)
    if not member.any():
        raise GeometryError(f"electrode {name} does not intersect the boundary")
    if member.all():
        raise GeometryError(f"electrode {name} covers the whole boundary")
    starts = np.nonzero(member & ~np.roll(member, 1))[0]
    if len(starts) != 1:
        raise GeometryError(f"electrode {name} is not contiguous along the boundary")
    length = int(member.sum())
    return (starts[0] + np.arange(length)) % count


def _between(end: int, start: int, count: int) -> np.ndarray:
    """Loop indices strictly after `end` and strictly before `start`."""
    gap = (start - end - 1) % count
    return (end + 1 + np.arange(gap)) % count
#
# ============================================================================
# Function 4.4: place_electrodes
# ============================================================================
#
def place_electrodes(mask: DomainMask, plus: ElectrodeSegment, minus: ElectrodeSegment) -> BoundarySpec:
    selectors = {"box": _select_box, "arc": _select_arc}
    runs = {}
    for name, segment in (("E+", plus), ("E-", minus)):
        if segment.kind not in selectors:
            raise GeometryError(f"unknown electrode kind {segment.kind!r}")
        runs[name] = _contiguous_run(selectors[segment.kind](mask, segment), name)
    e_plus, e_minus = runs["E+"], runs["E-"]
    if np.intersect1d(e_plus, e_minus).size:
        raise GeometryError("electrodes E+ and E- overlap")

    count = len(mask.boundary_pixels)
    gamma_plus = _between(int(e_plus[-1]), int(e_minus[0]), count)
    gamma_minus = _between(int(e_minus[-1]), int(e_plus[0]), count)
    if gamma_plus.size == 0 or gamma_minus.size == 0:
        raise GeometryError("boundary partition is not alternating: electrodes touch")
    if e_plus.size + e_minus.size + gamma_plus.size + gamma_minus.size != count:
        raise GeometryError("boundary partition is not alternating")

    for piece in (e_plus, gamma_plus, e_minus, gamma_minus):
        piece.setflags(write=False)
    spec = BoundarySpec(mask, e_plus, gamma_plus, e_minus, gamma_minus)
    logger.debug("boundary partition {}", spec.sizes())
    return spec
#
# ============================================================================
# SECTION 5: Reconstruction Region
# ============================================================================
# Function 5.1: shrink_interior
# Purpose: Erode the mask by `margin` pixels (Euclidean distance to the
#          outside, grid edge counted as outside).
# ============================================================================
#
def shrink_interior(mask: DomainMask, margin: int) -> DomainMask:
    if margin < 1:
        raise GeometryError(f"margin must be at least 1 pixel, got {margin}")
    padded = np.pad(mask.inside, 1, constant_values=False)
    distance = ndimage.distance_transform_edt(padded)[1:-1, 1:-1]
    return mask_from_pixels(mask.grid, distance > margin, what=f"interior eroded by {margin} pixels")
#
# ============================================================================
# Class 5.2: ImagingGeometry
# Purpose: Grid, domain, electrodes and reconstruction region of one run.
# ============================================================================
#
@dataclass(frozen=True, eq=False)
class ImagingGeometry:
    grid: Grid2D
    mask: DomainMask
    bc: BoundarySpec
    region: DomainMask

    def describe(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "inside_pixels": self.mask.n_inside,
            "boundary_pixels": int(len(self.mask.boundary_pixels)),
            "region_pixels": self.region.n_inside,
            "partition": self.bc.sizes(),
        }


def build_geometry(grid: Grid2D, shape: DomainShape, plus: ElectrodeSegment,
                   minus: ElectrodeSegment, margin: int) -> ImagingGeometry:
    mask = build_domain(grid, shape)
    bc = place_electrodes(mask, plus, minus)
    region = shrink_interior(mask, margin)
    return ImagingGeometry(grid, mask, bc, region)
#
#
## End of Script
