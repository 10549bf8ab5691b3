"""
Planar RIS and transceiver geometry.

Builds element grids for planar arrays, converts between Cartesian points and
the (angle, distance) polar coordinates used by codebooks, and classifies a
link as near field or far field against the Rayleigh distance 2D²/λ.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np

from src.exceptions import DomainError, GeometryError

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0  # m/s
COPLANARITY_TOL = 1e-12  # m


def wavelength_from_frequency(frequency_hz: float) -> float:
    """Free-space wavelength in meters for a carrier frequency in Hz."""
    if not frequency_hz > 0:
        raise DomainError(f"frequency must be positive, got {frequency_hz}")
    return SPEED_OF_LIGHT / frequency_hz


def check_wavelength(wavelength: float) -> float:
    """Return ``wavelength`` as float, raising DomainError unless it is finite and positive."""
    wavelength = float(wavelength)
    if not (math.isfinite(wavelength) and wavelength > 0):
        raise DomainError(f"wavelength must be positive, got {wavelength}")
    return wavelength


@dataclass(frozen=True)
class Vec3:
    """Cartesian coordinate in meters."""

    x: float
    y: float
    z: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "z"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise DomainError(f"Vec3.{name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def from_array(cls, values) -> "Vec3":
        x, y, z = (float(v) for v in np.asarray(values, dtype=float).reshape(3))
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    def distance_to(self, other: "Vec3") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


@dataclass(frozen=True)
class Wavelength:
    """Carrier wavelength with its derived wavenumber."""

    value: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "value", check_wavelength(self.value))

    @classmethod
    def from_frequency(cls, frequency_hz: float) -> "Wavelength":
        return cls(wavelength_from_frequency(frequency_hz))

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.value


class FieldRegion(Enum):
    """Propagation regime of a single link."""

    NEAR_FIELD = "near_field"
    FAR_FIELD = "far_field"


@dataclass(frozen=True, eq=False)
class RisGeometry:
    """
    Regular planar array of ``rows × cols`` elements.

    Element ``m = r * cols + c`` sits at ``center + du[c] * u_axis + dv[r] * v_axis``
    where the offsets are centered on the array. ``u_axis``, ``v_axis`` and
    ``normal`` form a right-handed orthonormal frame.
    """

    positions: np.ndarray
    rows: int
    cols: int
    spacing: float
    center: Vec3
    normal: Vec3
    u_axis: np.ndarray = field(repr=False)
    v_axis: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.positions.setflags(write=False)
        self.u_axis.setflags(write=False)
        self.v_axis.setflags(write=False)

    @property
    def element_count(self) -> int:
        return self.rows * self.cols

    @property
    def aperture_diagonal(self) -> float:
        return self.spacing * math.hypot(self.rows - 1, self.cols - 1)

    @property
    def element_positions(self) -> List[Vec3]:
        return [Vec3.from_array(p) for p in self.positions]

    @property
    def local_coordinates(self) -> np.ndarray:
        """In-plane (u, v) offset of every element from the center, shape (M, 2)."""
        cols = (np.arange(self.cols) - (self.cols - 1) / 2.0) * self.spacing
        rows = (np.arange(self.rows) - (self.rows - 1) / 2.0) * self.spacing
        uu, vv = np.meshgrid(cols, rows)
        return np.column_stack([uu.ravel(), vv.ravel()])

    def full_mask(self) -> np.ndarray:
        return np.ones(self.element_count, dtype=bool)


def in_plane_basis(normal: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    reference = np.array([1.0, 0.0, 0.0])
    if abs(float(normal @ reference)) > 0.9:
        reference = np.array([0.0, 1.0, 0.0])
    u_axis = reference - (reference @ normal) * normal
    u_axis /= np.linalg.norm(u_axis)
    v_axis = np.cross(normal, u_axis)
    return u_axis, v_axis


def rayleigh_distance(aperture: float, wavelength: float) -> float:
    """
    Near/far-field boundary 2D²/λ.

    Args:
        aperture: Aperture diagonal D in meters (D >= 0)
        wavelength: Carrier wavelength λ in meters

    Returns:
        Rayleigh distance in meters
    """
    wavelength = check_wavelength(wavelength)
    if not aperture >= 0:
        raise DomainError(f"aperture must be non-negative, got {aperture}")
    return 2.0 * aperture * aperture / wavelength


def build_planar_array(
    rows: int,
    cols: int,
    spacing: float,
    center: Vec3 = Vec3(0.0, 0.0, 0.0),
    normal: Vec3 = Vec3(0.0, 0.0, 1.0),
) -> RisGeometry:
    """
    Build a centered rectangular grid in the plane orthogonal to ``normal``.

    Args:
        rows: Number of element rows (along v)
        cols: Number of element columns (along u)
        spacing: Element pitch in meters
        center: Array center
        normal: Plane normal; normalized internally

    Returns:
        RisGeometry with rows*cols element positions
    """
    if rows < 1 or cols < 1:
        raise DomainError(f"rows and cols must be >= 1, got {rows}x{cols}")
    if not spacing > 0:
        raise DomainError(f"spacing must be positive, got {spacing}")
    n = normal.as_array()
    norm = float(np.linalg.norm(n))
    if norm == 0.0:
        raise DomainError("normal must be nonzero")
    n = n / norm
    u_axis, v_axis = in_plane_basis(n)

    du = (np.arange(cols) - (cols - 1) / 2.0) * spacing
    dv = (np.arange(rows) - (rows - 1) / 2.0) * spacing
    uu, vv = np.meshgrid(du, dv)
    positions = (
        center.as_array()[None, :]
        + uu.ravel()[:, None] * u_axis[None, :]
        + vv.ravel()[:, None] * v_axis[None, :]
    )

    return RisGeometry(
        positions=positions,
        rows=int(rows),
        cols=int(cols),
        spacing=float(spacing),
        center=center,
        normal=Vec3.from_array(n),
        u_axis=u_axis,
        v_axis=v_axis,
    )


def single_antenna(position: Vec3) -> RisGeometry:
    """One-element geometry used for single-antenna transmitters and users."""
    return build_planar_array(1, 1, 1.0, center=position)


def _check_mask(geometry: RisGeometry, mask: Optional[np.ndarray]) -> np.ndarray:
    if mask is None:
        return geometry.full_mask()
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size != geometry.element_count:
        raise GeometryError(
            f"mask has {mask.size} entries, geometry has {geometry.element_count} elements"
        )
    if not mask.any():
        raise GeometryError("active mask is empty")
    return mask


def aperture_of_mask(geometry: RisGeometry, mask: Optional[np.ndarray] = None) -> float:
    """Bounding-rectangle diagonal of the active elements (the dynamic aperture)."""
    mask = _check_mask(geometry, mask)
    local = geometry.local_coordinates[mask]
    extent = local.max(axis=0) - local.min(axis=0)
    return float(math.hypot(extent[0], extent[1]))


def active_center(geometry: RisGeometry, mask: Optional[np.ndarray] = None) -> Vec3:
    """Center of the bounding rectangle of the active elements."""
    mask = _check_mask(geometry, mask)
    if mask.all():
        return geometry.center
    local = geometry.local_coordinates[mask]
    mid = (local.max(axis=0) + local.min(axis=0)) / 2.0
    point = geometry.center.as_array() + mid[0] * geometry.u_axis + mid[1] * geometry.v_axis
    return Vec3.from_array(point)


def region_for_distance(distance: float, aperture: float, wavelength: float) -> FieldRegion:
    """NEAR_FIELD iff ``distance`` is strictly shorter than the Rayleigh distance of ``aperture``."""
    boundary = rayleigh_distance(aperture, wavelength)
    return FieldRegion.NEAR_FIELD if distance < boundary else FieldRegion.FAR_FIELD


def classify_region(
    geometry: RisGeometry,
    point: Vec3,
    wavelength: float,
    mask: Optional[np.ndarray] = None,
) -> FieldRegion:
    """
    Classify one link by its distance to the (active) aperture center.

    The boundary is exclusive: a point exactly at the Rayleigh distance is far field.
    """
    distance = active_center(geometry, mask).distance_to(point)
    return region_for_distance(distance, aperture_of_mask(geometry, mask), wavelength)


def centered_block_mask(geometry: RisGeometry, count: int) -> np.ndarray:
    """
    Centered contiguous block of at least ``count`` active elements.

    The block fills along columns first, then grows by whole rows, so masks for
    increasing counts are nested.
    """
    if count < 1:
        raise GeometryError(f"active count must be >= 1, got {count}")
    block_cols = min(geometry.cols, count)
    block_rows = min(geometry.rows, math.ceil(count / block_cols))
    col0 = (geometry.cols - block_cols) // 2
    row0 = (geometry.rows - block_rows) // 2
    grid = np.zeros((geometry.rows, geometry.cols), dtype=bool)
    grid[row0 : row0 + block_rows, col0 : col0 + block_cols] = True
    return grid.ravel()


def polar_point(geometry: RisGeometry, angle: float, distance: float) -> Vec3:
    """Point at ``distance`` from the center, ``angle`` radians off broadside in the u-normal plane."""
    if not distance > 0:
        raise DomainError(f"distance must be positive, got {distance}")
    n = geometry.normal.as_array()
    offset = distance * (math.sin(angle) * geometry.u_axis + math.cos(angle) * n)
    return Vec3.from_array(geometry.center.as_array() + offset)


def polar_coordinates(geometry: RisGeometry, point: Vec3) -> Tuple[float, float]:
    """Inverse of ``polar_point``: (angle, distance) of ``point`` seen from the center."""
    rel = point.as_array() - geometry.center.as_array()
    n = geometry.normal.as_array()
    distance = float(np.linalg.norm(rel))
    angle = math.atan2(float(rel @ geometry.u_axis), float(rel @ n))
    return angle, distance


def in_front(geometry: RisGeometry, point: Vec3) -> bool:
    """True when ``point`` lies strictly on the normal side of the array plane."""
    rel = point.as_array() - geometry.center.as_array()
    return float(rel @ geometry.normal.as_array()) > 0.0


def coplanarity_error(geometry: RisGeometry) -> float:
    """Largest element distance to the array plane."""
    rel = geometry.positions - geometry.center.as_array()[None, :]
    return float(np.max(np.abs(rel @ geometry.normal.as_array())))
