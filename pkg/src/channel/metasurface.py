"""
Quasi-continuous metasurface RIS.

The surface is discretized into midpoint cells; a RadiationOperator maps the
cell currents to the scalar field at receiver samples through the free-space
Green kernel g(s, r) = exp(−j2π‖s − r‖/λ) / (4π‖s − r‖). The end-to-end power
gain is the quadrature of |∫ J g dA|² scaled by a plane-wave capture term.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.spatial.distance import cdist

from src.channel.geometry import RisGeometry, Vec3, check_wavelength, in_plane_basis
from src.exceptions import DimensionMismatchError, DomainError, GeometryError

logger = logging.getLogger(__name__)

DEFAULT_SAMPLES_PER_WAVELENGTH = 8
MIN_SAMPLES_PER_WAVELENGTH = 2
CURRENT_TOL = 1e-12
GRAM_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class SurfaceGrid:
    """Midpoint cells of a rectangular ``width × height`` aperture."""

    points: np.ndarray
    nx: int
    ny: int
    width: float
    height: float
    center: Vec3
    normal: Vec3
    u_axis: np.ndarray = field(repr=False)
    v_axis: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.points.setflags(write=False)

    @property
    def sample_count(self) -> int:
        return self.nx * self.ny

    @property
    def cell_area(self) -> float:
        return (self.width / self.nx) * (self.height / self.ny)

    @property
    def aperture(self) -> float:
        return self.width * self.height

    @property
    def grid_spacing(self) -> float:
        return max(self.width / self.nx, self.height / self.ny)


def _grid(
    width: float, height: float, nx: int, ny: int, center: Vec3, normal: Vec3
) -> SurfaceGrid:
    n = normal.as_array()
    norm = float(np.linalg.norm(n))
    if norm == 0.0:
        raise DomainError("normal must be nonzero")
    n = n / norm
    u_axis, v_axis = in_plane_basis(n)
    du = (np.arange(nx) + 0.5) * (width / nx) - width / 2.0
    dv = (np.arange(ny) + 0.5) * (height / ny) - height / 2.0
    uu, vv = np.meshgrid(du, dv)
    points = (
        center.as_array()[None, :]
        + uu.ravel()[:, None] * u_axis[None, :]
        + vv.ravel()[:, None] * v_axis[None, :]
    )
    return SurfaceGrid(
        points=points,
        nx=nx,
        ny=ny,
        width=float(width),
        height=float(height),
        center=center,
        normal=Vec3.from_array(n),
        u_axis=u_axis,
        v_axis=v_axis,
    )


def _cells_per_length(length: float, wavelength: float, samples_per_wavelength: int) -> int:
    if samples_per_wavelength < MIN_SAMPLES_PER_WAVELENGTH:
        raise DomainError(
            f"samples_per_wavelength must be >= {MIN_SAMPLES_PER_WAVELENGTH}, "
            f"got {samples_per_wavelength}"
        )
    # Round before ceil so exact multiples of the cell size do not gain a cell.
    return max(1, math.ceil(round(length * samples_per_wavelength / wavelength, 9)))


def build_surface_grid(
    width: float,
    height: float,
    wavelength: float,
    center: Vec3 = Vec3(0.0, 0.0, 0.0),
    normal: Vec3 = Vec3(0.0, 0.0, 1.0),
    samples_per_wavelength: int = DEFAULT_SAMPLES_PER_WAVELENGTH,
) -> SurfaceGrid:
    """
    Discretize a rectangular metasurface with cells no larger than λ/samples_per_wavelength.

    Args:
        width: Extent along u in meters
        height: Extent along v in meters
        wavelength: Carrier wavelength
        center: Surface center
        normal: Surface normal
        samples_per_wavelength: Cells per wavelength, λ/8 by default

    Returns:
        SurfaceGrid whose cell areas sum to width*height
    """
    wavelength = check_wavelength(wavelength)
    if not (width > 0 and height > 0):
        raise DomainError(f"surface extents must be positive, got {width} x {height}")
    nx = _cells_per_length(width, wavelength, samples_per_wavelength)
    ny = _cells_per_length(height, wavelength, samples_per_wavelength)
    return _grid(width, height, nx, ny, center, normal)


def surface_grid_for_array(
    geometry: RisGeometry,
    wavelength: float,
    samples_per_wavelength: int = DEFAULT_SAMPLES_PER_WAVELENGTH,
) -> SurfaceGrid:
    """
    Grid covering a patch array's footprint with an integer number of cells per element.

    Each element occupies a ``spacing × spacing`` tile; see ``element_partition``.
    """
    wavelength = check_wavelength(wavelength)
    per_element = _cells_per_length(geometry.spacing, wavelength, samples_per_wavelength)
    return _grid(
        geometry.cols * geometry.spacing,
        geometry.rows * geometry.spacing,
        geometry.cols * per_element,
        geometry.rows * per_element,
        geometry.center,
        geometry.normal,
    )


def element_partition(grid: SurfaceGrid, geometry: RisGeometry) -> List[np.ndarray]:
    """Cell indices of each patch element, in element order ``m = r * cols + c``."""
    if grid.nx % geometry.cols or grid.ny % geometry.rows:
        raise GeometryError(
            f"{grid.ny}x{grid.nx} grid does not tile a {geometry.rows}x{geometry.cols} array"
        )
    px = grid.nx // geometry.cols
    py = grid.ny // geometry.rows
    cells = np.arange(grid.sample_count).reshape(grid.ny, grid.nx)
    return [
        cells[r * py : (r + 1) * py, c * px : (c + 1) * px].ravel()
        for r in range(geometry.rows)
        for c in range(geometry.cols)
    ]


@dataclass(frozen=True, eq=False)
class CurrentDistribution:
    """Surface current per grid sample, normalized so that max |J| <= 1."""

    J: np.ndarray

    def __post_init__(self) -> None:
        J = np.asarray(self.J, dtype=complex).ravel()
        peak = float(np.max(np.abs(J))) if J.size else 0.0
        if peak > 1.0 + CURRENT_TOL:
            raise DomainError(f"current must satisfy max|J| <= 1, got {peak:.6g}")
        object.__setattr__(self, "J", J)

    @classmethod
    def uniform(cls, sample_count: int) -> "CurrentDistribution":
        return cls(np.ones(sample_count, dtype=complex))

    @classmethod
    def zeros(cls, sample_count: int) -> "CurrentDistribution":
        return cls(np.zeros(sample_count, dtype=complex))

    @classmethod
    def cophased(
        cls, grid: SurfaceGrid, rx: Vec3, wavelength: float
    ) -> "CurrentDistribution":
        """Unit-amplitude current J_k = exp(+j2π‖s_k − r‖/λ) focusing on ``rx``."""
        operator = build_operator(grid, [rx], wavelength)
        return cls(np.exp(-1j * np.angle(operator.matrix[0])))


class RadiationOperator:
    """
    Linear map from surface currents to the field at receiver samples.

    ``matrix[p, k] = g(s_k, r_p)``; it is assembled on first use and cached.
    """

    def __init__(self, grid: SurfaceGrid, rx_samples: np.ndarray, wavelength: float):
        self.grid = grid
        self.rx_samples = rx_samples
        self.wavelength = wavelength
        self.wavenumber = 2.0 * math.pi / wavelength

    @property
    def shape(self):
        return (self.rx_samples.shape[0], self.grid.sample_count)

    def _block(self, start: int, stop: int) -> np.ndarray:
        d = cdist(self.rx_samples, self.grid.points[start:stop])
        return np.exp(-1j * self.wavenumber * d) / (4.0 * math.pi * d)

    @cached_property
    def matrix(self) -> np.ndarray:
        G = self._block(0, self.grid.sample_count)
        G.setflags(write=False)
        return G

    def apply(self, current: CurrentDistribution) -> np.ndarray:
        """Field at each receiver sample, Σ_k G[p, k] J[k] dA."""
        if current.J.size != self.grid.sample_count:
            raise DimensionMismatchError(
                f"current has {current.J.size} samples, grid has {self.grid.sample_count}"
            )
        return (self.matrix @ current.J) * self.grid.cell_area

    def singular_values(self) -> np.ndarray:
        """
        Singular values of ``matrix`` in descending order.

        Accumulates the receiver-side Gram matrix G Gᴴ over chunks of surface
        samples so the full operator is never held when receivers are fewer.
        """
        rows, cols = self.shape
        if rows <= cols:
            gram = np.zeros((rows, rows), dtype=complex)
            for start in range(0, cols, GRAM_CHUNK):
                block = self._block(start, min(start + GRAM_CHUNK, cols))
                gram += block @ block.conj().T
        else:
            G = self.matrix
            gram = G.conj().T @ G
        eigenvalues = eigh(gram, eigvals_only=True)
        return np.sqrt(np.clip(eigenvalues[::-1], 0.0, None))


def build_operator(
    grid: SurfaceGrid, rx_samples: Sequence[Vec3], wavelength: float
) -> RadiationOperator:
    """
    Radiation operator from ``grid`` to ``rx_samples``.

    Raises:
        DomainError: a receiver sample is closer than one wavelength to the surface
    """
    wavelength = check_wavelength(wavelength)
    if len(rx_samples) == 0:
        raise DomainError("at least one receiver sample is required")
    rx = np.array([p.as_array() for p in rx_samples], dtype=float)
    closest = float(_min_distance(rx, grid.points))
    if closest < wavelength:
        raise DomainError(
            f"receiver sample {closest:.4g} m from the surface is inside the reactive zone "
            f"(< lambda = {wavelength:.4g} m)"
        )
    return RadiationOperator(grid, rx, wavelength)


def _min_distance(a: np.ndarray, b: np.ndarray) -> float:
    closest = math.inf
    for start in range(0, b.shape[0], GRAM_CHUNK):
        closest = min(closest, float(cdist(a, b[start : start + GRAM_CHUNK]).min()))
    return closest


@dataclass(frozen=True)
class TxParams:
    """Plane-wave illumination: transmit directivity, effective area and distance."""

    directivity: float
    effective_area: float
    distance: float

    def __post_init__(self) -> None:
        if not self.distance > 0:
            raise DomainError(f"transmitter distance must be positive, got {self.distance}")
        if self.directivity < 0 or self.effective_area < 0:
            raise DomainError("directivity and effective area must be non-negative")

    @property
    def capture(self) -> float:
        return self.directivity * self.effective_area / (4.0 * math.pi * self.distance**2)


def channel_gain(
    grid: SurfaceGrid,
    current: CurrentDistribution,
    tx: TxParams,
    rx: Vec3,
    wavelength: float,
) -> float:
    """|h(J)|² = G·A_T/(4πd²) · |Σ_k J[k] g(s_k, rx) dA|²."""
    if current.J.size != grid.sample_count:
        raise DimensionMismatchError(
            f"current has {current.J.size} samples, grid has {grid.sample_count}"
        )
    field_at_rx = build_operator(grid, [rx], wavelength).apply(current)[0]
    return float(tx.capture * abs(field_at_rx) ** 2)


def _check_partition(grid: SurfaceGrid, partition: Sequence[np.ndarray]) -> None:
    if not partition:
        raise GeometryError("partition has no elements")
    indices = np.concatenate([np.asarray(p, dtype=int).ravel() for p in partition])
    if indices.size and (indices.min() < 0 or indices.max() >= grid.sample_count):
        raise GeometryError("partition references cells outside the grid")
    counts = np.bincount(indices, minlength=grid.sample_count)
    if (counts == 0).any():
        raise GeometryError(f"partition leaves {int((counts == 0).sum())} cells uncovered")
    if (counts > 1).any():
        raise GeometryError(f"partition assigns {int((counts > 1).sum())} cells twice")


def patch_emulation(
    grid: SurfaceGrid,
    partition: Sequence[np.ndarray],
    phases: Sequence[float],
) -> CurrentDistribution:
    """Piecewise-constant current J[k] = exp(jφ_e) for every cell k of element e."""
    _check_partition(grid, partition)
    phases = np.asarray(phases, dtype=float).ravel()
    if phases.size != len(partition):
        raise DimensionMismatchError(
            f"{phases.size} phases for a partition of {len(partition)} elements"
        )
    J = np.empty(grid.sample_count, dtype=complex)
    for cells, phase in zip(partition, phases):
        J[np.asarray(cells, dtype=int)] = np.exp(1j * phase)
    return CurrentDistribution(J)


def optimal_patch_phases(
    grid: SurfaceGrid,
    partition: Sequence[np.ndarray],
    rx: Vec3,
    wavelength: float,
    operator: Optional[RadiationOperator] = None,
) -> np.ndarray:
    """Per-element phases co-phasing the element sums c_e = Σ_{k∈e} g(s_k, rx) dA."""
    _check_partition(grid, partition)
    operator = operator or build_operator(grid, [rx], wavelength)
    row = operator.matrix[0]
    sums = np.array([row[np.asarray(cells, dtype=int)].sum() for cells in partition])
    return -np.angle(sums)
