"""
Angular and polar-domain RIS codebooks.

Angular codewords steer a planar wavefront toward an angle; polar codewords
focus a spherical wavefront on an (angle, distance) point. The hierarchical
codebook descends from coarse angular beams formed by small central sub-arrays
(stage 1) to joint angle-distance beams of the growing array (stage 2). Every
layer tiles the polar domain [−π/2, π/2) × [d_min, d_max) exactly and every
region is split into its children, which is what ``check_criteria`` asserts.

Angles are split uniformly in sin θ and distances uniformly in 1/d.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.channel.geometry import (
    RisGeometry,
    Vec3,
    aperture_of_mask,
    centered_block_mask,
    check_wavelength,
    polar_point,
    rayleigh_distance,
)
from src.channel.links import RisProfile
from src.exceptions import ConfigError, DomainError, GeometryError

logger = logging.getLogger(__name__)

BRANCHING = 2
ANGLE_MIN = -math.pi / 2.0
ANGLE_MAX = math.pi / 2.0
HALF_POWER_WIDTH = 0.886  # half-power beamwidth of a uniform aperture in sin θ, units of λ/L
D_MIN_FRACTION = 0.05


@dataclass(frozen=True)
class PolarRegion:
    """Half-open cell [angle_lo, angle_hi) × [d_lo, d_hi) of the polar domain."""

    angle_lo: float
    angle_hi: float
    d_lo: float
    d_hi: float

    def __post_init__(self) -> None:
        if not self.angle_lo < self.angle_hi:
            raise DomainError(f"empty angle interval [{self.angle_lo}, {self.angle_hi})")
        if not 0.0 < self.d_lo < self.d_hi:
            raise DomainError(f"invalid distance interval [{self.d_lo}, {self.d_hi})")

    def contains(self, angle: float, distance: float) -> bool:
        return self.angle_lo <= angle < self.angle_hi and self.d_lo <= distance < self.d_hi

    def covers(self, other: "PolarRegion") -> bool:
        return (
            self.angle_lo <= other.angle_lo
            and other.angle_hi <= self.angle_hi
            and self.d_lo <= other.d_lo
            and other.d_hi <= self.d_hi
        )

    @property
    def center_angle(self) -> float:
        return float(np.arcsin((math.sin(self.angle_lo) + math.sin(self.angle_hi)) / 2.0))

    @property
    def center_distance(self) -> float:
        return 2.0 / (1.0 / self.d_lo + 1.0 / self.d_hi)


@dataclass(frozen=True, eq=False)
class Codeword:
    profile: RisProfile
    region: PolarRegion
    active_mask: np.ndarray
    layer: int = 0
    index: int = 0

    @property
    def active_count(self) -> int:
        return int(np.count_nonzero(self.active_mask))


def default_distance_domain(geometry: RisGeometry, wavelength: float) -> Tuple[float, float]:
    """[0.05·R, R) with R the Rayleigh distance of the full array, floored at a wavelength."""
    boundary = rayleigh_distance(geometry.aperture_diagonal, wavelength)
    return max(D_MIN_FRACTION * boundary, wavelength), max(boundary, 2.0 * wavelength)


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


def steering_phases(geometry: RisGeometry, angle: float, wavelength: float) -> np.ndarray:
    """−(2π/λ)·u_m·sin θ: conjugate of the planar-wavefront phase, zero at the center."""
    k = 2.0 * math.pi / wavelength
    return -k * geometry.local_coordinates[:, 0] * math.sin(angle)


def focusing_phases(geometry: RisGeometry, point: Vec3, wavelength: float) -> np.ndarray:
    """(2π/λ)(‖s_m − p‖ − ‖c − p‖): conjugate of the spherical-wavefront phase, zero at the center."""
    k = 2.0 * math.pi / wavelength
    p = point.as_array()
    distances = np.linalg.norm(geometry.positions - p[None, :], axis=1)
    return k * (distances - geometry.center.distance_to(point))


def planar_response(profile: RisProfile, geometry: RisGeometry, angle: float, wavelength: float) -> float:
    """|Σ_m θ_m exp(+j(2π/λ) u_m sin θ)|: far-field array factor toward ``angle``."""
    return float(abs(profile.coefficients() @ np.exp(-1j * steering_phases(geometry, angle, wavelength))))


def focal_response(profile: RisProfile, geometry: RisGeometry, point: Vec3, wavelength: float) -> float:
    """|Σ_m θ_m exp(−j(2π/λ)‖s_m − p‖)|: unit-gain array response at ``point``."""
    return float(abs(profile.coefficients() @ np.exp(-1j * focusing_phases(geometry, point, wavelength))))


def half_power_region(
    geometry: RisGeometry,
    mask: np.ndarray,
    angle: float,
    wavelength: float,
    distance_domain: Tuple[float, float],
) -> PolarRegion:
    """Angular interval of the main lobe above half power, over the full distance domain."""
    local = geometry.local_coordinates[mask, 0]
    length = float(local.max() - local.min()) + geometry.spacing
    half_width = HALF_POWER_WIDTH * wavelength / length / 2.0
    s = math.sin(angle)
    lo = float(np.arcsin(max(-1.0, s - half_width)))
    hi = float(np.arcsin(min(1.0, s + half_width)))
    return PolarRegion(lo, hi, distance_domain[0], distance_domain[1])


def angular_codeword(
    geometry: RisGeometry,
    mask: Optional[np.ndarray],
    angle: float,
    wavelength: float,
    region: Optional[PolarRegion] = None,
    distance_domain: Optional[Tuple[float, float]] = None,
) -> Codeword:
    """
    Beamsteering codeword toward ``angle`` using only the active elements.

    Without an explicit ``region`` the codeword covers its half-power beamwidth.
    """
    wavelength = check_wavelength(wavelength)
    mask = _check_mask(geometry, mask)
    if not ANGLE_MIN < angle < ANGLE_MAX:
        raise GeometryError(f"target angle {angle:.4f} rad is not in the front half-space")
    if region is None:
        domain = distance_domain or default_distance_domain(geometry, wavelength)
        region = half_power_region(geometry, mask, angle, wavelength, domain)
    profile = RisProfile.from_phases(steering_phases(geometry, angle, wavelength), mask)
    return Codeword(profile=profile, region=region, active_mask=mask)


def polar_codeword(
    geometry: RisGeometry,
    mask: Optional[np.ndarray],
    angle: float,
    distance: float,
    wavelength: float,
    region: Optional[PolarRegion] = None,
) -> Codeword:
    """
    Beamfocusing codeword on the point at (``angle``, ``distance``).

    Without an explicit ``region`` the codeword covers its half-power beamwidth
    around ``distance``, from half to twice the focal distance.
    """
    wavelength = check_wavelength(wavelength)
    mask = _check_mask(geometry, mask)
    if not ANGLE_MIN < angle < ANGLE_MAX:
        raise GeometryError(f"target angle {angle:.4f} rad is behind the surface")
    if not distance > wavelength:
        raise DomainError(f"focal distance {distance:.4g} m must exceed one wavelength")
    point = polar_point(geometry, angle, distance)
    if region is None:
        region = half_power_region(geometry, mask, angle, wavelength, (distance / 2.0, 2.0 * distance))
    profile = RisProfile.from_phases(focusing_phases(geometry, point, wavelength), mask)
    return Codeword(profile=profile, region=region, active_mask=mask)


def split_angles(lo: np.ndarray, hi: np.ndarray, parts: int) -> np.ndarray:
    """Breakpoints uniform in sin θ, shape (P, parts + 1); the ends equal ``lo`` and ``hi`` exactly."""
    s_lo, s_hi = np.sin(lo), np.sin(hi)
    frac = np.arange(parts + 1) / parts
    points = np.arcsin(s_lo[:, None] + (s_hi - s_lo)[:, None] * frac[None, :])
    points[:, 0] = lo
    points[:, -1] = hi
    return points


def split_distances(lo: np.ndarray, hi: np.ndarray, parts: int) -> np.ndarray:
    """Breakpoints uniform in 1/d, shape (P, parts + 1); the ends equal ``lo`` and ``hi`` exactly."""
    inv_lo, inv_hi = 1.0 / lo, 1.0 / hi
    frac = np.arange(parts + 1) / parts
    points = 1.0 / (inv_lo[:, None] + (inv_hi - inv_lo)[:, None] * frac[None, :])
    points[:, 0] = lo
    points[:, -1] = hi
    return points


@dataclass(frozen=True, eq=False)
class LayerRegions:
    """Regions of one codebook layer as parallel arrays, index-aligned with the codewords."""

    angle_lo: np.ndarray
    angle_hi: np.ndarray
    d_lo: np.ndarray
    d_hi: np.ndarray
    parent: np.ndarray

    def __len__(self) -> int:
        return int(self.angle_lo.size)

    def region(self, index: int) -> PolarRegion:
        return PolarRegion(
            float(self.angle_lo[index]),
            float(self.angle_hi[index]),
            float(self.d_lo[index]),
            float(self.d_hi[index]),
        )


def root_regions(domain: PolarRegion) -> LayerRegions:
    return LayerRegions(
        np.array([domain.angle_lo]),
        np.array([domain.angle_hi]),
        np.array([domain.d_lo]),
        np.array([domain.d_hi]),
        np.array([-1]),
    )


def _split_regions(parent: LayerRegions, distance_parts: int) -> LayerRegions:
    """Split every parent into BRANCHING angle halves × ``distance_parts`` distance cells."""
    count = len(parent)
    angles = split_angles(parent.angle_lo, parent.angle_hi, BRANCHING)
    distances = split_distances(parent.d_lo, parent.d_hi, distance_parts)
    shape = (count, BRANCHING, distance_parts)
    angle_lo = np.broadcast_to(angles[:, :-1, None], shape).ravel()
    angle_hi = np.broadcast_to(angles[:, 1:, None], shape).ravel()
    d_lo = np.broadcast_to(distances[:, None, :-1], shape).ravel()
    d_hi = np.broadcast_to(distances[:, None, 1:], shape).ravel()
    parents = np.repeat(np.arange(count), BRANCHING * distance_parts)
    return LayerRegions(angle_lo, angle_hi, d_lo, d_hi, parents)


class HierarchicalCodebook:
    """
    Two-stage hierarchical codebook with lazily built layers.

    Layers are numbered 1..L1+L2. Every node has BRANCHING children in stage 1
    (angle halves) and BRANCHING × ``distance_branches`` children in stage 2
    (angle halves × distance cells). Layer ``l`` activates a centered block of
    min(2^l, N) elements; codewords are assembled only when requested.
    """

    def __init__(
        self,
        geometry: RisGeometry,
        wavelength: float,
        stage1_layers: int,
        stage2_layers: int,
        distance_branches: int,
        d_min: float,
        d_max: float,
        requested_stage2_layers: Optional[int] = None,
    ):
        self.geometry = geometry
        self.wavelength = wavelength
        self.stage1_layers = stage1_layers
        self.stage2_layers = stage2_layers
        self.requested_stage2_layers = (
            stage2_layers if requested_stage2_layers is None else requested_stage2_layers
        )
        self.distance_branches = distance_branches
        self.domain = PolarRegion(ANGLE_MIN, ANGLE_MAX, d_min, d_max)
        self._regions: Dict[int, LayerRegions] = {}
        self._masks: Dict[int, np.ndarray] = {}

    @property
    def total_layers(self) -> int:
        return self.stage1_layers + self.stage2_layers

    @property
    def pilot_count(self) -> int:
        """Codewords measured by one descent, b·L1 + b·D_b·L2 on the effective split."""
        stage2_fanout = BRANCHING * self.distance_branches
        return BRANCHING * self.stage1_layers + stage2_fanout * self.stage2_layers

    def is_stage2(self, layer: int) -> bool:
        return layer > self.stage1_layers

    def fanout(self, layer: int) -> int:
        """Number of children each node of ``layer - 1`` has in ``layer``."""
        return BRANCHING * (self.distance_branches if self.is_stage2(layer) else 1)

    def layer_size(self, layer: int) -> int:
        self._check_layer(layer)
        size = 1
        for l in range(1, layer + 1):
            size *= self.fanout(l)
        return size

    def _check_layer(self, layer: int) -> None:
        if not 1 <= layer <= self.total_layers:
            raise DomainError(f"layer must be in 1..{self.total_layers}, got {layer}")

    def regions(self, layer: int) -> LayerRegions:
        self._check_layer(layer)
        if layer not in self._regions:
            if layer == 1:
                parent = root_regions(self.domain)
            else:
                parent = self.regions(layer - 1)
            parts = self.distance_branches if self.is_stage2(layer) else 1
            self._regions[layer] = _split_regions(parent, parts)
        return self._regions[layer]

    def active_count(self, layer: int) -> int:
        return int(np.count_nonzero(self.active_mask(layer)))

    def active_mask(self, layer: int) -> np.ndarray:
        self._check_layer(layer)
        if layer not in self._masks:
            count = min(2**layer, self.geometry.element_count)
            self._masks[layer] = centered_block_mask(self.geometry, count)
        return self._masks[layer]

    def codeword(self, layer: int, index: int) -> Codeword:
        region = self.regions(layer).region(index)
        mask = self.active_mask(layer)
        if self.is_stage2(layer):
            cw = polar_codeword(
                self.geometry,
                mask,
                region.center_angle,
                region.center_distance,
                self.wavelength,
                region=region,
            )
        else:
            cw = angular_codeword(
                self.geometry, mask, region.center_angle, self.wavelength, region=region
            )
        return Codeword(cw.profile, region, mask, layer=layer, index=index)

    def layer(self, layer: int) -> List[Codeword]:
        return [self.codeword(layer, i) for i in range(self.layer_size(layer))]

    def children(self, layer: int, index: int) -> range:
        """Indices in ``layer + 1`` of the children of node ``index`` of ``layer``."""
        fanout = self.fanout(layer + 1)
        return range(index * fanout, (index + 1) * fanout)

    def to_frame(self, max_layer: Optional[int] = None) -> pd.DataFrame:
        frames = []
        for layer in range(1, (max_layer or self.total_layers) + 1):
            regions = self.regions(layer)
            frames.append(
                pd.DataFrame(
                    {
                        "layer": layer,
                        "index": np.arange(len(regions)),
                        "theta_lo": regions.angle_lo,
                        "theta_hi": regions.angle_hi,
                        "d_lo": regions.d_lo,
                        "d_hi": regions.d_hi,
                        "active_count": self.active_count(layer),
                        "aperture": sub_array_aperture(self, layer),
                    }
                )
            )
        return pd.concat(frames, ignore_index=True)


def total_layers_for(element_count: int) -> int:
    """L_t = ceil(log2 N)."""
    if element_count < 1:
        raise DomainError(f"element count must be positive, got {element_count}")
    return int(math.ceil(math.log2(element_count))) if element_count > 1 else 0


def resolvable_layers(geometry: RisGeometry, wavelength: float, d_min: float) -> int:
    """
    Number of trailing layers whose active sub-array can split distance.

    A layer resolves distance when the Rayleigh distance of its centered block
    of min(2^l, N) elements exceeds ``d_min``; below that every focal point of
    the domain lies in the sub-array's far field and distance cells are
    indistinguishable.
    """
    total = total_layers_for(geometry.element_count)
    count = 0
    for layer in range(total, 0, -1):
        mask = centered_block_mask(geometry, min(2**layer, geometry.element_count))
        if rayleigh_distance(aperture_of_mask(geometry, mask), wavelength) <= d_min:
            break
        count += 1
    return count


def build_hierarchical(
    geometry: RisGeometry,
    wavelength: float,
    stage1_layers: int,
    stage2_layers: int,
    distance_branches: int = 4,
    d_max: Optional[float] = None,
    d_min: Optional[float] = None,
) -> HierarchicalCodebook:
    """
    Hierarchical polar codebook for ``geometry``.

    Args:
        geometry: RIS geometry
        wavelength: Carrier wavelength
        stage1_layers: L1, angular layers with sub-array activation
        stage2_layers: L2, joint angle-distance layers
        distance_branches: Distance cells per node split in stage 2
        d_max: Far edge of the distance domain (Rayleigh distance by default)
        d_min: Near edge (0.05 × Rayleigh distance by default)

    Only layers whose active sub-array resolves ``d_min`` split distance. When
    L2 asks for more, the extra layers are built as angular layers and the
    codebook keeps the request in ``requested_stage2_layers``; its
    ``stage1_layers``/``stage2_layers`` and ``pilot_count`` describe what is
    actually measured.

    Returns:
        HierarchicalCodebook satisfying both codebook criteria

    Raises:
        ConfigError: L1 + L2 differs from ceil(log2 N)
    """
    wavelength = check_wavelength(wavelength)
    expected = total_layers_for(geometry.element_count)
    if stage1_layers < 0 or stage2_layers < 0 or stage1_layers + stage2_layers != expected:
        raise ConfigError(
            f"L1 + L2 = {stage1_layers} + {stage2_layers} must equal "
            f"ceil(log2 N) = {expected} for N = {geometry.element_count}"
        )
    if distance_branches < 1:
        raise ConfigError(f"distance_branches must be >= 1, got {distance_branches}")
    default_lo, default_hi = default_distance_domain(geometry, wavelength)
    d_min = d_min if d_min is not None else default_lo
    d_max = d_max if d_max is not None else default_hi
    if not 0.0 < d_min < d_max:
        raise ConfigError(f"distance domain [{d_min}, {d_max}) is empty")

    usable = resolvable_layers(geometry, wavelength, d_min)
    effective = min(stage2_layers, usable)
    if effective < stage2_layers:
        logger.warning(
            f"Only the last {usable} layer(s) resolve d_min={d_min:.4g} m; "
            f"L2={stage2_layers} reduced to {effective}"
        )

    codebook = HierarchicalCodebook(
        geometry,
        wavelength,
        expected - effective,
        effective,
        distance_branches,
        d_min,
        d_max,
        requested_stage2_layers=stage2_layers,
    )
    logger.info(
        f"Hierarchical codebook: N={geometry.element_count}, L1={codebook.stage1_layers}, "
        f"L2={effective}, D_b={distance_branches}, d in [{d_min:.4g}, {d_max:.4g}) m"
    )
    return codebook


def _tiling_violations(parent: LayerRegions, child: LayerRegions, fanout: int, parts: int, layer: int) -> List[str]:
    violations: List[str] = []
    count = len(parent)
    if len(child) != count * fanout:
        return [f"layer {layer}: {len(child)} regions, expected {count * fanout}"]
    if not np.array_equal(child.parent, np.repeat(np.arange(count), fanout)):
        violations.append(f"layer {layer}: parent links are not contiguous")

    shape = (count, BRANCHING, parts)
    a_lo = child.angle_lo.reshape(shape)
    a_hi = child.angle_hi.reshape(shape)
    d_lo = child.d_lo.reshape(shape)
    d_hi = child.d_hi.reshape(shape)

    checks = {
        # nesting: children stay inside the parent
        "angle below parent": a_lo < parent.angle_lo[:, None, None],
        "angle above parent": a_hi > parent.angle_hi[:, None, None],
        "distance below parent": d_lo < parent.d_lo[:, None, None],
        "distance above parent": d_hi > parent.d_hi[:, None, None],
        # coverage: children tile the parent without gaps
        "empty angle cell": ~(a_lo < a_hi),
        "empty distance cell": ~(d_lo < d_hi),
        "angle start": a_lo[:, 0, :] != parent.angle_lo[:, None],
        "angle end": a_hi[:, -1, :] != parent.angle_hi[:, None],
        "angle gap": a_hi[:, :-1, :] != a_lo[:, 1:, :],
        "distance start": d_lo[:, :, 0] != parent.d_lo[:, None],
        "distance end": d_hi[:, :, -1] != parent.d_hi[:, None],
        "distance gap": d_hi[:, :, :-1] != d_lo[:, :, 1:],
        "ragged angle cells": (a_lo != a_lo[:, :, :1]) | (a_hi != a_hi[:, :, :1]),
    }
    for name, bad in checks.items():
        n_bad = int(np.count_nonzero(bad))
        if n_bad:
            violations.append(f"layer {layer}: {name} in {n_bad} regions")
    return violations


def check_criteria(codebook: HierarchicalCodebook) -> List[str]:
    """
    Verify coverage and nesting layer by layer with exact interval comparisons.

    Layer 1 must tile the full polar domain, and each later layer must tile
    every region of the layer above with that region's children. Together these
    give per-layer coverage of the whole domain and parent ⊇ ∪ children.

    Returns:
        Human-readable violations; empty when both criteria hold
    """
    parent = root_regions(codebook.domain)
    violations: List[str] = []
    previous_active = 0
    for layer in range(1, codebook.total_layers + 1):
        child = codebook.regions(layer)
        parts = codebook.distance_branches if codebook.is_stage2(layer) else 1
        violations += _tiling_violations(parent, child, codebook.fanout(layer), parts, layer)
        active = codebook.active_count(layer)
        if active < previous_active:
            violations.append(f"layer {layer}: active count shrinks to {active}")
        previous_active = active
        parent = child
    if codebook.total_layers and previous_active != codebook.geometry.element_count:
        violations.append(
            f"last layer activates {previous_active} of {codebook.geometry.element_count} elements"
        )
    return violations


def angle_cells(count: int) -> np.ndarray:
    """``count`` + 1 breakpoints of [−π/2, π/2) uniform in sin θ."""
    return split_angles(np.array([ANGLE_MIN]), np.array([ANGLE_MAX]), count)[0]


def distance_cells(count: int, d_min: float, d_max: float) -> np.ndarray:
    """``count`` + 1 breakpoints of [d_min, d_max) uniform in 1/d."""
    return split_distances(np.array([d_min]), np.array([d_max]), count)[0]


def angular_sweep_codebook(
    geometry: RisGeometry,
    wavelength: float,
    angles: int,
    d_min: float,
    d_max: float,
) -> List[Codeword]:
    """Full-array beamsteering codewords, one per sin-uniform angle cell."""
    edges = angle_cells(angles)
    codewords = []
    for i in range(angles):
        region = PolarRegion(float(edges[i]), float(edges[i + 1]), d_min, d_max)
        cw = angular_codeword(geometry, None, region.center_angle, wavelength, region=region)
        codewords.append(Codeword(cw.profile, region, cw.active_mask, index=i))
    return codewords


def polar_column(
    geometry: RisGeometry,
    wavelength: float,
    angle_lo: float,
    angle_hi: float,
    distances: int,
    d_min: float,
    d_max: float,
    first_index: int = 0,
) -> List[Codeword]:
    """Full-array beamfocusing codewords for one angle cell and every 1/d-uniform distance cell."""
    edges = distance_cells(distances, d_min, d_max)
    codewords = []
    for j in range(distances):
        region = PolarRegion(angle_lo, angle_hi, float(edges[j]), float(edges[j + 1]))
        cw = polar_codeword(
            geometry, None, region.center_angle, region.center_distance, wavelength, region=region
        )
        codewords.append(Codeword(cw.profile, region, cw.active_mask, index=first_index + j))
    return codewords


def flat_polar_codebook(
    geometry: RisGeometry,
    wavelength: float,
    angles: int,
    distances: int,
    d_min: float,
    d_max: float,
) -> List[Codeword]:
    """``angles × distances`` full-array focusing codewords; codeword a·S + s covers cell (a, s)."""
    edges = angle_cells(angles)
    codewords: List[Codeword] = []
    for i in range(angles):
        codewords += polar_column(
            geometry,
            wavelength,
            float(edges[i]),
            float(edges[i + 1]),
            distances,
            d_min,
            d_max,
            first_index=i * distances,
        )
    return codewords


def sub_array_aperture(codebook: HierarchicalCodebook, layer: int) -> float:
    """Dynamic aperture of the sub-array active at ``layer``."""
    return aperture_of_mask(codebook.geometry, codebook.active_mask(layer))
