"""
Power scaling of co-phased RIS channels.

Sweeps the RIS size for a fixed Tx/Rx placement and records P_r/P_t under the
free-space cascaded model, for patch arrays (discrete elements) and for
metasurfaces (continuous apertures discretized by quadrature). The log-log
slope over the largest decade separates the far-field N² law from the
near-field linear law.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.channel.geometry import (
    FieldRegion,
    RisGeometry,
    Vec3,
    build_planar_array,
    classify_region,
    polar_point,
    rayleigh_distance,
    region_for_distance,
    single_antenna,
)
from src.channel.links import (
    CascadedLinkSet,
    RisProfile,
    cascaded_links,
    end_to_end,
    get_pathloss_model,
)
from src.channel.metasurface import (
    DEFAULT_SAMPLES_PER_WAVELENGTH,
    CurrentDistribution,
    TxParams,
    build_operator,
    build_surface_grid,
    channel_gain,
    element_partition,
    optimal_patch_phases,
    patch_emulation,
    surface_grid_for_array,
)
from src.exceptions import DomainError
from src.parallel import parallel_map

logger = logging.getLogger(__name__)


class RisKind(Enum):
    PATCH = "patch"
    METASURFACE = "metasurface"


@dataclass(frozen=True)
class ScalingPoint:
    size_metric: float
    pr_over_pt: float
    regime: FieldRegion
    outside_validity: bool = False


@dataclass(frozen=True)
class ScalingSetup:
    """
    Fixed placement for a power-scaling sweep.

    Patch sizes are elements per side (the array is ``n × n`` at ``spacing``);
    metasurface sizes are aperture areas in m² of a square surface. ``spacing``
    also sets the element area used to calibrate metasurface power against a
    single patch element.
    """

    wavelength: float
    spacing: float
    tx: Vec3
    rx: Vec3
    center: Vec3 = Vec3(0.0, 0.0, 0.0)
    normal: Vec3 = Vec3(0.0, 0.0, 1.0)
    pathloss: str = "free_space"
    samples_per_wavelength: int = DEFAULT_SAMPLES_PER_WAVELENGTH

    @property
    def element_area(self) -> float:
        return self.spacing**2


def cophase_profile(links: CascadedLinkSet, rx_index: int = 0, tx_index: int = 0) -> RisProfile:
    """θ_m = exp(−j·arg gains[i, j, m]), so |H[i, j]| = Σ_m |gains[i, j, m]|."""
    return RisProfile.from_phases(-np.angle(links.pair(rx_index, tx_index)))


def _region(geometry: RisGeometry, setup: ScalingSetup) -> FieldRegion:
    near = any(
        classify_region(geometry, p, setup.wavelength) is FieldRegion.NEAR_FIELD
        for p in (setup.tx, setup.rx)
    )
    return FieldRegion.NEAR_FIELD if near else FieldRegion.FAR_FIELD


def _patch_point(setup: ScalingSetup, per_side: int) -> ScalingPoint:
    ris = build_planar_array(per_side, per_side, setup.spacing, setup.center, setup.normal)
    links = cascaded_links(
        single_antenna(setup.tx),
        ris,
        single_antenna(setup.rx),
        setup.wavelength,
        get_pathloss_model(setup.pathloss),
    )
    H = end_to_end(links, cophase_profile(links))
    return ScalingPoint(
        size_metric=float(per_side * per_side),
        pr_over_pt=float(H.power[0, 0]),
        regime=_region(ris, setup),
        outside_validity=H.outside_validity,
    )


def metasurface_power_ratio(gain: float, wavelength: float, tx: TxParams, element_area: float) -> float:
    """
    Convert a metasurface gain |h(J)|² to P_r/P_t on the patch scale.

    Multiplies by λ⁴/(4π·G·A_T·A_e²) so that a surface of one element area
    reproduces the free-space cascaded power of one patch element.
    """
    return gain * wavelength**4 / (4.0 * math.pi * tx.directivity * tx.effective_area * element_area**2)


def _metasurface_point(setup: ScalingSetup, area: float) -> ScalingPoint:
    side = math.sqrt(area)
    grid = build_surface_grid(
        side, side, setup.wavelength, setup.center, setup.normal, setup.samples_per_wavelength
    )
    tx = TxParams(directivity=1.0, effective_area=1.0, distance=setup.center.distance_to(setup.tx))
    current = CurrentDistribution.cophased(grid, setup.rx, setup.wavelength)
    gain = channel_gain(grid, current, tx, setup.rx, setup.wavelength)
    ratio = metasurface_power_ratio(gain, setup.wavelength, tx, setup.element_area)

    nearest = min(setup.center.distance_to(setup.tx), setup.center.distance_to(setup.rx))
    regime = region_for_distance(nearest, side * math.sqrt(2.0), setup.wavelength)
    outside = ratio > 1.0
    if outside:
        logger.warning(f"Metasurface area {area:.4g} m^2 gives P_r/P_t = {ratio:.4g} > 1")
    return ScalingPoint(
        size_metric=float(area),
        pr_over_pt=float(ratio),
        regime=regime,
        outside_validity=outside,
    )


def power_scaling_sweep(
    setup: ScalingSetup, sizes: Sequence[float], kind: RisKind
) -> List[ScalingPoint]:
    """
    Co-phased P_r/P_t for each RIS size.

    Args:
        setup: Fixed wavelength, spacing and Tx/Rx placement
        sizes: Strictly increasing elements-per-side (patch) or areas in m² (metasurface)
        kind: Patch array or metasurface

    Returns:
        One ScalingPoint per size; size_metric is the element count for patches
    """
    sizes = list(sizes)
    if not sizes:
        raise DomainError("sizes must not be empty")
    if any(s <= 0 for s in sizes):
        raise DomainError("sizes must be positive")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise DomainError("sizes must be strictly increasing")

    logger.info(f"Power-scaling sweep: {kind.value}, {len(sizes)} sizes")
    if kind is RisKind.PATCH:
        points = parallel_map(lambda n: _patch_point(setup, int(n)), sizes)
    else:
        points = parallel_map(lambda a: _metasurface_point(setup, float(a)), sizes)

    flagged = sum(p.outside_validity for p in points)
    if flagged:
        logger.warning(f"{flagged} of {len(points)} sweep points fall outside the model validity range")
    return points


def fit_slope(size_metric: Sequence[float], values: Sequence[float], top_decade: bool = True) -> float:
    """
    OLS slope of log(values) against log(size_metric).

    With ``top_decade`` only points within a factor 10 of the largest size are
    fitted, falling back to all points when fewer than two qualify.
    """
    x = np.asarray(size_metric, dtype=float)
    y = np.asarray(values, dtype=float)
    if x.size < 2:
        raise DomainError("slope fit needs at least two points")
    if (x <= 0).any() or (y <= 0).any():
        raise DomainError("slope fit needs positive sizes and values")
    if top_decade:
        keep = x >= x.max() / 10.0
        if keep.sum() >= 2:
            x, y = x[keep], y[keep]
    slope, _ = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope)


def sweep_slope(points: Sequence[ScalingPoint], top_decade: bool = True) -> float:
    return fit_slope([p.size_metric for p in points], [p.pr_over_pt for p in points], top_decade)


def points_to_frame(points: Sequence[ScalingPoint]) -> pd.DataFrame:
    return pd.DataFrame(
        {
            "size_metric": [p.size_metric for p in points],
            "pr_over_pt": [p.pr_over_pt for p in points],
            "regime": [p.regime.value for p in points],
            "outside_validity": [p.outside_validity for p in points],
        }
    )


def sample_near_field_points(
    geometry: RisGeometry, wavelength: float, count: int, seed: int
) -> List[Vec3]:
    """
    Random receiver placements inside the array's near field.

    Angles are uniform within ±60° of broadside; distances are uniform between
    max(5λ, D/4) and half the Rayleigh distance.
    """
    rng = np.random.default_rng(seed)
    aperture = geometry.aperture_diagonal
    d_lo = max(5.0 * wavelength, aperture / 4.0)
    d_hi = rayleigh_distance(aperture, wavelength) / 2.0
    if not d_hi > d_lo:
        raise DomainError(
            f"array of aperture {aperture:.4g} m has no near-field band beyond {d_lo:.4g} m"
        )
    angles = rng.uniform(-math.pi / 3.0, math.pi / 3.0, count)
    distances = rng.uniform(d_lo, d_hi, count)
    return [polar_point(geometry, a, d) for a, d in zip(angles, distances)]


def compare_patch_metasurface(
    geometry: RisGeometry,
    wavelength: float,
    receivers: Sequence[Vec3],
    tx: Optional[TxParams] = None,
    samples_per_wavelength: int = DEFAULT_SAMPLES_PER_WAVELENGTH,
) -> pd.DataFrame:
    """
    Optimal per-sample versus optimal per-element gain over the same aperture.

    The metasurface co-phases every quadrature cell; the patch array co-phases
    the cell sums of each element. Feasible-set nesting makes ``metasurface_gain``
    at least ``patch_gain`` for every receiver.
    """
    tx = tx or TxParams(directivity=1.0, effective_area=1.0, distance=1.0)
    grid = surface_grid_for_array(geometry, wavelength, samples_per_wavelength)
    partition = element_partition(grid, geometry)

    def compare(rx: Vec3):
        operator = build_operator(grid, [rx], wavelength)
        phases = optimal_patch_phases(grid, partition, rx, wavelength, operator)
        patch = channel_gain(grid, patch_emulation(grid, partition, phases), tx, rx, wavelength)
        full = CurrentDistribution(np.exp(-1j * np.angle(operator.matrix[0])))
        surface = channel_gain(grid, full, tx, rx, wavelength)
        return rx.x, rx.y, rx.z, patch, surface

    rows = parallel_map(compare, receivers)
    df = pd.DataFrame(rows, columns=["rx_x", "rx_y", "rx_z", "patch_gain", "metasurface_gain"])
    df["gain_ratio"] = df["metasurface_gain"] / df["patch_gain"]
    logger.info(
        f"Metasurface/patch gain ratio over {len(df)} receivers: "
        f"min {df['gain_ratio'].min():.4f}, mean {df['gain_ratio'].mean():.4f}"
    )
    return df
