"""
Effective degrees of freedom (EDoF) of RIS channels.

Singular spectra of end-to-end matrices and radiation operators, the
entropy-based effective rank, thresholded counts, the rectangular-prism bound
and the S/r² scaling of metasurface EDoF.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.linalg import svdvals

from src.analysis.power_scaling import RisKind, ScalingSetup, power_scaling_sweep, sweep_slope
from src.channel.geometry import (
    FieldRegion,
    RisGeometry,
    Vec3,
    build_planar_array,
    check_wavelength,
    classify_region,
    polar_point,
    rayleigh_distance,
)
from src.channel.links import ChannelMatrix, link_matrix
from src.channel.metasurface import build_operator, build_surface_grid
from src.exceptions import DomainError
from src.parallel import parallel_map

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.01
OPERATOR_THRESHOLD = 0.5
OPERATOR_SAMPLES_PER_WAVELENGTH = 2


@dataclass(frozen=True)
class EffectiveRank:
    """exp of the Shannon entropy of the normalized singular values."""


@dataclass(frozen=True)
class ThresholdCount:
    """Number of singular values at or above ``tau`` times the largest."""

    tau: float = DEFAULT_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 < self.tau <= 1.0:
            raise DomainError(f"threshold must lie in (0, 1], got {self.tau}")


EdofMethod = Union[EffectiveRank, ThresholdCount]


@dataclass(frozen=True, eq=False)
class EdofReport:
    singular_values: np.ndarray
    effective_rank: float
    threshold_count: int
    tau: float = DEFAULT_THRESHOLD
    value: float = 0.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sigma_index": np.arange(1, self.singular_values.size + 1),
                "sigma_value": self.singular_values,
            }
        )


def _clean_spectrum(sigma: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    sigma = np.sort(np.asarray(sigma, dtype=float))[::-1]
    if sigma.size == 0 or not sigma[0] > 0:
        raise DomainError("channel matrix is all zero")
    floor = sigma[0] * max(shape) * np.finfo(float).eps
    return np.where(sigma > floor, sigma, 0.0)


def report_from_spectrum(
    sigma: np.ndarray,
    shape: Tuple[int, int],
    method: Optional[EdofMethod] = None,
) -> EdofReport:
    """Build an EdofReport from raw singular values of a matrix of ``shape``."""
    method = method or EffectiveRank()
    tau = method.tau if isinstance(method, ThresholdCount) else DEFAULT_THRESHOLD
    sigma = _clean_spectrum(sigma, shape)

    p = sigma[sigma > 0] / sigma.sum()
    entropy = float(-(p * np.log(p)).sum())
    effective_rank = max(1.0, min(math.exp(entropy), float(np.count_nonzero(sigma))))
    count = int(np.count_nonzero(sigma >= tau * sigma[0]))

    return EdofReport(
        singular_values=sigma,
        effective_rank=effective_rank,
        threshold_count=count,
        tau=tau,
        value=float(count) if isinstance(method, ThresholdCount) else effective_rank,
    )


def effective_dof(
    H: Union[ChannelMatrix, np.ndarray], method: Optional[EdofMethod] = None
) -> EdofReport:
    """
    Singular-value EDoF of a channel matrix.

    Args:
        H: Channel matrix (any shape)
        method: EffectiveRank (default) or ThresholdCount(tau); both metrics are
            always filled in, ``value`` holds the requested one

    Returns:
        EdofReport with descending singular values
    """
    matrix = H.H if isinstance(H, ChannelMatrix) else np.asarray(H)
    if matrix.ndim != 2:
        raise DomainError(f"channel matrix must be 2-D, got shape {matrix.shape}")
    if not np.any(matrix):
        raise DomainError("channel matrix is all zero")
    return report_from_spectrum(svdvals(matrix), matrix.shape, method)


def max_edof_prisms(
    volume_rx: float,
    volume_tx: float,
    wavelength: float,
    distance: float,
    depth_tx: float,
    depth_rx: float,
) -> float:
    """Maximum EDoF between two rectangular prisms, V_R V_T / (4 (λ r)² Δz_T Δz_R)."""
    args = {
        "volume_rx": volume_rx,
        "volume_tx": volume_tx,
        "wavelength": wavelength,
        "distance": distance,
        "depth_tx": depth_tx,
        "depth_rx": depth_rx,
    }
    for name, value in args.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")
    return volume_rx * volume_tx / (4.0 * (wavelength * distance) ** 2 * depth_tx * depth_rx)


def end_to_end_edof_bound(
    tx: RisGeometry,
    ris: RisGeometry,
    rx: RisGeometry,
    wavelength: float,
    method: Optional[EdofMethod] = None,
) -> Dict[str, float]:
    """
    EDoF of the Tx→RIS and RIS→Rx hops; the end-to-end EDoF cannot exceed their minimum.
    """
    tx_hop = effective_dof(link_matrix(ris, tx, wavelength), method).value
    rx_hop = effective_dof(link_matrix(ris, rx, wavelength), method).value
    return {"tx_ris": tx_hop, "ris_rx": rx_hop, "bound": min(tx_hop, rx_hop)}


def receiver_array(
    ris: RisGeometry,
    antennas: int,
    spacing: float,
    angle: float,
    distance: float,
) -> RisGeometry:
    """Linear receive array parallel to the RIS u axis, centered at (angle, distance)."""
    center = polar_point(ris, angle, distance)
    return build_planar_array(1, antennas, spacing, center, ris.normal)


def edof_vs_distance(
    ris: RisGeometry,
    wavelength: float,
    distances: Sequence[float],
    antennas: int = 4,
    rx_spacing: Optional[float] = None,
    angle: float = 0.0,
    method: Optional[EdofMethod] = None,
) -> List[Tuple[float, FieldRegion, EdofReport]]:
    """EDoF of the RIS→Rx LoS MIMO channel for a receive array moved along one ray."""
    wavelength = check_wavelength(wavelength)
    rx_spacing = rx_spacing or wavelength / 2.0

    def evaluate(distance: float):
        rx = receiver_array(ris, antennas, rx_spacing, angle, distance)
        report = effective_dof(link_matrix(ris, rx, wavelength), method)
        return distance, classify_region(ris, rx.center, wavelength), report

    results = parallel_map(evaluate, distances)
    for distance, region, report in results:
        logger.info(
            f"  r = {distance:.4g} m ({region.value}): effective rank "
            f"{report.effective_rank:.4f}, count {report.threshold_count}"
        )
    return results


@dataclass(frozen=True)
class ReceiverPatch:
    """Square receive aperture sampled on a regular grid, parallel to the metasurface."""

    side: float
    spacing: float

    def __post_init__(self) -> None:
        if not (self.side > 0 and self.spacing > 0):
            raise DomainError("receiver patch side and spacing must be positive")

    @property
    def samples_per_side(self) -> int:
        return max(1, int(round(self.side / self.spacing)))

    def samples(self, distance: float) -> List[Vec3]:
        n = self.samples_per_side
        patch = build_planar_array(n, n, self.spacing, Vec3(0.0, 0.0, distance))
        return patch.element_positions


@dataclass(frozen=True, eq=False)
class EdofScaling:
    """Fitted exponents of metasurface EDoF against aperture area and distance."""

    aperture_exponent: float
    distance_exponent: float
    aperture_degenerate: bool
    distance_degenerate: bool
    points: pd.DataFrame


def metasurface_operator_edof(
    area: float,
    distance: float,
    rx_patch: ReceiverPatch,
    wavelength: float,
    tau: float = OPERATOR_THRESHOLD,
    samples_per_wavelength: int = OPERATOR_SAMPLES_PER_WAVELENGTH,
) -> int:
    """ThresholdCount EDoF of the operator from a square surface of ``area`` to a parallel patch."""
    side = math.sqrt(area)
    grid = build_surface_grid(side, side, wavelength, samples_per_wavelength=samples_per_wavelength)
    operator = build_operator(grid, rx_patch.samples(distance), wavelength)
    report = report_from_spectrum(operator.singular_values(), operator.shape, ThresholdCount(tau))
    return report.threshold_count


def _fit_exponent(x: Sequence[float], counts: Sequence[int], label: str) -> Tuple[float, bool]:
    counts = np.asarray(counts, dtype=float)
    if np.all(counts == counts[0]):
        logger.warning(f"EDoF is constant ({int(counts[0])}) across the {label} sweep")
        return 0.0, True
    slope, _ = np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(counts), 1)
    return float(slope), False


def metasurface_edof_scaling(
    apertures: Sequence[float],
    distances: Sequence[float],
    rx_patch: ReceiverPatch,
    wavelength: float,
    tau: float = OPERATOR_THRESHOLD,
    samples_per_wavelength: int = OPERATOR_SAMPLES_PER_WAVELENGTH,
    reference_distance: Optional[float] = None,
    reference_aperture: Optional[float] = None,
) -> EdofScaling:
    """
    Fit EDoF ∝ S^a r^b for parallel square apertures.

    The aperture sweep runs at ``reference_distance`` (first distance by default)
    and the distance sweep at ``reference_aperture`` (largest aperture by default).
    The default ``tau`` of 0.5 counts singular values above the half-power knee
    of the operator spectrum. The link-level ``tau`` of 0.01 does not work here:
    the spectrum of two finite apertures falls off gradually past the knee, and
    at 2 samples per λ the sampled tail stays above 1% of σ₁ until the count
    reaches the number of grid samples. That count grows with S but not with
    1/r², so the distance exponent comes out near zero. The half-power count
    follows the knee, which sits near S·A_R/(λr)².

    Returns:
        EdofScaling with both exponents and the per-point counts
    """
    wavelength = check_wavelength(wavelength)
    apertures = [float(a) for a in apertures]
    distances = [float(d) for d in distances]
    if len(apertures) < 2 or len(distances) < 2:
        raise DomainError("scaling fits need at least two apertures and two distances")
    reference_distance = reference_distance or distances[0]
    reference_aperture = reference_aperture or apertures[-1]

    jobs = [("aperture", a, reference_distance) for a in apertures]
    jobs += [("distance", reference_aperture, d) for d in distances]

    def run(job):
        sweep, area, distance = job
        count = metasurface_operator_edof(
            area, distance, rx_patch, wavelength, tau, samples_per_wavelength
        )
        return sweep, area, distance, count

    logger.info(f"Metasurface EDoF scaling over {len(jobs)} operators (tau = {tau})")
    points = pd.DataFrame(parallel_map(run, jobs), columns=["sweep", "area", "distance", "edof"])
    by_area = points[points["sweep"] == "aperture"]
    by_distance = points[points["sweep"] == "distance"]
    a_exp, a_flat = _fit_exponent(by_area["area"], by_area["edof"], "aperture")
    d_exp, d_flat = _fit_exponent(by_distance["distance"], by_distance["edof"], "distance")
    logger.info(f"  EDoF ~ S^{a_exp:.3f} r^{d_exp:.3f}")
    return EdofScaling(
        aperture_exponent=a_exp,
        distance_exponent=d_exp,
        aperture_degenerate=a_flat,
        distance_degenerate=d_flat,
        points=points,
    )


def regime_summary(
    placements: Dict[str, ScalingSetup],
    sizes: Sequence[int],
    antennas: int = 4,
) -> pd.DataFrame:
    """
    Side-by-side power-scaling slope and effective rank for several placements.

    For each named placement the patch sweep gives the top-decade slope, and the
    largest array with an ``antennas``-element λ/2 receive array at the
    placement's receiver gives the effective rank.
    """
    rows = []
    for name, setup in placements.items():
        points = power_scaling_sweep(setup, sizes, RisKind.PATCH)
        n = int(sizes[-1])
        ris = build_planar_array(n, n, setup.spacing, setup.center, setup.normal)
        rx = build_planar_array(1, antennas, setup.wavelength / 2.0, setup.rx, setup.normal)
        report = effective_dof(link_matrix(ris, rx, setup.wavelength))
        rows.append(
            {
                "placement": name,
                "regime": points[-1].regime.value,
                "rayleigh_distance": rayleigh_distance(ris.aperture_diagonal, setup.wavelength),
                "rx_distance": ris.center.distance_to(setup.rx),
                "slope": sweep_slope(points),
                "effective_rank": report.effective_rank,
            }
        )
    return pd.DataFrame(rows)
