"""
Near-field versus far-field beamforming for multiple users.

For each array size the far-field design optimizes the profile on planar-
wavefront channels and is scored on the true spherical-wavefront channels.
The near-field design optimizes on the true channels from several starts (the
far-field profile, the previous size's near-field profile embedded into the
larger array, the identity and per-user co-phasing) and keeps the best. The
embedded start makes the near-field rate nondecreasing over nested arrays.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from src.beamforming.elementwise import (
    DEFAULT_MAX_SWEEPS,
    DEFAULT_PHASE_GRID,
    DEFAULT_TOL,
    MultiUserLinks,
    SweepTrace,
    elementwise_sumrate,
    multiuser_links,
    weighted_sum_rate,
)
from src.channel.geometry import (
    FieldRegion,
    RisGeometry,
    Vec3,
    build_planar_array,
    check_wavelength,
    classify_region,
)
from src.channel.links import ProfileMode, RisProfile, get_pathloss_model
from src.exceptions import DomainError
from src.parallel import parallel_map

logger = logging.getLogger(__name__)

EMBED_TOL = 1e-9  # position match, relative to the element spacing


@dataclass
class RateExperiment:
    """Users, their transmitters and solver settings for a near-vs-far sweep."""

    wavelength: float
    spacing: float
    sizes: Sequence[int]
    users: Sequence[Vec3]
    transmitters: Sequence[Vec3]
    weights: Optional[Sequence[float]] = None
    noise: float = 1e-12
    power: float = 1.0
    phase_grid: int = DEFAULT_PHASE_GRID
    star: bool = False
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    tol: float = DEFAULT_TOL
    pathloss: str = "free_space"
    center: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 0.0))
    normal: Vec3 = field(default_factory=lambda: Vec3(0.0, 0.0, 1.0))
    init_seed: Optional[int] = None

    def __post_init__(self) -> None:
        check_wavelength(self.wavelength)
        if len(self.users) < 1:
            raise DomainError("at least one user is required")
        if len(self.transmitters) != len(self.users):
            raise DomainError("each user needs its own transmitter")
        if self.weights is None:
            self.weights = [1.0] * len(self.users)
        for n in self.sizes:
            side = math.isqrt(int(n))
            if side * side != int(n):
                raise DomainError(f"array sizes must be perfect squares, got {n}")

    def solver_settings(self) -> Dict[str, Any]:
        return dict(
            weights=self.weights,
            noise=self.noise,
            phase_grid=self.phase_grid,
            star=self.star,
            max_sweeps=self.max_sweeps,
            tol=self.tol,
            power=self.power,
        )

    def rate(self, links: MultiUserLinks, profile: RisProfile) -> float:
        return weighted_sum_rate(links, profile, self.weights, self.noise, self.power)


@dataclass
class FarDesign:
    """One array size with its far-field design scored on the true channels."""

    n_elements: int
    ris: RisGeometry
    near_links: MultiUserLinks
    profile: RisProfile
    trace: SweepTrace
    rate: float


def embed_profile(
    profile: RisProfile, small: RisGeometry, large: RisGeometry
) -> Optional[RisProfile]:
    """
    Carry ``profile`` of ``small`` onto the co-located elements of ``large``.

    Elements of ``large`` with no counterpart are switched off (STAR amplitudes
    0), so the embedded profile yields exactly the same effective channels.
    Returns None when some element of ``small`` has no co-located element.
    """
    if profile.element_count != small.element_count:
        raise DomainError(
            f"profile has {profile.element_count} elements, array has {small.element_count}"
        )
    distances = cdist(small.positions, large.positions)
    nearest = distances.argmin(axis=1)
    matched = distances[np.arange(small.element_count), nearest] <= EMBED_TOL * large.spacing
    if not matched.all() or np.unique(nearest).size != nearest.size:
        return None
    n = large.element_count
    if profile.mode is ProfileMode.STAR:
        amp_t, amp_r, phase_t, phase_r = (np.zeros(n) for _ in range(4))
        amp_t[nearest] = profile.amp_t
        amp_r[nearest] = profile.amp_r
        phase_t[nearest] = profile.phase_t
        phase_r[nearest] = profile.phase_r
        return RisProfile.star(amp_t, amp_r, phase_t, phase_r)
    theta = np.zeros(n, dtype=complex)
    theta[nearest] = profile.theta
    return RisProfile.reflect(theta)


def cophasing_starts(links: MultiUserLinks) -> List[Tuple[str, RisProfile]]:
    """One profile co-phasing each user's direct cascade, plus their superposition."""
    direct = np.stack([links.gains[k, k, :] for k in range(links.users)])
    starts = [
        (f"cophase_{k}", RisProfile.from_phases(-np.angle(direct[k]))) for k in range(links.users)
    ]
    if links.users > 1:
        aligned = np.exp(-1j * np.angle(direct)).sum(axis=0)
        starts.append(("superposition", RisProfile.from_phases(np.angle(aligned))))
    return starts


def _far_design(experiment: RateExperiment, n: int) -> FarDesign:
    side = math.isqrt(n)
    ris = build_planar_array(side, side, experiment.spacing, experiment.center, experiment.normal)
    pathloss = get_pathloss_model(experiment.pathloss)
    near = multiuser_links(
        ris, experiment.transmitters, experiment.users, experiment.wavelength, pathloss
    )
    far = multiuser_links(
        ris, experiment.transmitters, experiment.users, experiment.wavelength, pathloss, far_field=True
    )
    init = None
    if experiment.init_seed is not None:
        rng = np.random.default_rng([experiment.init_seed, n])
        init = RisProfile.from_phases(rng.uniform(0.0, 2.0 * math.pi, n))
    profile, trace = elementwise_sumrate(far, init=init, **experiment.solver_settings())
    return FarDesign(n, ris, near, profile, trace, experiment.rate(near, profile))


def _near_design(
    experiment: RateExperiment,
    design: FarDesign,
    embedded: Optional[RisProfile],
) -> Tuple[str, RisProfile, SweepTrace, float]:
    starts: List[Tuple[str, Optional[RisProfile]]] = [("far", design.profile)]
    if embedded is not None:
        starts.append(("embedded", embedded))
    starts.append(("identity", None))
    starts.extend(cophasing_starts(design.near_links))

    results = []
    for name, init in starts:
        profile, trace = elementwise_sumrate(
            design.near_links, init=init, **experiment.solver_settings()
        )
        rate = experiment.rate(design.near_links, profile)
        logger.debug(f"  N = {design.n_elements}: near-field start {name} reaches {rate:.4f}")
        results.append((name, profile, trace, rate))
    # max keeps the first of equal rates
    return max(results, key=lambda result: result[3])


def rate_experiment_details(
    experiment: RateExperiment,
) -> Tuple[pd.DataFrame, Dict[int, Tuple[RisProfile, SweepTrace]]]:
    """
    Run every size in increasing order and keep the near-field profile and
    sweep trace of each.

    Far-field designs are independent and fan out over threads; near-field
    designs run in order because each size starts from the previous optimum.

    Returns:
        Tuple of (comparison table, {N: (near-field profile, near-field trace)})
    """
    sizes = sorted({int(n) for n in experiment.sizes})
    logger.info(f"Near-vs-far rate experiment over N = {sizes} with {len(experiment.users)} users")
    far_designs = parallel_map(lambda n: _far_design(experiment, n), sizes)

    rows = []
    details: Dict[int, Tuple[RisProfile, SweepTrace]] = {}
    previous: Optional[Tuple[RisGeometry, RisProfile]] = None
    for design in far_designs:
        embedded = None
        if previous is not None:
            embedded = embed_profile(previous[1], previous[0], design.ris)
            if embedded is None:
                logger.debug(f"  N = {design.n_elements}: previous array does not embed, no warm start")
        start, near_profile, near_trace, near_rate = _near_design(experiment, design, embedded)
        users_near = sum(
            classify_region(design.ris, u, experiment.wavelength) is FieldRegion.NEAR_FIELD
            for u in experiment.users
        )
        rows.append(
            {
                "n_elements": design.n_elements,
                "near_rate": near_rate,
                "far_rate": design.rate,
                "gap": near_rate - design.rate,
                "relative_gap": (near_rate - design.rate) / near_rate if near_rate > 0 else 0.0,
                "users_in_near_field": users_near,
                "near_sweeps": near_trace.sweeps,
                "far_sweeps": design.trace.sweeps,
                "near_start": start,
            }
        )
        details[design.n_elements] = (near_profile, near_trace)
        previous = (design.ris, near_profile)

    df = pd.DataFrame(rows)
    gaps = df["gap"].to_numpy()
    monotone = bool(np.all(np.diff(gaps) >= 0)) if gaps.size > 1 else True
    df["gap_nondecreasing"] = monotone
    for _, row in df.iterrows():
        logger.info(
            f"  N = {int(row['n_elements'])}: near {row['near_rate']:.4f} ({row['near_start']}), "
            f"far {row['far_rate']:.4f}, gap {row['gap']:.4f} bit/s/Hz"
        )
    if not monotone:
        logger.warning("Rate gap is not monotone in N for this placement")
    return df, details


def near_vs_far_rate_experiment(experiment: RateExperiment) -> pd.DataFrame:
    """
    Weighted sum rate of near-field and far-field designs for every array size.

    Returns:
        One row per size in increasing N with both rates, their gap, the
        winning near-field start and a ``gap_nondecreasing`` column that is
        True when the gap never shrinks as N grows
    """
    df, _ = rate_experiment_details(experiment)
    return df
