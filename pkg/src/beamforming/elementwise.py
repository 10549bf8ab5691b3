"""
Element-wise (coordinate-descent) RIS beamforming.

Each update re-optimizes one coefficient with all others held fixed, in
ascending element order. The running sums Σ θ_k g_k are updated in place, so a
sweep costs O(N) objective evaluations.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from src.channel.geometry import RisGeometry, Vec3, single_antenna
from src.channel.links import (
    CascadedLinkSet,
    PathlossModel,
    ProfileMode,
    RisProfile,
    cascaded_links,
    farfield_links,
)
from src.exceptions import DimensionMismatchError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_PHASE_GRID = 64
DEFAULT_MAX_SWEEPS = 50
DEFAULT_TOL = 1e-6
STAR_AMPLITUDE_STEPS = 17


@dataclass
class SweepTrace:
    """Objective after every element update plus sweep bookkeeping."""

    objective_values: List[float] = field(default_factory=list)
    elements: List[int] = field(default_factory=list)
    sweep_index: List[int] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = False
    evaluations: int = 0
    evaluations_per_sweep: List[int] = field(default_factory=list)

    def record(self, sweep: int, element: int, value: float) -> None:
        self.sweep_index.append(sweep)
        self.elements.append(element)
        self.objective_values.append(value)

    @property
    def final(self) -> float:
        return self.objective_values[-1] if self.objective_values else math.nan

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "sweep": self.sweep_index,
                "element": self.elements,
                "objective": self.objective_values,
            }
        )


def _converged(previous: float, current: float, tol: float) -> bool:
    if previous <= 0.0:
        return current <= 0.0
    return (current - previous) / previous < tol


def elementwise_power(
    gains,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    tol: float = DEFAULT_TOL,
    init: Optional[RisProfile] = None,
):
    """
    Maximize single-user received power |Σ θ_m g_m|² one element at a time.

    The update of element m is closed form: with residual r = Σ_{k≠m} θ_k g_k,
    φ_m = arg(r) − arg(g_m), or −arg(g_m) when r = 0.

    Args:
        gains: Single-user link set (first rx/tx pair is used) or gains of shape (M,)
        max_sweeps: Sweep budget
        tol: Stop when a sweep improves the objective by less than this relative amount
        init: Starting unit-modulus profile (all ones by default)

    Returns:
        Tuple of (RisProfile, SweepTrace)
    """
    g = gains.pair() if isinstance(gains, CascadedLinkSet) else np.asarray(gains, dtype=complex).ravel()
    theta = np.ones(g.size, dtype=complex) if init is None else init.coefficients().astype(complex)
    if theta.size != g.size:
        raise DimensionMismatchError(f"init profile has {theta.size} elements, links have {g.size}")
    if max_sweeps < 1:
        raise DomainError(f"max_sweeps must be >= 1, got {max_sweeps}")

    total = complex(theta @ g)
    trace = SweepTrace()
    previous = abs(total) ** 2
    for sweep in range(1, max_sweeps + 1):
        for m in range(g.size):
            residual = total - theta[m] * g[m]
            if g[m] != 0:
                if residual == 0:
                    theta[m] = np.exp(-1j * np.angle(g[m]))
                else:
                    theta[m] = np.exp(1j * (np.angle(residual) - np.angle(g[m])))
            total = residual + theta[m] * g[m]
            trace.record(sweep, m, abs(total) ** 2)
        trace.evaluations += g.size
        trace.evaluations_per_sweep.append(g.size)
        trace.sweeps = sweep
        current = abs(total) ** 2
        if _converged(previous, current, tol):
            trace.converged = True
            break
        previous = current

    if not trace.converged:
        logger.warning(f"Element-wise power solver stopped after {max_sweeps} sweeps without converging")
    return RisProfile.reflect(theta), trace


@dataclass(frozen=True, eq=False)
class MultiUserLinks:
    """
    Cascaded gains for K transmitter/user pairs.

    ``gains[k, j, m]`` links transmitter j to user k through element m; user k
    is served by transmitter k. ``transmit_side[k]`` marks users behind the
    surface, which STAR profiles serve by transmission.
    """

    gains: np.ndarray
    transmit_side: np.ndarray

    def __post_init__(self) -> None:
        if self.gains.ndim != 3 or self.gains.shape[0] != self.gains.shape[1]:
            raise DimensionMismatchError(f"gains must have shape (K, K, M), got {self.gains.shape}")
        if self.transmit_side.shape != (self.gains.shape[0],):
            raise DimensionMismatchError("transmit_side must have one entry per user")

    @property
    def users(self) -> int:
        return int(self.gains.shape[0])

    @property
    def element_count(self) -> int:
        return int(self.gains.shape[2])

    @classmethod
    def from_link_sets(cls, link_sets: Sequence[Sequence[CascadedLinkSet]]) -> "MultiUserLinks":
        """Stack ``link_sets[k][j]`` (single rx, single tx each) into one tensor."""
        gains = np.array([[ls.pair() for ls in row] for row in link_sets], dtype=complex)
        side = np.array([bool(row[k].rx_transmit_side[0]) for k, row in enumerate(link_sets)])
        return cls(gains=gains, transmit_side=side)


def multiuser_links(
    ris: RisGeometry,
    transmitters: Sequence[Vec3],
    users: Sequence[Vec3],
    wavelength: float,
    pathloss: Optional[PathlossModel] = None,
    far_field: bool = False,
) -> MultiUserLinks:
    """Near-field (or planar-approximation) links between every transmitter and every user."""
    if len(transmitters) != len(users):
        raise DimensionMismatchError(
            f"{len(transmitters)} transmitters for {len(users)} users; each user needs its own"
        )
    build = farfield_links if far_field else cascaded_links
    link_sets = [
        [build(single_antenna(tx), ris, single_antenna(user), wavelength, pathloss) for tx in transmitters]
        for user in users
    ]
    return MultiUserLinks.from_link_sets(link_sets)


def _check_rate_inputs(links: MultiUserLinks, weights: np.ndarray, noise: float, power: float) -> None:
    if weights.shape != (links.users,):
        raise DimensionMismatchError(f"{weights.size} weights for {links.users} users")
    if (weights <= 0).any():
        raise DomainError("weights must be positive")
    if not noise > 0:
        raise DomainError(f"noise power must be positive, got {noise}")
    if not power > 0:
        raise DomainError(f"transmit power must be positive, got {power}")


def _rates(H: np.ndarray, weights: np.ndarray, noise: float, power: float) -> np.ndarray:
    """Weighted sum rate for channel stacks ``H[..., k, j]``."""
    gain = np.abs(H) ** 2
    signal = power * np.diagonal(gain, axis1=-2, axis2=-1)
    interference = power * gain.sum(axis=-1) - signal
    sinr = signal / (interference + noise)
    return (weights * np.log2(1.0 + sinr)).sum(axis=-1)


def effective_channels(links: MultiUserLinks, profile: RisProfile) -> np.ndarray:
    """H[k, j] = Σ_m c_m(side of k) gains[k, j, m]."""
    if profile.element_count != links.element_count:
        raise DimensionMismatchError(
            f"profile has {profile.element_count} elements, links have {links.element_count}"
        )
    coeff = np.array([profile.coefficients(bool(side)) for side in links.transmit_side])
    return np.einsum("kjm,km->kj", links.gains, coeff)


def weighted_sum_rate(
    links: MultiUserLinks,
    profile: RisProfile,
    weights: Sequence[float],
    noise: float,
    power: float = 1.0,
) -> float:
    """Σ_k w_k log2(1 + SINR_k) with SINR_k = p|H_kk|² / (p Σ_{j≠k} |H_kj|² + σ²)."""
    weights = np.asarray(weights, dtype=float)
    _check_rate_inputs(links, weights, noise, power)
    return float(_rates(effective_channels(links, profile), weights, noise, power))


def _initial_profile(links: MultiUserLinks, star: bool, init: Optional[RisProfile]) -> RisProfile:
    if init is not None:
        if init.element_count != links.element_count:
            raise DimensionMismatchError(
                f"init profile has {init.element_count} elements, links have {links.element_count}"
            )
        if star and init.mode is ProfileMode.REFLECT_ONLY:
            theta = init.coefficients()
            amp = np.full(theta.size, math.sqrt(0.5))
            return RisProfile.star(amp, amp, np.angle(theta), np.angle(theta))
        if not star and init.mode is ProfileMode.STAR:
            raise DomainError("reflect-only solver cannot start from a STAR profile")
        return init
    n = links.element_count
    if star:
        amp = np.full(n, math.sqrt(0.5))
        return RisProfile.star(amp, amp, np.zeros(n), np.zeros(n))
    return RisProfile.identity(n)


def elementwise_sumrate(
    links: MultiUserLinks,
    weights: Sequence[float],
    noise: float,
    phase_grid: int = DEFAULT_PHASE_GRID,
    star: bool = False,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
    tol: float = DEFAULT_TOL,
    init: Optional[RisProfile] = None,
    power: float = 1.0,
):
    """
    Maximize the weighted sum rate by per-element grid search.

    Reflect-only: each element tries ``phase_grid`` phases. STAR: each element
    tries ``phase_grid`` transmit phases, ``phase_grid`` reflect phases and
    STAR_AMPLITUDE_STEPS energy splits a_t ∈ [0, 1], a_r = √(1 − a_t²). A
    candidate replaces the current coefficient only when strictly better, so
    the objective never decreases. Every candidate costs K user-rate terms.

    Returns:
        Tuple of (RisProfile, SweepTrace); ``trace.evaluations_per_sweep`` counts
        user-rate terms, N·Q·K for reflect-only
    """
    weights = np.asarray(weights, dtype=float)
    _check_rate_inputs(links, weights, noise, power)
    if links.users < 1:
        raise DomainError("at least one user is required")
    if phase_grid < 4:
        raise DomainError(f"phase grid must have at least 4 points, got {phase_grid}")
    if max_sweeps < 1:
        raise DomainError(f"max_sweeps must be >= 1, got {max_sweeps}")

    profile = _initial_profile(links, star, init)
    n, users = links.element_count, links.users
    phases = 2.0 * math.pi * np.arange(phase_grid) / phase_grid
    unit = np.exp(1j * phases)
    side = links.transmit_side

    if star:
        amp_t, amp_r = profile.amp_t.copy(), profile.amp_r.copy()
        phase_t, phase_r = profile.phase_t.copy(), profile.phase_r.copy()
        a_grid = np.linspace(0.0, 1.0, STAR_AMPLITUDE_STEPS)
        r_grid = np.sqrt(np.clip(1.0 - a_grid**2, 0.0, None))
    else:
        theta = profile.coefficients().astype(complex).copy()

    def coefficient_rows(m: int) -> np.ndarray:
        """Per-user coefficient of element m, shape (K,)."""
        if star:
            c_t = amp_t[m] * np.exp(1j * phase_t[m])
            c_r = amp_r[m] * np.exp(1j * phase_r[m])
            return np.where(side, c_t, c_r)
        return np.full(users, theta[m])

    H = effective_channels(links, profile)
    current = float(_rates(H, weights, noise, power))
    trace = SweepTrace()
    previous = current

    for sweep in range(1, max_sweeps + 1):
        evaluations = 0
        for m in range(n):
            g_m = links.gains[:, :, m]
            residual = H - coefficient_rows(m)[:, None] * g_m

            if star:
                c_t_now = amp_t[m] * np.exp(1j * phase_t[m])
                c_r_now = amp_r[m] * np.exp(1j * phase_r[m])
                # transmit phase, then reflect phase, then energy split
                cand_t = amp_t[m] * unit
                coeff = np.where(side[None, :], cand_t[:, None], c_r_now)
                values = _rates(residual[None] + coeff[:, :, None] * g_m[None], weights, noise, power)
                evaluations += phase_grid * users
                q = int(np.argmax(values))
                if values[q] > current:
                    phase_t[m], current = phases[q], float(values[q])
                    c_t_now = amp_t[m] * unit[q]

                cand_r = amp_r[m] * unit
                coeff = np.where(side[None, :], c_t_now, cand_r[:, None])
                values = _rates(residual[None] + coeff[:, :, None] * g_m[None], weights, noise, power)
                evaluations += phase_grid * users
                q = int(np.argmax(values))
                if values[q] > current:
                    phase_r[m], current = phases[q], float(values[q])
                    c_r_now = amp_r[m] * unit[q]

                cand_t = a_grid * np.exp(1j * phase_t[m])
                cand_r = r_grid * np.exp(1j * phase_r[m])
                coeff = np.where(side[None, :], cand_t[:, None], cand_r[:, None])
                values = _rates(residual[None] + coeff[:, :, None] * g_m[None], weights, noise, power)
                evaluations += STAR_AMPLITUDE_STEPS * users
                q = int(np.argmax(values))
                if values[q] > current:
                    amp_t[m], amp_r[m], current = a_grid[q], r_grid[q], float(values[q])
            else:
                values = _rates(residual[None] + unit[:, None, None] * g_m[None], weights, noise, power)
                evaluations += phase_grid * users
                q = int(np.argmax(values))
                if values[q] > current:
                    theta[m], current = unit[q], float(values[q])

            H = residual + coefficient_rows(m)[:, None] * g_m
            trace.record(sweep, m, current)

        trace.evaluations += evaluations
        trace.evaluations_per_sweep.append(evaluations)
        trace.sweeps = sweep
        if _converged(previous, current, tol):
            trace.converged = True
            break
        previous = current

    if not trace.converged:
        logger.warning(f"Element-wise sum-rate solver stopped after {max_sweeps} sweeps without converging")
    if star:
        return RisProfile.star(amp_t, amp_r, phase_t, phase_r), trace
    return RisProfile.reflect(theta), trace
