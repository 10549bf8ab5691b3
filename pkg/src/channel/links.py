"""
Cascaded Tx → RIS → Rx channels.

Per-element cascaded gains use exact spherical-wavefront distances (near-field
model) or a first-order expansion of those distances about the RIS center
(planar-wavefront, far-field model). A RisProfile collapses the element axis
into an end-to-end Rx × Tx ChannelMatrix.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Type

import numpy as np
from scipy.spatial.distance import cdist

from src.channel.geometry import RisGeometry, check_wavelength
from src.exceptions import DimensionMismatchError, DomainError, GeometryError

logger = logging.getLogger(__name__)

UNIT_MODULUS_TOL = 1e-12
STAR_ENERGY_TOL = 1e-12
MIN_SEPARATION_WAVELENGTHS = 0.1


class PathlossModel:
    """Real amplitude β of a cascaded link and of a single hop."""

    name = "base"
    # Physical models conserve energy, so |H|^2 > 1 marks the model as out of range.
    physical = False

    def cascaded(self, wavelength: float, d_rx: np.ndarray, d_tx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def single_hop(self, wavelength: float, distance: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class UnitGain(PathlossModel):
    """β = 1 everywhere; isolates the phase structure."""

    name = "unit"

    def cascaded(self, wavelength, d_rx, d_tx):
        return np.ones(np.broadcast(d_rx, d_tx).shape)

    def single_hop(self, wavelength, distance):
        return np.ones(np.shape(distance))


class FreeSpaceCascaded(PathlossModel):
    """Product of two Friis amplitudes: β = λ² / ((4π)² d_rx d_tx)."""

    name = "free_space"
    physical = True

    def cascaded(self, wavelength, d_rx, d_tx):
        return wavelength**2 / ((4.0 * math.pi) ** 2 * d_rx * d_tx)

    def single_hop(self, wavelength, distance):
        return wavelength / (4.0 * math.pi * np.asarray(distance))


PATHLOSS_MODELS: Dict[str, Type[PathlossModel]] = {
    UnitGain.name: UnitGain,
    FreeSpaceCascaded.name: FreeSpaceCascaded,
}


def get_pathloss_model(name: str) -> PathlossModel:
    try:
        return PATHLOSS_MODELS[name]()
    except KeyError:
        raise DomainError(
            f"unknown pathloss model {name!r}, expected one of {sorted(PATHLOSS_MODELS)}"
        ) from None


@dataclass(frozen=True, eq=False)
class CascadedLinkSet:
    """
    Cascaded gains ``gains[i, j, m]`` for Rx antenna i, Tx antenna j, RIS element m.

    ``rx_transmit_side[i]`` is True when Rx antenna i is on the opposite side of the
    RIS plane from the transmitter, i.e. it is served by STAR transmission.
    """

    gains: np.ndarray
    wavelength: float
    tx: RisGeometry
    ris: RisGeometry
    rx: RisGeometry
    rx_transmit_side: np.ndarray
    pathloss: PathlossModel

    def __post_init__(self) -> None:
        self.gains.setflags(write=False)

    @property
    def element_count(self) -> int:
        return int(self.gains.shape[2])

    @property
    def shape(self):
        return self.gains.shape

    def pair(self, rx_index: int = 0, tx_index: int = 0) -> np.ndarray:
        """Gains of one (rx, tx) pair, shape (M,)."""
        return self.gains[rx_index, tx_index, :]


class ProfileMode(Enum):
    REFLECT_ONLY = "reflect_only"
    STAR = "star"


@dataclass(frozen=True, eq=False)
class RisProfile:
    """
    Per-element RIS coefficients.

    Reflect-only profiles hold ``theta`` with |theta| = 1, or exactly 0 for an
    element that is switched off. STAR profiles hold transmit/reflect amplitudes
    and phases with a_t² + a_r² <= 1.
    """

    mode: ProfileMode
    theta: Optional[np.ndarray] = None
    amp_t: Optional[np.ndarray] = None
    amp_r: Optional[np.ndarray] = None
    phase_t: Optional[np.ndarray] = None
    phase_r: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.mode is ProfileMode.REFLECT_ONLY:
            if self.theta is None:
                raise DomainError("reflect-only profile needs theta")
            theta = np.asarray(self.theta, dtype=complex).ravel()
            modulus = np.abs(theta)
            bad = (np.abs(modulus - 1.0) > UNIT_MODULUS_TOL) & (modulus != 0.0)
            if bad.any():
                raise DomainError(
                    f"theta must be unit-modulus or 0, element {int(np.argmax(bad))} "
                    f"has |theta| = {modulus[bad][0]:.15g}"
                )
            object.__setattr__(self, "theta", theta)
            return

        arrays = [self.amp_t, self.amp_r, self.phase_t, self.phase_r]
        if any(a is None for a in arrays):
            raise DomainError("STAR profile needs amp_t, amp_r, phase_t and phase_r")
        amp_t, amp_r, phase_t, phase_r = (np.asarray(a, dtype=float).ravel() for a in arrays)
        if not (amp_t.size == amp_r.size == phase_t.size == phase_r.size):
            raise DimensionMismatchError("STAR profile arrays differ in length")
        if (amp_t < 0).any() or (amp_r < 0).any():
            raise DomainError("STAR amplitudes must be non-negative")
        if (amp_t**2 + amp_r**2 > 1.0 + STAR_ENERGY_TOL).any():
            raise DomainError("STAR energy split violated: a_t^2 + a_r^2 > 1")
        object.__setattr__(self, "amp_t", amp_t)
        object.__setattr__(self, "amp_r", amp_r)
        object.__setattr__(self, "phase_t", phase_t)
        object.__setattr__(self, "phase_r", phase_r)

    @classmethod
    def reflect(cls, theta) -> "RisProfile":
        return cls(ProfileMode.REFLECT_ONLY, theta=np.asarray(theta, dtype=complex))

    @classmethod
    def from_phases(cls, phases, mask: Optional[np.ndarray] = None) -> "RisProfile":
        """Unit-modulus profile from phases; elements outside ``mask`` are off."""
        theta = np.exp(1j * np.asarray(phases, dtype=float))
        if mask is not None:
            theta = np.where(np.asarray(mask, dtype=bool), theta, 0.0)
        return cls.reflect(theta)

    @classmethod
    def identity(cls, element_count: int) -> "RisProfile":
        return cls.reflect(np.ones(element_count, dtype=complex))

    @classmethod
    def star(cls, amp_t, amp_r, phase_t, phase_r) -> "RisProfile":
        return cls(
            ProfileMode.STAR, amp_t=amp_t, amp_r=amp_r, phase_t=phase_t, phase_r=phase_r
        )

    @property
    def element_count(self) -> int:
        if self.mode is ProfileMode.REFLECT_ONLY:
            return int(self.theta.size)
        return int(self.amp_t.size)

    @property
    def active_mask(self) -> np.ndarray:
        if self.mode is ProfileMode.REFLECT_ONLY:
            return self.theta != 0
        return (self.amp_t > 0) | (self.amp_r > 0)

    def coefficients(self, transmit_side: bool = False) -> np.ndarray:
        """Complex per-element coefficient applied to a receiver on the given side."""
        if self.mode is ProfileMode.REFLECT_ONLY:
            return self.theta
        if transmit_side:
            return self.amp_t * np.exp(1j * self.phase_t)
        return self.amp_r * np.exp(1j * self.phase_r)

    def rotated(self, phase: float) -> "RisProfile":
        """Same profile multiplied by the global unit scalar exp(j·phase)."""
        if self.mode is ProfileMode.REFLECT_ONLY:
            return RisProfile.reflect(self.theta * np.exp(1j * phase))
        return RisProfile.star(self.amp_t, self.amp_r, self.phase_t + phase, self.phase_r + phase)


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    """End-to-end Rx × Tx channel ``H``."""

    H: np.ndarray
    outside_validity: bool = False

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.H)):
            raise DomainError("channel matrix has non-finite entries")
        self.H.setflags(write=False)

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.H) ** 2


def _check_separation(distances: np.ndarray, wavelength: float, what: str) -> None:
    limit = MIN_SEPARATION_WAVELENGTHS * wavelength
    closest = float(distances.min())
    if closest <= limit:
        raise GeometryError(
            f"{what} antenna within {closest:.3e} m of a RIS element (limit {limit:.3e} m)"
        )


def _signed_side(ris: RisGeometry, points: np.ndarray) -> np.ndarray:
    rel = points - ris.center.as_array()[None, :]
    return np.sign(rel @ ris.normal.as_array())


def _transmit_side(tx: RisGeometry, ris: RisGeometry, rx: RisGeometry) -> np.ndarray:
    tx_side = _signed_side(ris, tx.center.as_array()[None, :])[0]
    return _signed_side(ris, rx.positions) * tx_side < 0


def cascaded_links(
    tx: RisGeometry,
    ris: RisGeometry,
    rx: RisGeometry,
    wavelength: float,
    pathloss: Optional[PathlossModel] = None,
) -> CascadedLinkSet:
    """
    Near-field cascaded gains β·exp(−j2π(‖r_i − s_m‖ + ‖s_m − t_j‖)/λ).

    Args:
        tx: Transmit antenna geometry (T antennas)
        ris: RIS geometry (M elements)
        rx: Receive antenna geometry (R antennas)
        wavelength: Carrier wavelength in meters
        pathloss: Amplitude model, FreeSpaceCascaded by default

    Returns:
        CascadedLinkSet with gains of shape (R, T, M)
    """
    wavelength = check_wavelength(wavelength)
    pathloss = pathloss or FreeSpaceCascaded()
    d_rx = cdist(rx.positions, ris.positions)
    d_tx = cdist(tx.positions, ris.positions)
    _check_separation(d_rx, wavelength, "rx")
    _check_separation(d_tx, wavelength, "tx")

    k = 2.0 * math.pi / wavelength
    path = d_rx[:, None, :] + d_tx[None, :, :]
    beta = pathloss.cascaded(wavelength, d_rx[:, None, :], d_tx[None, :, :])
    gains = beta * np.exp(-1j * k * path)

    return CascadedLinkSet(
        gains=gains,
        wavelength=wavelength,
        tx=tx,
        ris=ris,
        rx=rx,
        rx_transmit_side=_transmit_side(tx, ris, rx),
        pathloss=pathloss,
    )


def farfield_links(
    tx: RisGeometry,
    ris: RisGeometry,
    rx: RisGeometry,
    wavelength: float,
    pathloss: Optional[PathlossModel] = None,
) -> CascadedLinkSet:
    """
    Planar-wavefront approximation of ``cascaded_links``.

    Each distance is expanded to first order about the RIS center,
    ‖p − s_m‖ ≈ ‖p − c‖ − û·(s_m − c), and the amplitude of every element is
    taken center to center.
    """
    wavelength = check_wavelength(wavelength)
    pathloss = pathloss or FreeSpaceCascaded()
    _check_separation(cdist(rx.positions, ris.positions), wavelength, "rx")
    _check_separation(cdist(tx.positions, ris.positions), wavelength, "tx")

    c = ris.center.as_array()
    offsets = ris.positions - c[None, :]

    def expanded(points: np.ndarray):
        rel = points - c[None, :]
        d0 = np.linalg.norm(rel, axis=1)
        directions = rel / d0[:, None]
        return d0, d0[:, None] - directions @ offsets.T

    d0_rx, path_rx = expanded(rx.positions)
    d0_tx, path_tx = expanded(tx.positions)

    k = 2.0 * math.pi / wavelength
    path = path_rx[:, None, :] + path_tx[None, :, :]
    beta = pathloss.cascaded(wavelength, d0_rx[:, None, None], d0_tx[None, :, None])
    gains = beta * np.exp(-1j * k * path)

    return CascadedLinkSet(
        gains=gains,
        wavelength=wavelength,
        tx=tx,
        ris=ris,
        rx=rx,
        rx_transmit_side=_transmit_side(tx, ris, rx),
        pathloss=pathloss,
    )


def end_to_end(links: CascadedLinkSet, profile: RisProfile) -> ChannelMatrix:
    """
    Apply a RIS profile: H[i, j] = Σ_m θ_m gains[i, j, m].

    STAR profiles use the transmit coefficients for receivers behind the surface
    and the reflect coefficients otherwise.
    """
    if profile.element_count != links.element_count:
        raise DimensionMismatchError(
            f"profile has {profile.element_count} elements, links have {links.element_count}"
        )
    rows = []
    for i in range(links.gains.shape[0]):
        coeff = profile.coefficients(bool(links.rx_transmit_side[i]))
        rows.append(links.gains[i] @ coeff)
    H = np.array(rows, dtype=complex).reshape(links.gains.shape[:2])

    outside = bool(links.pathloss.physical and np.any(np.abs(H) ** 2 > 1.0))
    if outside:
        logger.warning(
            f"P_r/P_t = {float(np.max(np.abs(H) ** 2)):.4g} > 1: "
            f"placement is outside the validity range of the far-field path-loss terms"
        )
    return ChannelMatrix(H=H, outside_validity=outside)


def link_matrix(
    ris: RisGeometry,
    rx: RisGeometry,
    wavelength: float,
    pathloss: Optional[PathlossModel] = None,
) -> ChannelMatrix:
    """Single-hop LoS MIMO matrix from RIS elements to Rx antennas, shape (R, M)."""
    wavelength = check_wavelength(wavelength)
    pathloss = pathloss or FreeSpaceCascaded()
    distances = cdist(rx.positions, ris.positions)
    _check_separation(distances, wavelength, "rx")
    k = 2.0 * math.pi / wavelength
    H = pathloss.single_hop(wavelength, distances) * np.exp(-1j * k * distances)
    return ChannelMatrix(H=np.asarray(H, dtype=complex))
