"""
Beam-training protocols against a pilot-measurement oracle.

The BS beam is assumed fixed toward the RIS, so each user sees per-element
cascaded gains g_m with the common BS→RIS phase pre-compensated. A protocol
measures codewords through the oracle, one pilot each, and picks the argmax.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.channel.geometry import RisGeometry, Vec3, polar_point, single_antenna
from src.channel.links import PathlossModel, RisProfile, UnitGain, cascaded_links
from src.exceptions import DomainError
from src.parallel import parallel_map
from src.training.codebook import (
    BRANCHING,
    Codeword,
    HierarchicalCodebook,
    angle_cells,
    angular_sweep_codebook,
    build_hierarchical,
    distance_cells,
    flat_polar_codebook,
    polar_column,
    total_layers_for,
)

logger = logging.getLogger(__name__)

GAIN_TOL = 1e-9


class MeasurementOracle:
    """
    Received-power measurements of one user, with optional complex Gaussian noise.

    Attributes:
        gains: Per-element cascaded gains seen by the user, shape (M,)
        noise_variance: Linear noise power added to every measurement
        pilots: Measurements taken so far
    """

    def __init__(
        self,
        gains: np.ndarray,
        noise_variance: float = 0.0,
        seed: Optional[Union[int, Sequence[int]]] = None,
    ):
        if noise_variance < 0:
            raise DomainError(f"noise variance must be non-negative, got {noise_variance}")
        self.gains = np.asarray(gains, dtype=complex).ravel()
        self.noise_variance = float(noise_variance)
        self.rng = np.random.default_rng(seed)
        self.pilots = 0

    @classmethod
    def from_placement(
        cls,
        ris: RisGeometry,
        bs: Vec3,
        user: Vec3,
        wavelength: float,
        pathloss: Optional[PathlossModel] = None,
        noise_variance: float = 0.0,
        seed: Optional[Union[int, Sequence[int]]] = None,
    ) -> "MeasurementOracle":
        links = cascaded_links(
            single_antenna(bs), ris, single_antenna(user), wavelength, pathloss or UnitGain()
        )
        k = 2.0 * math.pi / wavelength
        bs_phase = k * np.linalg.norm(ris.positions - bs.as_array()[None, :], axis=1)
        return cls(links.pair() * np.exp(1j * bs_phase), noise_variance, seed)

    @property
    def element_count(self) -> int:
        return int(self.gains.size)

    def noiseless_gain(self, profile: RisProfile) -> float:
        return float(abs(profile.coefficients() @ self.gains) ** 2)

    @property
    def truth_gain(self) -> float:
        """Co-phasing optimum (Σ|g_m|)² of the full array."""
        return float(np.abs(self.gains).sum() ** 2)

    def measure(self, codeword: Codeword) -> float:
        """One pilot: |Σ θ_m g_m + n|²."""
        if codeword.profile.element_count != self.element_count:
            raise DomainError(
                f"codeword has {codeword.profile.element_count} elements, oracle has {self.element_count}"
            )
        self.pilots += 1
        y = codeword.profile.coefficients() @ self.gains
        if self.noise_variance > 0:
            scale = math.sqrt(self.noise_variance / 2.0)
            y = y + scale * complex(self.rng.standard_normal(), self.rng.standard_normal())
        return float(abs(y) ** 2)


@dataclass(frozen=True, eq=False)
class TrainingResult:
    chosen: Codeword
    pilot_count: int
    achieved_gain: float
    truth_gain: float

    def __post_init__(self) -> None:
        if self.achieved_gain > self.truth_gain * (1.0 + GAIN_TOL):
            raise DomainError("achieved gain exceeds the co-phasing optimum")

    @property
    def gain_ratio(self) -> float:
        return self.achieved_gain / self.truth_gain if self.truth_gain > 0 else 0.0


def _best(oracle: MeasurementOracle, codewords: Sequence[Codeword]) -> Codeword:
    powers = [oracle.measure(cw) for cw in codewords]
    return codewords[int(np.argmax(powers))]


def _result(oracle: MeasurementOracle, chosen: Codeword, start: int) -> TrainingResult:
    return TrainingResult(
        chosen=chosen,
        pilot_count=oracle.pilots - start,
        achieved_gain=oracle.noiseless_gain(chosen.profile),
        truth_gain=oracle.truth_gain,
    )


def exhaustive_training(oracle: MeasurementOracle, codebook: Sequence[Codeword]) -> TrainingResult:
    """Measure every codeword of a flat codebook; pilots = len(codebook)."""
    if not codebook:
        raise DomainError("codebook is empty")
    start = oracle.pilots
    return _result(oracle, _best(oracle, codebook), start)


def two_phase_training(
    oracle: MeasurementOracle,
    geometry: RisGeometry,
    wavelength: float,
    angles: int,
    distances: int,
    d_min: float,
    d_max: float,
) -> TrainingResult:
    """
    Angle sweep with the full array, then a distance sweep at the winning angle.

    Pilots = angles + distances.
    """
    if angles < 1 or distances < 1:
        raise DomainError("two-phase training needs at least one angle and one distance")
    start = oracle.pilots
    angular = angular_sweep_codebook(geometry, wavelength, angles, d_min, d_max)
    best_angle = _best(oracle, angular)
    column = polar_column(
        geometry,
        wavelength,
        best_angle.region.angle_lo,
        best_angle.region.angle_hi,
        distances,
        d_min,
        d_max,
        first_index=best_angle.index * distances,
    )
    return _result(oracle, _best(oracle, column), start)


def hierarchical_training(oracle: MeasurementOracle, codebook: HierarchicalCodebook) -> TrainingResult:
    """
    Descend the codebook, measuring the children of the current winner at each layer.

    Pilots = BRANCHING·L1 + BRANCHING·D_b·L2.
    """
    start = oracle.pilots
    candidates = range(codebook.layer_size(1))
    chosen = None
    for layer in range(1, codebook.total_layers + 1):
        codewords = [codebook.codeword(layer, i) for i in candidates]
        chosen = _best(oracle, codewords)
        if layer < codebook.total_layers:
            candidates = codebook.children(layer, chosen.index)
    if chosen is None:
        raise DomainError("codebook has no layers")
    return _result(oracle, chosen, start)


def exhaustive_pilots(angles: int, distances: int) -> int:
    return angles * distances


def two_phase_pilots(angles: int, distances: int) -> int:
    return angles + distances


def hierarchical_pilots(stage1_layers: int, stage2_layers: int, distance_branches: int) -> int:
    return BRANCHING * stage1_layers + BRANCHING * distance_branches * stage2_layers


@dataclass(frozen=True)
class UserPlacement:
    angle: float
    distance: float
    point: Vec3


Protocol = Callable[[MeasurementOracle], TrainingResult]
OracleFactory = Callable[[int, int], Tuple[MeasurementOracle, UserPlacement]]


@dataclass
class TrainingScenario:
    """
    Single-user training setup: RIS, BS position, polar domain and sampling rules.

    ``on_grid`` users sit at the centers of the ``angles × distances`` grid
    cells; otherwise they are drawn uniformly in angle within ±``max_angle`` and
    uniformly in 1/d over [d_min, d_max).
    """

    ris: RisGeometry
    bs: Vec3
    wavelength: float
    d_min: float
    d_max: float
    angles: int
    distances: int
    noise_variance: float = 0.0
    on_grid: bool = True
    max_angle: float = math.pi / 3.0
    pathloss: Optional[PathlossModel] = None

    def sample_user(self, rng: np.random.Generator) -> UserPlacement:
        if self.on_grid:
            a_edges = angle_cells(self.angles)
            d_edges = distance_cells(self.distances, self.d_min, self.d_max)
            i = int(rng.integers(self.angles))
            j = int(rng.integers(self.distances))
            angle = float(np.arcsin((math.sin(a_edges[i]) + math.sin(a_edges[i + 1])) / 2.0))
            distance = 2.0 / (1.0 / d_edges[j] + 1.0 / d_edges[j + 1])
        else:
            angle = float(rng.uniform(-self.max_angle, self.max_angle))
            inv = rng.uniform(1.0 / self.d_max, 1.0 / self.d_min)
            distance = float(1.0 / inv)
        return UserPlacement(angle, distance, polar_point(self.ris, angle, distance))

    def oracle_factory(self, seed: int) -> OracleFactory:
        """Factory giving every (trial, stream) pair its own seeded user draw and noise stream."""

        def factory(trial: int, stream: int) -> Tuple[MeasurementOracle, UserPlacement]:
            user = self.sample_user(np.random.default_rng([seed, trial]))
            oracle = MeasurementOracle.from_placement(
                self.ris,
                self.bs,
                user.point,
                self.wavelength,
                self.pathloss,
                self.noise_variance,
                seed=[seed, trial, stream + 1],
            )
            return oracle, user

        return factory

    def hierarchical_codebook(
        self, stage1_layers: int, stage2_layers: int, distance_branches: int
    ) -> HierarchicalCodebook:
        return build_hierarchical(
            self.ris,
            self.wavelength,
            stage1_layers,
            stage2_layers,
            distance_branches,
            d_max=self.d_max,
            d_min=self.d_min,
        )

    def protocols(
        self,
        names: Sequence[str],
        stage1_layers: Optional[int] = None,
        stage2_layers: Optional[int] = None,
        distance_branches: int = 4,
    ) -> Dict[str, Protocol]:
        """Protocol callables by name: ``exhaustive``, ``two_phase``, ``hierarchical``."""
        built: Dict[str, Protocol] = {}
        for name in names:
            if name == "exhaustive":
                flat = flat_polar_codebook(
                    self.ris, self.wavelength, self.angles, self.distances, self.d_min, self.d_max
                )
                built[name] = lambda oracle, flat=flat: exhaustive_training(oracle, flat)
            elif name == "two_phase":
                built[name] = lambda oracle: two_phase_training(
                    oracle,
                    self.ris,
                    self.wavelength,
                    self.angles,
                    self.distances,
                    self.d_min,
                    self.d_max,
                )
            elif name == "hierarchical":
                if stage1_layers is None or stage2_layers is None:
                    raise DomainError("hierarchical training needs L1 and L2")
                codebook = self.hierarchical_codebook(stage1_layers, stage2_layers, distance_branches)
                built[name] = lambda oracle, cb=codebook: hierarchical_training(oracle, cb)
            else:
                raise DomainError(f"unknown training protocol {name!r}")
        return built


def evaluate_protocols(
    oracle_factory: OracleFactory,
    trials: int,
    protocols: Dict[str, Protocol],
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Monte-Carlo comparison of training protocols.

    Every protocol sees the same user in a given trial and draws its own noise
    stream from the factory.

    Args:
        oracle_factory: Maps (trial, stream) to a fresh oracle and the true user placement
        trials: Number of user placements
        protocols: Protocol callables by name

    Returns:
        Tuple of (per-trial rows, per-protocol summary)
    """
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    names = list(protocols)

    def run_trial(trial: int) -> List[Dict]:
        rows = []
        for stream, name in enumerate(names):
            oracle, user = oracle_factory(trial, stream)
            result = protocols[name](oracle)
            rows.append(
                {
                    "protocol": name,
                    "trial": trial,
                    "pilots": result.pilot_count,
                    "achieved_gain": result.achieved_gain,
                    "truth_gain": result.truth_gain,
                    "hit": bool(result.chosen.region.contains(user.angle, user.distance)),
                }
            )
        return rows

    logger.info(f"Evaluating {names} over {trials} trials")
    per_trial = [row for rows in parallel_map(run_trial, range(trials)) for row in rows]
    df = pd.DataFrame(per_trial, columns=["protocol", "trial", "pilots", "achieved_gain", "truth_gain", "hit"])
    df = df.sort_values(["protocol", "trial"], kind="stable").reset_index(drop=True)
    return df, summarize_trials(df)


def summarize_trials(df: pd.DataFrame) -> pd.DataFrame:
    """Mean pilots, mean gain ratio and misidentification rate per protocol."""
    ratio = df["achieved_gain"] / df["truth_gain"]
    summary = (
        df.assign(gain_ratio=ratio, miss=~df["hit"].astype(bool))
        .groupby("protocol", sort=True)
        .agg(
            trials=("trial", "count"),
            mean_pilots=("pilots", "mean"),
            mean_gain_ratio=("gain_ratio", "mean"),
            misidentification_rate=("miss", "mean"),
        )
        .reset_index()
    )
    for _, row in summary.iterrows():
        logger.info(
            f"  {row['protocol']}: pilots {row['mean_pilots']:.1f}, "
            f"gain ratio {row['mean_gain_ratio']:.4f}, miss rate {row['misidentification_rate']:.3f}"
        )
    return summary


def sweep_layer_splits(
    scenario: TrainingScenario,
    trials: int,
    seed: int,
    distance_branches: int = 4,
) -> pd.DataFrame:
    """
    Hierarchical training for every split L1 + L2 = L_t: pilots and mean gain ratio.

    ``L1``/``L2`` are the requested split; ``L1_effective``/``L2_effective`` the
    split the codebook uses once layers too small to resolve d_min stay angular.
    Pilots follow the effective split.
    """
    total = total_layers_for(scenario.ris.element_count)
    factory = scenario.oracle_factory(seed)
    rows = []
    for stage2 in range(total + 1):
        stage1 = total - stage2
        codebook = scenario.hierarchical_codebook(stage1, stage2, distance_branches)
        protocol = {"hierarchical": lambda oracle, cb=codebook: hierarchical_training(oracle, cb)}
        _, summary = evaluate_protocols(factory, trials, protocol)
        row = summary.iloc[0]
        rows.append(
            {
                "L1": stage1,
                "L2": stage2,
                "L1_effective": codebook.stage1_layers,
                "L2_effective": codebook.stage2_layers,
                "pilots": codebook.pilot_count,
                "mean_pilots": float(row["mean_pilots"]),
                "mean_gain_ratio": float(row["mean_gain_ratio"]),
                "misidentification_rate": float(row["misidentification_rate"]),
            }
        )
    return pd.DataFrame(rows)
