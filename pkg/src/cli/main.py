"""
nfris command-line entry point.

Every subcommand reads one YAML config, validates it, runs the matching
analysis and writes CSV files (each starting with a run-manifest line) to the
output directory.

Usage:
    nfris region --config config/region.yaml
    nfris train --config config/train.yaml --seed 7 --out results/train
"""

import argparse
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from src.analysis.edof import (
    DEFAULT_THRESHOLD,
    OPERATOR_SAMPLES_PER_WAVELENGTH,
    OPERATOR_THRESHOLD,
    ReceiverPatch,
    ThresholdCount,
    edof_vs_distance,
    end_to_end_edof_bound,
    max_edof_prisms,
    metasurface_edof_scaling,
    regime_summary,
)
from src.analysis.power_scaling import (
    RisKind,
    ScalingSetup,
    compare_patch_metasurface,
    points_to_frame,
    power_scaling_sweep,
    sample_near_field_points,
    sweep_slope,
)
from src.beamforming.rate_experiment import RateExperiment, rate_experiment_details
from src.channel.geometry import (
    RisGeometry,
    Vec3,
    build_planar_array,
    rayleigh_distance,
    region_for_distance,
)
from src.channel.links import ProfileMode, RisProfile, get_pathloss_model
from src.channel.metasurface import DEFAULT_SAMPLES_PER_WAVELENGTH
from src.cli.config import COMMANDS, config_digest, load_config, validate_config
from src.cli.output import RunManifest, write_csv
from src.exceptions import ConfigError, NfrisError
from src.training.codebook import check_criteria
from src.training.protocols import (
    TrainingScenario,
    evaluate_protocols,
    sweep_layer_splits,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


class RunContext:
    """Validated config plus the output directory and manifest shared by one run."""

    def __init__(self, config: Dict[str, Any], command: str, out_dir: str):
        self.config = config
        self.command = command
        self.out_dir = out_dir
        self.seed: Optional[int] = config.get("seed")
        self.manifest = RunManifest(config_digest(config), self.seed, command)
        self.written: List[str] = []

    @property
    def geometry(self) -> Dict[str, Any]:
        return self.config["geometry"]

    @property
    def experiment(self) -> Dict[str, Any]:
        return self.config["experiment"]

    @property
    def placement(self) -> Dict[str, Any]:
        return self.config.get("placement", {})

    @property
    def wavelength(self) -> float:
        return float(self.geometry["lambda"])

    def ris(self) -> RisGeometry:
        g = self.geometry
        return build_planar_array(
            int(g["rows"]),
            int(g["cols"]),
            float(g["spacing"]),
            _vec(g.get("center", [0.0, 0.0, 0.0])),
            _vec(g.get("normal", [0.0, 0.0, 1.0])),
        )

    def require_placement(self, key: str) -> Vec3:
        if key not in self.placement:
            raise ConfigError(f"is required for {self.command}", f"placement.{key}")
        return _vec(self.placement[key])

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError(f"is required for {self.command} (or pass --seed)", "seed")
        return self.seed

    def write(self, df: pd.DataFrame, name: str) -> None:
        self.written.append(write_csv(df, os.path.join(self.out_dir, name), self.manifest))


def _vec(values) -> Vec3:
    return Vec3(*(float(v) for v in values))


def run_power_scaling(ctx: RunContext) -> None:
    exp = ctx.experiment
    setup = ScalingSetup(
        wavelength=ctx.wavelength,
        spacing=float(ctx.geometry["spacing"]),
        tx=ctx.require_placement("tx"),
        rx=ctx.require_placement("rx"),
        center=_vec(ctx.geometry.get("center", [0.0, 0.0, 0.0])),
        normal=_vec(ctx.geometry.get("normal", [0.0, 0.0, 1.0])),
        pathloss=exp.get("pathloss", "free_space"),
        samples_per_wavelength=int(exp.get("samples_per_wavelength", DEFAULT_SAMPLES_PER_WAVELENGTH)),
    )
    ris_kind = exp.get("ris_kind", "patch")
    kinds = [RisKind.PATCH, RisKind.METASURFACE] if ris_kind == "both" else [RisKind(ris_kind)]

    for kind in kinds:
        if kind is RisKind.METASURFACE:
            if "areas" not in exp:
                raise ConfigError("is required for metasurface sweeps", "experiment.areas")
            sizes = exp["areas"]
        else:
            sizes = exp["sizes"]
        points = power_scaling_sweep(setup, sizes, kind)
        logger.info(f"{kind.value}: top-decade log-log slope {sweep_slope(points):.4f}")
        ctx.write(points_to_frame(points), f"power_scaling_{kind.value}.csv")

    receivers = int(exp.get("compare_receivers", 0))
    if receivers > 0:
        ris = ctx.ris()
        points = sample_near_field_points(ris, ctx.wavelength, receivers, seed=ctx.require_seed())
        df = compare_patch_metasurface(
            ris, ctx.wavelength, points, samples_per_wavelength=setup.samples_per_wavelength
        )
        ctx.write(df, "patch_vs_metasurface.csv")

    if "far_rx" in exp:
        placements = {"near": setup, "far": replace(setup, rx=_vec(exp["far_rx"]))}
        ctx.write(regime_summary(placements, exp["sizes"]), "regime_summary.csv")


def run_edof(ctx: RunContext) -> None:
    exp = ctx.experiment
    ris = ctx.ris()
    wavelength = ctx.wavelength
    antennas = int(exp.get("rx_antennas", 4))
    rx_spacing = float(exp.get("rx_spacing", wavelength / 2.0))
    method = ThresholdCount(float(exp.get("threshold", DEFAULT_THRESHOLD)))
    rayleigh = rayleigh_distance(ris.aperture_diagonal, wavelength)

    results = edof_vs_distance(
        ris,
        wavelength,
        exp["distances"],
        antennas=antennas,
        rx_spacing=rx_spacing,
        angle=math.radians(float(exp.get("angle_deg", 0.0))),
        method=method,
    )
    rows = []
    for i, (distance, region, report) in enumerate(results):
        ctx.write(report.to_frame(), f"edof_spectrum_{i}.csv")
        rows.append(
            {
                "distance": distance,
                "distance_over_rayleigh": distance / rayleigh,
                "region": region.value,
                "effective_rank": report.effective_rank,
                "threshold_count": report.threshold_count,
                "tau": report.tau,
            }
        )
    ctx.write(pd.DataFrame(rows), "edof_summary.csv")

    if "scaling" in exp:
        sc = exp["scaling"]
        patch = ReceiverPatch(float(sc["rx_side"]), float(sc.get("rx_spacing", wavelength / 2.0)))
        scaling = metasurface_edof_scaling(
            sc["apertures"],
            sc["distances"],
            patch,
            wavelength,
            tau=float(sc.get("threshold", OPERATOR_THRESHOLD)),
            samples_per_wavelength=int(sc.get("samples_per_wavelength", OPERATOR_SAMPLES_PER_WAVELENGTH)),
        )
        ctx.write(scaling.points, "edof_scaling.csv")
        fit = pd.DataFrame(
            {
                "variable": ["area", "distance"],
                "exponent": [scaling.aperture_exponent, scaling.distance_exponent],
                "degenerate": [scaling.aperture_degenerate, scaling.distance_degenerate],
            }
        )
        ctx.write(fit, "edof_scaling_fit.csv")

    if "prism" in exp:
        p = exp["prism"]
        bound = max_edof_prisms(
            float(p["volume_rx"]),
            float(p["volume_tx"]),
            wavelength,
            float(p["distance"]),
            float(p["depth_tx"]),
            float(p["depth_rx"]),
        )
        logger.info(f"Prism EDoF bound: {bound:.4f}")
        ctx.write(pd.DataFrame([{**p, "lambda": wavelength, "max_edof": bound}]), "edof_prism_bound.csv")

    if "tx" in ctx.placement and "rx" in ctx.placement:
        tx = build_planar_array(1, antennas, rx_spacing, ctx.require_placement("tx"), ris.normal)
        rx = build_planar_array(1, antennas, rx_spacing, ctx.require_placement("rx"), ris.normal)
        hops = end_to_end_edof_bound(tx, ris, rx, wavelength, method)
        logger.info(f"End-to-end EDoF bound: {hops['bound']}")
        ctx.write(pd.DataFrame([hops]), "edof_end_to_end.csv")


def run_train(ctx: RunContext) -> None:
    exp = ctx.experiment
    ris = ctx.ris()
    scenario = TrainingScenario(
        ris=ris,
        bs=ctx.require_placement("bs"),
        wavelength=ctx.wavelength,
        d_min=float(exp["d_min"]),
        d_max=float(exp["d_max"]),
        angles=int(exp["angles"]),
        distances=int(exp["distance_samples"]),
        noise_variance=float(exp.get("noise_variance", 0.0)),
        on_grid=bool(exp.get("on_grid", True)),
        pathloss=get_pathloss_model(exp.get("pathloss", "unit")),
    )
    names = exp["protocols"]
    distance_branches = int(exp.get("distance_branches", 4))
    stage1, stage2 = exp.get("L1"), exp.get("L2")
    if "hierarchical" in names:
        for key, value in (("L1", stage1), ("L2", stage2)):
            if value is None:
                raise ConfigError("is required for hierarchical training", f"experiment.{key}")
        try:
            codebook = scenario.hierarchical_codebook(int(stage1), int(stage2), distance_branches)
        except ConfigError as e:
            raise ConfigError(str(e), "experiment.L1") from e
        violations = check_criteria(codebook)
        for violation in violations:
            logger.warning(f"Codebook criterion violated: {violation}")
        ctx.write(codebook.to_frame(), "codebook.csv")

    protocols = scenario.protocols(
        names,
        None if stage1 is None else int(stage1),
        None if stage2 is None else int(stage2),
        distance_branches,
    )
    trials, summary = evaluate_protocols(scenario.oracle_factory(ctx.seed), int(exp["trials"]), protocols)
    ctx.write(trials, "training.csv")
    ctx.write(summary, "training_summary.csv")

    if exp.get("split_sweep", False):
        splits = sweep_layer_splits(scenario, int(exp["trials"]), ctx.seed, distance_branches)
        ctx.write(splits, "training_splits.csv")


def run_beamform(ctx: RunContext) -> None:
    exp = ctx.experiment
    users = ctx.placement.get("users")
    transmitters = ctx.placement.get("transmitters")
    if not users:
        raise ConfigError("is required for beamform", "placement.users")
    if not transmitters:
        raise ConfigError("is required for beamform", "placement.transmitters")
    experiment = RateExperiment(
        wavelength=ctx.wavelength,
        spacing=float(ctx.geometry["spacing"]),
        sizes=[int(n) for n in exp["sizes"]],
        users=[_vec(u) for u in users],
        transmitters=[_vec(t) for t in transmitters],
        weights=exp.get("weights"),
        noise=float(exp.get("noise", 1e-12)),
        power=float(exp.get("power", 1.0)),
        phase_grid=int(exp.get("phase_grid", 64)),
        star=bool(exp.get("star", False)),
        max_sweeps=int(exp.get("max_sweeps", 50)),
        tol=float(exp.get("tol", 1e-6)),
        pathloss=exp.get("pathloss", "free_space"),
        center=_vec(ctx.geometry.get("center", [0.0, 0.0, 0.0])),
        normal=_vec(ctx.geometry.get("normal", [0.0, 0.0, 1.0])),
        init_seed=ctx.seed if exp.get("random_init", False) else None,
    )
    df, details = rate_experiment_details(experiment)
    ctx.write(df, "rate_comparison.csv")

    traces, profiles = [], []
    for n, (profile, trace) in details.items():
        traces.append(trace.to_frame().assign(n_elements=n))
        profiles.append(_profile_frame(profile).assign(n_elements=n))
    ctx.write(pd.concat(traces, ignore_index=True), "beamform_trace.csv")
    ctx.write(pd.concat(profiles, ignore_index=True), "beamform_profile.csv")


def _profile_frame(profile: RisProfile) -> pd.DataFrame:
    """Per-element coefficients as paired re/im columns."""
    columns: Dict[str, np.ndarray] = {"element": np.arange(profile.element_count)}
    sides = {"reflect": profile.coefficients(transmit_side=False)}
    if profile.mode is ProfileMode.STAR:
        sides["transmit"] = profile.coefficients(transmit_side=True)
    for side, coeffs in sides.items():
        columns[f"{side}_re"] = coeffs.real
        columns[f"{side}_im"] = coeffs.imag
    return pd.DataFrame(columns)


def run_region(ctx: RunContext) -> None:
    exp = ctx.experiment
    wavelength = ctx.wavelength
    aperture = float(exp["aperture"]) if "aperture" in exp else ctx.ris().aperture_diagonal
    rayleigh = rayleigh_distance(aperture, wavelength)
    print(f"Rayleigh distance: {rayleigh:.4f} m (aperture {aperture:.4g} m, lambda {wavelength:.6g} m)")

    row = {"aperture": aperture, "lambda": wavelength, "rayleigh_distance": rayleigh}
    distances = exp.get("distances", [])
    if distances:
        df = pd.DataFrame(
            [
                {**row, "distance": d, "region": region_for_distance(d, aperture, wavelength).value}
                for d in distances
            ]
        )
    else:
        df = pd.DataFrame([row])
    ctx.write(df, "region.csv")


HANDLERS: Dict[str, Callable[[RunContext], None]] = {
    "power-scaling": run_power_scaling,
    "edof": run_edof,
    "train": run_train,
    "beamform": run_beamform,
    "region": run_region,
}


def run(
    config_path: str,
    subcommand: str,
    out: Optional[str] = None,
    seed: Optional[int] = None,
) -> int:
    """
    Load, validate and run one experiment.

    Args:
        config_path: YAML config file
        subcommand: One of ``COMMANDS``
        out: Output directory (``output.dir`` from the config by default)
        seed: Overrides the config seed

    Returns:
        Exit status: 0 success, 2 config error, 3 runtime error
    """
    try:
        config = validate_config(load_config(config_path), subcommand, seed)
        out_dir = out or config.get("output", {}).get("dir", "results")
        ctx = RunContext(config, subcommand, out_dir)

        logger.info("=" * 80)
        logger.info(f"nfris {subcommand}: {config_path} (seed={ctx.seed}, sha256={ctx.manifest.config_sha256[:12]})")
        logger.info("=" * 80)
        HANDLERS[subcommand](ctx)
        logger.info(f"Wrote {len(ctx.written)} files to {out_dir}")
        return EXIT_OK
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NfrisError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def _seed(value: str) -> int:
    seed = int(value)
    if not 0 <= seed < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return seed


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nfris", description="Near-field RIS simulation experiments")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="YAML experiment config")
        sub.add_argument("--out", default=None, help="Output directory (overrides output.dir)")
        sub.add_argument("--seed", type=_seed, default=None, help="Seed (overrides config seed)")
        sub.add_argument("--log-level", default=None, choices=LOG_LEVELS, help="Overrides logging.level")
    return parser


def _log_level(args: argparse.Namespace) -> str:
    if args.log_level:
        return args.log_level
    try:
        level = load_config(args.config).get("logging", {}).get("level", "INFO")
    except (ConfigError, OSError, AttributeError):
        return "INFO"
    return level if level in LOG_LEVELS else "INFO"


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, _log_level(args)),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    return run(args.config, args.subcommand, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
