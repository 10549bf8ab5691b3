"""
End-to-end tests for the nfris command line.
"""

import os

import pytest
import yaml

from src.cli.main import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main, run
from src.cli.output import read_csv, read_manifest

GEOMETRY = {"lambda": 0.01, "spacing": 0.005, "rows": 4, "cols": 4}


def write_config(tmp_path, data, name="config.yaml") -> str:
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


@pytest.fixture
def region_config(tmp_path):
    return write_config(
        tmp_path,
        {
            "geometry": {**GEOMETRY, "lambda": 0.0107068735},
            "experiment": {"kind": "region", "aperture": 1.0, "distances": [186.0, 188.0]},
        },
    )


@pytest.fixture
def train_config(tmp_path):
    return write_config(
        tmp_path,
        {
            "seed": 5,
            "geometry": {**GEOMETRY, "rows": 1, "cols": 16},
            "placement": {"bs": [1.0, 0.0, 4.0]},
            "experiment": {
                "kind": "train",
                "protocols": ["exhaustive", "two_phase", "hierarchical"],
                "trials": 4,
                "angles": 16,
                "distance_samples": 4,
                "L1": 3,
                "L2": 1,
                "distance_branches": 2,
                "d_min": 0.2,
                "d_max": 2.0,
            },
        },
        name="train.yaml",
    )


class TestRegion:
    """Test the region subcommand."""

    def test_prints_rayleigh_distance(self, region_config, tmp_path, capsys):
        """Test a 1 m aperture at 28 GHz reports about 187 m and classifies both sides."""
        out = str(tmp_path / "out")
        assert run(region_config, "region", out=out) == EXIT_OK
        assert "Rayleigh distance: 186.79" in capsys.readouterr().out
        df = read_csv(os.path.join(out, "region.csv"))
        assert df["region"].tolist() == ["near_field", "far_field"]

    def test_manifest_without_seed(self, region_config, tmp_path):
        """Test deterministic runs record seed=none."""
        out = str(tmp_path / "out")
        run(region_config, "region", out=out)
        line = read_manifest(os.path.join(out, "region.csv"))
        assert line.startswith("# nfris version=")
        assert "seed=none command=region" in line


class TestExitCodes:
    """Test error reporting."""

    def test_missing_lambda(self, tmp_path, capsys):
        """Test a config error exits 2 and names the key."""
        geometry = {k: v for k, v in GEOMETRY.items() if k != "lambda"}
        path = write_config(tmp_path, {"geometry": geometry, "experiment": {"kind": "region"}})
        assert run(path, "region", out=str(tmp_path / "out")) == EXIT_CONFIG
        assert "geometry.lambda" in capsys.readouterr().err
        assert not os.path.exists(tmp_path / "out")

    def test_missing_placement(self, tmp_path, capsys):
        """Test a subcommand-specific requirement is a config error."""
        path = write_config(
            tmp_path, {"geometry": GEOMETRY, "experiment": {"kind": "power-scaling", "sizes": [2, 4]}}
        )
        assert run(path, "power-scaling", out=str(tmp_path / "out")) == EXIT_CONFIG
        assert "placement.tx" in capsys.readouterr().err

    def test_unwritable_output(self, region_config, tmp_path, capsys):
        """Test an output path that cannot be created exits 3."""
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        assert run(region_config, "region", out=str(blocker)) == EXIT_RUNTIME
        assert capsys.readouterr().err.startswith("error:")


class TestSubcommands:
    """Test each subcommand writes its result files."""

    def test_train_is_deterministic(self, train_config, tmp_path):
        """Test the same config and seed give byte-identical files."""
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        assert run(train_config, "train", out=first) == EXIT_OK
        assert run(train_config, "train", out=second) == EXIT_OK
        names = sorted(os.listdir(first))
        assert names == ["codebook.csv", "training.csv", "training_summary.csv"]
        assert names == sorted(os.listdir(second))
        for name in names:
            with open(os.path.join(first, name), "rb") as a, open(os.path.join(second, name), "rb") as b:
                assert a.read() == b.read()

    def test_seed_override(self, train_config, tmp_path):
        """Test --seed replaces the config seed in the manifest."""
        out = str(tmp_path / "out")
        assert run(train_config, "train", out=out, seed=99) == EXIT_OK
        assert "seed=99 " in read_manifest(os.path.join(out, "training.csv"))

    def test_power_scaling(self, tmp_path):
        """Test a patch sweep writes one row per size."""
        path = write_config(
            tmp_path,
            {
                "geometry": GEOMETRY,
                "placement": {"tx": [0.0, 0.0, 100.0], "rx": [0.0, 0.0, 0.5]},
                "experiment": {"kind": "power-scaling", "ris_kind": "patch", "sizes": [2, 4, 8]},
            },
        )
        out = str(tmp_path / "out")
        assert run(path, "power-scaling", out=out) == EXIT_OK
        df = read_csv(os.path.join(out, "power_scaling_patch.csv"))
        assert df["size_metric"].tolist() == [4, 16, 64]
        assert (df["pr_over_pt"].diff().dropna() > 0).all()

    def test_power_scaling_receivers_need_seed(self, tmp_path, capsys):
        """Test sampling comparison receivers without a seed exits with a config error."""
        path = write_config(
            tmp_path,
            {
                "geometry": GEOMETRY,
                "placement": {"tx": [0.0, 0.0, 100.0], "rx": [0.0, 0.0, 0.5]},
                "experiment": {
                    "kind": "power-scaling",
                    "ris_kind": "patch",
                    "sizes": [2, 4],
                    "compare_receivers": 2,
                },
            },
        )
        out = str(tmp_path / "out")
        assert run(path, "power-scaling", out=out) == EXIT_CONFIG
        assert "seed" in capsys.readouterr().err
        assert not os.path.exists(os.path.join(out, "power_scaling_patch.csv"))

    def test_edof(self, tmp_path):
        """Test one spectrum file per distance plus a summary."""
        path = write_config(
            tmp_path,
            {"geometry": GEOMETRY, "experiment": {"kind": "edof", "distances": [0.05, 5.0], "rx_antennas": 4}},
        )
        out = str(tmp_path / "out")
        assert run(path, "edof", out=out) == EXIT_OK
        summary = read_csv(os.path.join(out, "edof_summary.csv"))
        assert len(summary) == 2
        assert summary["effective_rank"].iloc[0] > summary["effective_rank"].iloc[1]
        assert os.path.exists(os.path.join(out, "edof_spectrum_1.csv"))

    def test_beamform(self, tmp_path):
        """Test the rate comparison, trace and profile files."""
        path = write_config(
            tmp_path,
            {
                "seed": 1,
                "geometry": GEOMETRY,
                "placement": {
                    "users": [[0.02, 0.0, 0.1], [0.05, 0.0, 0.3]],
                    "transmitters": [[-0.5, 0.0, 0.8], [-0.8, 0.0, 0.5]],
                },
                "experiment": {"kind": "beamform", "sizes": [16], "phase_grid": 8, "max_sweeps": 3},
            },
        )
        out = str(tmp_path / "out")
        assert run(path, "beamform", out=out) == EXIT_OK
        rates = read_csv(os.path.join(out, "rate_comparison.csv"))
        assert rates["near_rate"].iloc[0] >= rates["far_rate"].iloc[0]
        profile = read_csv(os.path.join(out, "beamform_profile.csv"))
        assert len(profile) == 16
        assert {"reflect_re", "reflect_im"} <= set(profile.columns)


class TestMain:
    """Test argument parsing."""

    def test_main_runs_subcommand(self, region_config, tmp_path):
        """Test argv dispatch to a subcommand."""
        assert main(["region", "--config", region_config, "--out", str(tmp_path / "o")]) == EXIT_OK

    def test_rejects_negative_seed(self, region_config):
        """Test seeds must be unsigned 64-bit integers."""
        with pytest.raises(SystemExit) as exc_info:
            main(["train", "--config", region_config, "--seed", "-1"])
        assert exc_info.value.code == 2

    def test_requires_config(self):
        """Test --config is mandatory."""
        with pytest.raises(SystemExit):
            main(["region"])
